//! One task of the detector: the inner loop and the final absorption step.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use log::{debug, info};
use rand::seq::index;

use super::select::{
    compute_threshold, select_ambiguous, select_initial_queries, select_pseudo, select_random,
    select_top,
};
use super::{DetectorState, LabelOracle, Mode, NoveltyScorer};
use crate::embedding::EmbeddingSet;
use crate::error::{Error, Result};
use crate::pseudolabel::PseudoLabeler;
use crate::scoring::{score_initial, score_iter, ScoreVector, SubspaceBank};
use crate::seeds;
use crate::subspace::ClassSubspace;
use crate::{ClassId, SampleId};

/// Everything needed to score an independent test split after a task.
#[derive(Debug, Clone)]
pub struct TaskOutcome {
    /// Old-class transforms as they were when the task started.
    pub pre_task_bank: SubspaceBank,
    /// Final transforms of the classes discovered in the task.
    pub novel_bank: SubspaceBank,
    pub labeler: Option<PseudoLabeler>,
    /// Set in collapse mode: every sample is routed to this transform.
    pub collapse_class: Option<ClassId>,
    pub eps: f64,
}

impl TaskOutcome {
    fn assignments(&self, x: &EmbeddingSet) -> Result<Vec<ClassId>> {
        assign(self.collapse_class, self.labeler.as_ref(), x)
    }
}

impl NoveltyScorer for TaskOutcome {
    /// Ratio score against the pre-task bank when the task discovered
    /// classes, the initial score otherwise.
    fn score_test(&self, x: &EmbeddingSet) -> Result<ScoreVector> {
        if self.novel_bank.is_empty() {
            return score_initial(&self.pre_task_bank, x);
        }
        let assignments = self.assignments(x)?;
        score_iter(&self.pre_task_bank, &self.novel_bank, &assignments, x, self.eps, 0)
    }
}

#[derive(Debug, Clone)]
pub struct TaskResult {
    /// Samples predicted to belong to novel classes.
    pub predicted_novel_ids: BTreeSet<SampleId>,
    /// Scores of the last iteration that ran.
    pub final_scores: ScoreVector,
    /// Threshold those scores were compared against.
    pub threshold: f64,
    /// Class ids absorbed into the bank by this task.
    pub discovered: Vec<ClassId>,
    pub queries_spent: usize,
    pub iterations: usize,
    /// Active labels that revealed a novel class (bank id after collapse).
    pub queried: BTreeMap<SampleId, ClassId>,
    /// Queried samples that turned out to be from learned classes.
    pub confirmed_old: BTreeSet<SampleId>,
    /// Pseudo-labels of the last iteration.
    pub pseudo: BTreeMap<SampleId, ClassId>,
    /// Samples held out of the final fit into the validation reservoir.
    pub held_out: Vec<SampleId>,
    pub outcome: TaskOutcome,
}

fn assign(
    collapse: Option<ClassId>,
    labeler: Option<&PseudoLabeler>,
    x: &EmbeddingSet,
) -> Result<Vec<ClassId>> {
    match (collapse, labeler) {
        (Some(c), _) => Ok(vec![c; x.n()]),
        (None, Some(l)) => l.predict(x),
        (None, None) => Err(Error::EmptyClassSet),
    }
}

struct Session<'a> {
    state: &'a DetectorState,
    pool: &'a EmbeddingSet,
    oracle: &'a dyn LabelOracle,
    mode: Mode,
    position: HashMap<SampleId, usize>,
    queried: BTreeMap<SampleId, ClassId>,
    confirmed_old: BTreeSet<SampleId>,
    pseudo: BTreeMap<SampleId, ClassId>,
    discovered: BTreeSet<ClassId>,
    collapse_class: Option<ClassId>,
    aliases: BTreeMap<ClassId, ClassId>,
    novel_bank: SubspaceBank,
    labeler: Option<PseudoLabeler>,
    budget_left: usize,
    spent: usize,
    labeler_seed: u64,
}

impl Session<'_> {
    fn excluded(&self) -> BTreeSet<SampleId> {
        self.queried
            .keys()
            .chain(self.confirmed_old.iter())
            .copied()
            .collect()
    }

    /// Sends `ids` to the oracle, sorting answers into old and novel.
    fn ask(&mut self, ids: &[SampleId]) -> Result<()> {
        for &id in ids {
            if self.budget_left == 0 {
                break;
            }
            let label = self.oracle.label(id)?;
            self.budget_left -= 1;
            self.spent += 1;
            if self.state.is_known(label) {
                self.confirmed_old.insert(id);
                continue;
            }
            let class = if self.mode == Mode::CollapseOneClass {
                let c = *self.collapse_class.get_or_insert(label);
                if c != label {
                    self.aliases.insert(label, c);
                }
                c
            } else {
                label
            };
            self.queried.insert(id, class);
            self.discovered.insert(class);
        }
        Ok(())
    }

    fn assignments(&self, x: &EmbeddingSet) -> Result<Vec<ClassId>> {
        assign(self.collapse_class, self.labeler.as_ref(), x)
    }

    /// Retrains the labeler and refits the novel transforms on `labels`.
    fn refit(&mut self, labels: &BTreeMap<SampleId, ClassId>) -> Result<()> {
        let cfg = &self.state.config;
        let mut by_class: BTreeMap<ClassId, Vec<usize>> = BTreeMap::new();
        for (id, &c) in labels {
            by_class.entry(c).or_default().push(self.position[id]);
        }
        let mut bank = SubspaceBank::new();
        for (&c, idx) in &by_class {
            bank.insert(ClassSubspace::fit(c, &self.pool.select(idx)?, cfg.retention)?);
        }
        self.novel_bank = bank;

        if self.collapse_class.is_none() {
            let classes: Vec<ClassId> = self.discovered.iter().copied().collect();
            let idx: Vec<usize> = labels.keys().map(|id| self.position[id]).collect();
            let y: Vec<ClassId> = labels.values().copied().collect();
            let x = self.pool.select(&idx)?;
            let mut train = cfg.pseudolabel.clone();
            train.seed = self.labeler_seed;
            let init = PseudoLabeler::init(&classes, self.pool.d(), self.labeler_seed)?;
            self.labeler = Some(init.train(&x, &y, &train)?);
        }
        Ok(())
    }

    fn fit_labels(&self) -> BTreeMap<SampleId, ClassId> {
        let mut labels = self.queried.clone();
        labels.extend(self.pseudo.iter().map(|(&k, &v)| (k, v)));
        labels
    }

    fn select_queries(
        &self,
        scores: &ScoreVector,
        threshold: f64,
        allowance: usize,
        seed: u64,
    ) -> Vec<SampleId> {
        let exclude = self.excluded();
        match self.mode {
            Mode::SupTop => select_top(scores, allowance, &exclude),
            Mode::SupRand => select_random(scores, allowance, &exclude, seed),
            _ => select_ambiguous(scores, threshold, allowance, &exclude),
        }
    }
}

/// Allowance at inner iteration `iter >= 1`: the remaining budget spread
/// evenly over the remaining iterations, rounding up.
fn iteration_allowance(budget_left: usize, iter: usize, max_iters: usize) -> usize {
    let remaining = max_iters.saturating_sub(iter).max(1);
    budget_left.div_ceil(remaining)
}

impl DetectorState {
    /// Runs one task on the unlabeled `pool` and absorbs what it discovers.
    ///
    /// On error the state is left untouched.
    pub fn run_task(
        &mut self,
        pool: &EmbeddingSet,
        oracle: &dyn LabelOracle,
        budget: usize,
        mode: Mode,
        seed: u64,
    ) -> Result<TaskResult> {
        if budget > pool.n() {
            return Err(Error::BudgetExceedsPool {
                budget,
                pool: pool.n(),
            });
        }
        if pool.d() != self.holdout.d() {
            return Err(Error::DimensionMismatch {
                expected: self.holdout.d(),
                got: pool.d(),
            });
        }
        let cfg = self.config.clone();
        let frozen = self.old_bank.clone();
        let query_seed = seeds::derive(seed, seeds::QUERY);

        let mut session = Session {
            state: self,
            pool,
            oracle,
            mode,
            position: pool.ids().iter().enumerate().map(|(i, &id)| (id, i)).collect(),
            queried: BTreeMap::new(),
            confirmed_old: BTreeSet::new(),
            pseudo: BTreeMap::new(),
            discovered: BTreeSet::new(),
            collapse_class: None,
            aliases: BTreeMap::new(),
            novel_bank: SubspaceBank::new(),
            labeler: None,
            budget_left: budget,
            spent: 0,
            labeler_seed: seeds::derive(seed, seeds::LABELER),
        };

        // i = 0: old-class score only.
        let s0 = score_initial(&frozen, pool)?;
        let t0 = compute_threshold(&score_initial(&frozen, &self.holdout)?.values, cfg.k_std)?;
        let mut scores = s0.clone();
        let mut threshold = t0;
        let mut iterations = 1;

        if s0.values.iter().any(|&v| v > t0) {
            let b0 = match mode {
                Mode::NoIters => budget,
                _ => ((cfg.initial_budget_share * budget as f64).ceil() as usize).min(budget),
            };
            let q = select_initial_queries(&s0, b0, query_seed);
            session.ask(&q)?;
            info!(
                "event=iteration iter=0 queried={} spent={} budget_left={} discovered={:?} threshold={t0:.6}",
                q.len(),
                session.spent,
                session.budget_left,
                session.discovered
            );
            if !session.discovered.is_empty() {
                let labels = session.fit_labels();
                session.refit(&labels)?;
            }

            let mut previous_pseudo: BTreeMap<SampleId, ClassId> = BTreeMap::new();
            let mut iter = 1;
            while iter < cfg.max_iters {
                iterations = iter + 1;
                let iter_seed = seeds::derive(query_seed, iter as u64);

                if session.discovered.is_empty() {
                    // Nothing novel found yet: keep querying on the initial score.
                    if session.budget_left == 0 || mode == Mode::NoIters {
                        break;
                    }
                    let exclude = session.excluded();
                    if !s0.iter().any(|(id, v)| v > t0 && !exclude.contains(&id)) {
                        break;
                    }
                    let allowance = iteration_allowance(session.budget_left, iter, cfg.max_iters);
                    let q = session.select_queries(&s0, t0, allowance, iter_seed);
                    if q.is_empty() {
                        break;
                    }
                    session.ask(&q)?;
                    info!(
                        "event=iteration iter={iter} queried={} spent={} budget_left={} discovered={:?}",
                        q.len(),
                        session.spent,
                        session.budget_left,
                        session.discovered
                    );
                    if !session.discovered.is_empty() {
                        let labels = session.fit_labels();
                        session.refit(&labels)?;
                    }
                    iter += 1;
                    continue;
                }

                let assignments = session.assignments(pool)?;
                scores = score_iter(&frozen, &session.novel_bank, &assignments, pool, cfg.eps, iter)?;
                threshold = if cfg.recalibrate_threshold {
                    let ha = session.assignments(&self.holdout)?;
                    let hs =
                        score_iter(&frozen, &session.novel_bank, &ha, &self.holdout, cfg.eps, iter)?;
                    compute_threshold(&hs.values, cfg.k_std)?
                } else {
                    t0
                };
                let any_above = scores
                    .iter()
                    .any(|(id, v)| v > threshold && !session.confirmed_old.contains(&id));
                if !any_above {
                    debug!("iter={iter} no sample above threshold {threshold:.6}; stopping");
                    break;
                }

                let allowance = iteration_allowance(session.budget_left, iter, cfg.max_iters);
                let q = session.select_queries(&scores, threshold, allowance, iter_seed);
                session.ask(&q)?;

                let exclude = session.excluded();
                session.pseudo = if mode == Mode::NoPseudo {
                    BTreeMap::new()
                } else {
                    let position = &session.position;
                    select_pseudo(&scores, threshold, cfg.alpha, &exclude)
                        .into_iter()
                        .map(|id| (id, assignments[position[&id]]))
                        .collect()
                };
                let labels = session.fit_labels();
                session.refit(&labels)?;
                info!(
                    "event=iteration iter={iter} queried={} pseudo={} spent={} budget_left={} discovered={:?} threshold={threshold:.6}",
                    q.len(),
                    session.pseudo.len(),
                    session.spent,
                    session.budget_left,
                    session.discovered
                );

                if mode == Mode::NoIters {
                    break;
                }
                if session.budget_left == 0 && session.pseudo == previous_pseudo {
                    break;
                }
                previous_pseudo = session.pseudo.clone();
                iter += 1;
            }
        }

        if session.discovered.is_empty() {
            info!(
                "event=task_done novel=0 spent={} iterations={iterations}",
                session.spent
            );
            return Ok(TaskResult {
                predicted_novel_ids: BTreeSet::new(),
                final_scores: scores,
                threshold,
                discovered: Vec::new(),
                queries_spent: session.spent,
                iterations,
                queried: session.queried,
                confirmed_old: session.confirmed_old,
                pseudo: BTreeMap::new(),
                held_out: Vec::new(),
                outcome: TaskOutcome {
                    pre_task_bank: frozen,
                    novel_bank: SubspaceBank::new(),
                    labeler: None,
                    collapse_class: None,
                    eps: cfg.eps,
                },
            });
        }

        // Finalize: predicted set, validation hold-out, permanent transforms.
        let mut predicted: BTreeSet<SampleId> = session.queried.keys().copied().collect();
        predicted.extend(session.pseudo.keys().copied());
        predicted.extend(
            scores
                .iter()
                .filter(|(id, v)| *v > threshold && !session.confirmed_old.contains(id))
                .map(|(id, _)| id),
        );

        let candidates: Vec<SampleId> = predicted
            .iter()
            .copied()
            .filter(|id| !session.queried.contains_key(id))
            .collect();
        let n_hold = ((cfg.novelty_holdout_fraction * predicted.len() as f64).ceil() as usize)
            .min(candidates.len());
        let mut hold_rng = seeds::rng(seeds::derive(seed, seeds::HOLDOUT));
        let mut held_out: Vec<SampleId> = index::sample(&mut hold_rng, candidates.len(), n_hold)
            .into_iter()
            .map(|i| candidates[i])
            .collect();
        held_out.sort_unstable();

        let mut labels = session.fit_labels();
        for id in &held_out {
            labels.remove(id);
        }
        session.refit(&labels)?;

        let outcome = TaskOutcome {
            pre_task_bank: frozen,
            novel_bank: session.novel_bank.clone(),
            labeler: session.labeler.clone(),
            collapse_class: session.collapse_class,
            eps: cfg.eps,
        };
        let discovered: Vec<ClassId> = session.novel_bank.class_ids().collect();
        let held_rows: Vec<usize> = held_out.iter().map(|id| session.position[id]).collect();
        let Session {
            queried,
            confirmed_old,
            pseudo,
            aliases,
            novel_bank,
            spent,
            ..
        } = session;

        for s in novel_bank.iter() {
            self.old_bank.insert(s.clone());
        }
        self.aliases.extend(aliases);
        if !held_rows.is_empty() {
            self.holdout.extend(&pool.select(&held_rows)?.without_labels())?;
        }

        info!(
            "event=task_done novel={} discovered={discovered:?} spent={spent} iterations={iterations} held_out={}",
            predicted.len(),
            held_out.len()
        );
        Ok(TaskResult {
            predicted_novel_ids: predicted,
            final_scores: scores,
            threshold,
            discovered,
            queries_spent: spent,
            iterations,
            queried,
            confirmed_old,
            pseudo,
            held_out,
            outcome,
        })
    }
}
