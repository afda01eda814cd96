//! Class-incremental task streams.
//!
//! Every class is shuffled once and split into three disjoint partitions:
//! `test` (evaluation splits), `holdout` (unseen old-class samples mixed into
//! later pools) and `train` (pre-deployment data, or the novel part of the
//! pool at the task that introduces the class). Pools mix old and new samples
//! at the configured ratio; old samples are consumed without replacement so no
//! sample ever appears in two pools. Evaluation splits keep the same ratio and
//! are redrawn from test partitions at every task.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use rand::seq::{index, SliceRandom};
use serde::{Deserialize, Serialize};

use crate::detector::LabelOracle;
use crate::embedding::EmbeddingSet;
use crate::error::{Error, Result};
use crate::seeds;
use crate::{ClassId, SampleId};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StreamConfig {
    /// Order in which classes are introduced; empty means ascending ids.
    pub class_order: Vec<ClassId>,
    pub pretrain_class_count: usize,
    /// Novel classes per task.
    pub increment: usize,
    /// Defaults to as many tasks as the class order allows.
    pub num_tasks: Option<usize>,
    /// `[old, new]`.
    pub old_to_new_ratio: [u32; 2],
    /// Per-class fraction reserved as unseen old-class samples.
    pub holdout_fraction: f64,
    /// Per-class fraction reserved for evaluation.
    pub test_fraction: f64,
    /// Pool samples per novel class; defaults to the largest count the
    /// holdout partitions can balance at the configured ratio.
    pub new_per_class: Option<usize>,
    #[serde(skip)]
    pub seed: u64,
}

impl Default for StreamConfig {
    fn default() -> Self {
        Self {
            class_order: Vec::new(),
            pretrain_class_count: 2,
            increment: 2,
            num_tasks: None,
            old_to_new_ratio: [2, 1],
            holdout_fraction: 0.35,
            test_fraction: 0.15,
            new_per_class: None,
            seed: 0,
        }
    }
}

/// One task: an unlabeled pool (labels kept for the oracle) and an evaluation
/// split with the same old/new mix.
#[derive(Debug, Clone, PartialEq)]
pub struct Task {
    /// 1-based task index.
    pub index: usize,
    pub novel_classes: BTreeSet<ClassId>,
    /// Classes learned before this task.
    pub old_classes: BTreeSet<ClassId>,
    pub pool: EmbeddingSet,
    pub eval: EmbeddingSet,
}

impl Task {
    fn count_novel(&self, set: &EmbeddingSet) -> usize {
        set.labels()
            .map(|l| l.iter().filter(|c| self.novel_classes.contains(c)).count())
            .unwrap_or(0)
    }

    pub fn pool_new(&self) -> usize {
        self.count_novel(&self.pool)
    }

    pub fn pool_old(&self) -> usize {
        self.pool.n() - self.pool_new()
    }

    pub fn eval_new(&self) -> usize {
        self.count_novel(&self.eval)
    }

    pub fn eval_old(&self) -> usize {
        self.eval.n() - self.eval_new()
    }
}

/// Answers queries from the dataset's ground-truth labels.
#[derive(Debug, Clone, Default)]
pub struct GroundTruthOracle {
    labels: HashMap<SampleId, ClassId>,
}

impl GroundTruthOracle {
    pub fn from_set(set: &EmbeddingSet) -> Self {
        let labels = match set.labels() {
            Some(l) => set.ids().iter().copied().zip(l.iter().copied()).collect(),
            None => HashMap::new(),
        };
        Self { labels }
    }
}

impl LabelOracle for GroundTruthOracle {
    fn label(&self, id: SampleId) -> Result<ClassId> {
        self.labels.get(&id).copied().ok_or(Error::UnknownSample(id))
    }
}

#[derive(Debug, Clone)]
pub struct TaskStream {
    /// Labeled pre-deployment data (task 0 classes).
    pub pretrain: EmbeddingSet,
    pub pretrain_classes: BTreeSet<ClassId>,
    pub tasks: Vec<Task>,
    oracle: GroundTruthOracle,
}

impl TaskStream {
    pub fn oracle(&self) -> &GroundTruthOracle {
        &self.oracle
    }

    /// Ground-truth label of any sample in the dataset.
    pub fn oracle_label(&self, id: SampleId) -> Result<ClassId> {
        self.oracle.label(id)
    }
}

struct Partition {
    test: Vec<usize>,
    holdout: Vec<usize>,
    train: Vec<usize>,
}

/// Splits `total` across `classes` evenly; the remainder goes to the classes
/// with the most `remaining` capacity (lower id on ties).
fn allocate(
    total: usize,
    classes: &[ClassId],
    remaining: &BTreeMap<ClassId, usize>,
) -> Result<BTreeMap<ClassId, usize>> {
    let base = total / classes.len();
    let extra = total % classes.len();
    let mut by_room: Vec<ClassId> = classes.to_vec();
    by_room.sort_by(|a, b| remaining[b].cmp(&remaining[a]).then(a.cmp(b)));
    let mut out = BTreeMap::new();
    for (rank, &c) in by_room.iter().enumerate() {
        let want = base + usize::from(rank < extra);
        if want > remaining[&c] {
            return Err(Error::InsufficientSamples {
                class: c,
                needed: want,
                available: remaining[&c],
            });
        }
        out.insert(c, want);
    }
    Ok(out)
}

fn old_count(n_new: usize, ratio: [u32; 2]) -> usize {
    let (a, b) = (ratio[0] as usize, ratio[1] as usize);
    (n_new * a + b / 2) / b
}

/// Per-task old-sample draws for `per_class` novel samples per class.
fn plan_old_draws(
    schedule: &[(Vec<ClassId>, Vec<ClassId>)],
    per_class: usize,
    ratio: [u32; 2],
    holdout_sizes: &BTreeMap<ClassId, usize>,
) -> Result<Vec<BTreeMap<ClassId, usize>>> {
    let mut remaining = holdout_sizes.clone();
    let mut plan = Vec::with_capacity(schedule.len());
    for (old, novel) in schedule {
        let n_old = old_count(per_class * novel.len(), ratio);
        let draw = allocate(n_old, old, &remaining)?;
        for (c, k) in &draw {
            *remaining.get_mut(c).unwrap() -= k;
        }
        plan.push(draw);
    }
    Ok(plan)
}

pub fn build_stream(dataset: &EmbeddingSet, cfg: &StreamConfig) -> Result<TaskStream> {
    let labels = dataset
        .labels()
        .ok_or_else(|| Error::InvalidConfig("stream dataset must be labeled".into()))?;
    let [ratio_old, ratio_new] = cfg.old_to_new_ratio;
    if ratio_old == 0 || ratio_new == 0 {
        return Err(Error::InvalidRatio(ratio_old, ratio_new));
    }
    let fractions_ok = cfg.holdout_fraction > 0.0
        && cfg.holdout_fraction < 1.0
        && cfg.test_fraction > 0.0
        && cfg.test_fraction < 1.0
        && cfg.holdout_fraction + cfg.test_fraction < 1.0;
    if !fractions_ok {
        return Err(Error::InvalidConfig(format!(
            "holdout_fraction {} and test_fraction {} must be in (0, 1) with sum below 1",
            cfg.holdout_fraction, cfg.test_fraction
        )));
    }
    if cfg.pretrain_class_count == 0 || cfg.increment == 0 {
        return Err(Error::InvalidConfig(
            "pretrain_class_count and increment must be positive".into(),
        ));
    }

    let present = dataset.classes();
    let order: Vec<ClassId> = if cfg.class_order.is_empty() {
        present.iter().copied().collect()
    } else {
        let mut seen = BTreeSet::new();
        for c in &cfg.class_order {
            if !present.contains(c) {
                return Err(Error::InvalidConfig(format!("class {c} is not in the dataset")));
            }
            if !seen.insert(*c) {
                return Err(Error::DuplicateClass(*c));
            }
        }
        cfg.class_order.clone()
    };
    let max_tasks = order.len().saturating_sub(cfg.pretrain_class_count) / cfg.increment;
    let num_tasks = cfg.num_tasks.unwrap_or(max_tasks);
    if num_tasks == 0 {
        return Err(Error::InvalidConfig(format!(
            "no task of {} novel classes fits after {} pretrain classes out of {}",
            cfg.increment,
            cfg.pretrain_class_count,
            order.len()
        )));
    }
    if cfg.pretrain_class_count + num_tasks * cfg.increment > order.len() {
        return Err(Error::InvalidConfig(format!(
            "{} pretrain classes plus {num_tasks} tasks of {} exceed {} classes",
            cfg.pretrain_class_count,
            cfg.increment,
            order.len()
        )));
    }

    let mut rng = seeds::rng(cfg.seed);
    let mut parts: BTreeMap<ClassId, Partition> = BTreeMap::new();
    for &c in &order[..cfg.pretrain_class_count + num_tasks * cfg.increment] {
        let mut idx = dataset.class_indices(c);
        idx.shuffle(&mut rng);
        let n = idx.len();
        let n_test = (cfg.test_fraction * n as f64).round() as usize;
        let n_hold = (cfg.holdout_fraction * n as f64).round() as usize;
        if n_test == 0 || n_hold == 0 || n_test + n_hold >= n {
            return Err(Error::InsufficientSamples {
                class: c,
                needed: 3,
                available: n,
            });
        }
        let train = idx.split_off(n_test + n_hold);
        let holdout = idx.split_off(n_test);
        parts.insert(
            c,
            Partition {
                test: idx,
                holdout,
                train,
            },
        );
    }

    let pretrain_classes: Vec<ClassId> = order[..cfg.pretrain_class_count].to_vec();
    let mut schedule = Vec::with_capacity(num_tasks);
    for t in 0..num_tasks {
        let start = cfg.pretrain_class_count + t * cfg.increment;
        schedule.push((order[..start].to_vec(), order[start..start + cfg.increment].to_vec()));
    }

    let holdout_sizes: BTreeMap<ClassId, usize> =
        parts.iter().map(|(&c, p)| (c, p.holdout.len())).collect();
    let max_train = schedule
        .iter()
        .flat_map(|(_, novel)| novel.iter().map(|c| parts[c].train.len()))
        .min()
        .unwrap_or(0);
    let per_class = match cfg.new_per_class {
        Some(m) => {
            for c in schedule.iter().flat_map(|(_, novel)| novel) {
                if parts[c].train.len() < m {
                    return Err(Error::InsufficientSamples {
                        class: *c,
                        needed: m,
                        available: parts[c].train.len(),
                    });
                }
            }
            m
        }
        None => {
            // Largest feasible count; feasibility is monotone in the count.
            let feasible =
                |m: usize| plan_old_draws(&schedule, m, cfg.old_to_new_ratio, &holdout_sizes);
            if schedule.is_empty() {
                0
            } else {
                feasible(1)?;
                let (mut lo, mut hi) = (1, max_train);
                while lo < hi {
                    let mid = (lo + hi).div_ceil(2);
                    if feasible(mid).is_ok() {
                        lo = mid;
                    } else {
                        hi = mid - 1;
                    }
                }
                lo
            }
        }
    };
    let plan = plan_old_draws(&schedule, per_class, cfg.old_to_new_ratio, &holdout_sizes)?;

    let mut pretrain_idx: Vec<usize> = pretrain_classes
        .iter()
        .flat_map(|c| parts[c].train.iter().copied())
        .collect();
    pretrain_idx.sort_unstable();
    let pretrain = dataset.select(&pretrain_idx)?;

    let mut holdout_cursor: BTreeMap<ClassId, usize> = parts.keys().map(|&c| (c, 0)).collect();
    let mut tasks = Vec::with_capacity(num_tasks);
    for (t, ((old, novel), draw)) in schedule.iter().zip(&plan).enumerate() {
        let mut pool_idx: Vec<usize> = Vec::new();
        for c in novel {
            pool_idx.extend_from_slice(&parts[c].train[..per_class]);
        }
        for (c, &k) in draw {
            let cur = holdout_cursor.get_mut(c).unwrap();
            pool_idx.extend_from_slice(&parts[c].holdout[*cur..*cur + k]);
            *cur += k;
        }
        pool_idx.shuffle(&mut rng);

        let eval_idx = eval_split(&parts, old, novel, cfg.old_to_new_ratio, &mut rng)?;
        tasks.push(Task {
            index: t + 1,
            novel_classes: novel.iter().copied().collect(),
            old_classes: old.iter().copied().collect(),
            pool: dataset.select(&pool_idx)?,
            eval: dataset.select(&eval_idx)?,
        });
    }

    let oracle = GroundTruthOracle {
        labels: dataset.ids().iter().copied().zip(labels.iter().copied()).collect(),
    };
    Ok(TaskStream {
        pretrain,
        pretrain_classes: pretrain_classes.into_iter().collect(),
        tasks,
        oracle,
    })
}

/// Evaluation rows: `e` test samples per novel class and the matching old
/// count spread over the old classes, with `e` as large as the old test
/// partitions allow.
fn eval_split(
    parts: &BTreeMap<ClassId, Partition>,
    old: &[ClassId],
    novel: &[ClassId],
    ratio: [u32; 2],
    rng: &mut impl rand::Rng,
) -> Result<Vec<usize>> {
    let test_sizes: BTreeMap<ClassId, usize> = old.iter().map(|&c| (c, parts[&c].test.len())).collect();
    let mut e = novel.iter().map(|c| parts[c].test.len()).min().unwrap_or(0);
    let draw = loop {
        if e == 0 {
            let c = old[0];
            return Err(Error::InsufficientSamples {
                class: c,
                needed: 1,
                available: parts[&c].test.len(),
            });
        }
        match allocate(old_count(e * novel.len(), ratio), old, &test_sizes) {
            Ok(d) => break d,
            Err(_) => e -= 1,
        }
    };
    let mut idx: Vec<usize> = Vec::new();
    for c in novel {
        let test = &parts[c].test;
        idx.extend(index::sample(rng, test.len(), e).into_iter().map(|i| test[i]));
    }
    for (c, k) in draw {
        let test = &parts[&c].test;
        idx.extend(index::sample(rng, test.len(), k).into_iter().map(|i| test[i]));
    }
    idx.shuffle(rng);
    Ok(idx)
}
