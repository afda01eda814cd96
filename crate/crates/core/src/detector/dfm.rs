//! Per-task DFM baseline: one PCA transform for all pre-deployment data, then
//! one more per task fit on everything that task predicted as novel. Scores
//! are the minimum FRE over the stored transforms.

use std::collections::BTreeSet;

use rand::seq::index;

use super::select::compute_threshold;
use super::{split_validation, DetectorConfig, NoveltyScorer};
use crate::embedding::EmbeddingSet;
use crate::error::{Error, Result};
use crate::scoring::{score_dfm, ScoreVector};
use crate::seeds;
use crate::subspace::ClassSubspace;
use crate::SampleId;

#[derive(Debug, Clone)]
pub struct DfmDetector {
    config: DetectorConfig,
    task_bank: Vec<ClassSubspace>,
    holdout: EmbeddingSet,
}

/// Task bank as it stood before a task, for scoring its test split.
#[derive(Debug, Clone)]
pub struct DfmOutcome {
    pub task_bank: Vec<ClassSubspace>,
}

impl NoveltyScorer for DfmOutcome {
    fn score_test(&self, x: &EmbeddingSet) -> Result<ScoreVector> {
        score_dfm(&self.task_bank, x)
    }
}

#[derive(Debug, Clone)]
pub struct DfmTaskResult {
    pub predicted_novel_ids: BTreeSet<SampleId>,
    pub scores: ScoreVector,
    pub threshold: f64,
    pub held_out: Vec<SampleId>,
    pub outcome: DfmOutcome,
}

impl DfmDetector {
    /// Holds out the same validation split as [`DetectorState::pretrain`]
    /// for a given seed, then fits a single transform on the rest.
    ///
    /// [`DetectorState::pretrain`]: super::DetectorState::pretrain
    pub fn pretrain(pretrain: &EmbeddingSet, config: DetectorConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let (fit, holdout) = split_validation(pretrain, config.validation_fraction, seed)?;
        let mut rows = fit.values();
        let mut all = rows.next().ok_or(Error::EmptyInput("no pre-deployment classes"))?.clone();
        for r in rows {
            all.extend(r)?;
        }
        let base = ClassSubspace::fit(0, &all, config.retention)?;
        Ok(Self {
            config,
            task_bank: vec![base],
            holdout,
        })
    }

    pub fn task_bank(&self) -> &[ClassSubspace] {
        &self.task_bank
    }

    pub fn holdout(&self) -> &EmbeddingSet {
        &self.holdout
    }

    pub fn threshold(&self) -> Result<f64> {
        compute_threshold(&score_dfm(&self.task_bank, &self.holdout)?.values, self.config.k_std)
    }

    /// Flags pool samples above the threshold and stores one transform fit
    /// on them.
    pub fn run_task(&mut self, pool: &EmbeddingSet, seed: u64) -> Result<DfmTaskResult> {
        if pool.d() != self.holdout.d() {
            return Err(Error::DimensionMismatch {
                expected: self.holdout.d(),
                got: pool.d(),
            });
        }
        let outcome = DfmOutcome {
            task_bank: self.task_bank.clone(),
        };
        let scores = score_dfm(&self.task_bank, pool)?;
        let threshold = self.threshold()?;
        let above: Vec<usize> = (0..pool.n())
            .filter(|&i| scores.values[i] > threshold)
            .collect();

        let n_hold =
            ((self.config.novelty_holdout_fraction * above.len() as f64).ceil() as usize).min(above.len());
        let mut rng = seeds::rng(seeds::derive(seed, seeds::HOLDOUT));
        let mut hold_pos = index::sample(&mut rng, above.len(), n_hold).into_vec();
        hold_pos.sort_unstable();
        let held_rows: Vec<usize> = hold_pos.iter().map(|&p| above[p]).collect();
        let fit_rows: Vec<usize> = above
            .iter()
            .copied()
            .filter(|i| !held_rows.contains(i))
            .collect();

        if !fit_rows.is_empty() {
            let id = self.task_bank.len() as i32;
            let t = ClassSubspace::fit(id, &pool.select(&fit_rows)?, self.config.retention)?;
            self.task_bank.push(t);
        }
        if !held_rows.is_empty() {
            self.holdout.extend(&pool.select(&held_rows)?.without_labels())?;
        }

        Ok(DfmTaskResult {
            predicted_novel_ids: above.iter().map(|&i| pool.ids()[i]).collect(),
            held_out: held_rows.iter().map(|&i| pool.ids()[i]).collect(),
            scores,
            threshold,
            outcome,
        })
    }
}
