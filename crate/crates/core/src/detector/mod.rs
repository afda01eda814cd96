//! The continual novelty detector.
//!
//! [`DetectorState`] owns the bank of learned-class subspaces and a reservoir
//! of in-distribution validation embeddings used to calibrate the decision
//! threshold. [`DetectorState::run_task`] executes the per-task inner loop
//! (score, query, pseudo-label, refit) and absorbs the discovered classes.
//! [`DfmDetector`] is the per-task single-transform baseline.

mod dfm;
mod select;
mod task;

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

pub use dfm::{DfmDetector, DfmOutcome, DfmTaskResult};
pub use select::{
    budget_for_fraction, compute_threshold, select_ambiguous, select_initial_queries,
    select_pseudo, select_random, select_top,
};
pub use task::{TaskOutcome, TaskResult};

use crate::embedding::EmbeddingSet;
use crate::error::{Error, Result};
use crate::pseudolabel::TrainConfig;
use crate::scoring::{score_initial, ScoreVector, SubspaceBank};
use crate::seeds;
use crate::subspace::{ClassSubspace, DEFAULT_RETENTION};
use crate::{ClassId, SampleId};

/// Answers active queries with a sample's class.
pub trait LabelOracle {
    fn label(&self, id: SampleId) -> Result<ClassId>;
}

impl<F> LabelOracle for F
where
    F: Fn(SampleId) -> Result<ClassId>,
{
    fn label(&self, id: SampleId) -> Result<ClassId> {
        self(id)
    }
}

impl LabelOracle for HashMap<SampleId, ClassId> {
    fn label(&self, id: SampleId) -> Result<ClassId> {
        self.get(&id).copied().ok_or(Error::UnknownSample(id))
    }
}

/// Anything that can produce novelty scores for an evaluation split.
pub trait NoveltyScorer {
    fn score_test(&self, x: &EmbeddingSet) -> Result<ScoreVector>;
}

/// Variants of the per-task loop.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum Mode {
    /// Iterative scoring with ambiguity queries and pseudo-labels.
    #[default]
    Default,
    /// Whole budget at the first iteration, pseudo-label once.
    NoIters,
    /// Novel transforms fit from actively labeled samples only.
    NoPseudo,
    /// Query the highest scores instead of the most ambiguous.
    SupTop,
    /// Query uniformly among unqueried samples.
    SupRand,
    /// All novelty treated as one class, no pseudo-labeler.
    CollapseOneClass,
}

/// A detection method as named in configs and on the command line: a loop
/// [`Mode`] or the per-task DFM baseline.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Method {
    Conclad(Mode),
    Dfm,
}

impl Default for Method {
    fn default() -> Self {
        Method::Conclad(Mode::Default)
    }
}

impl Mode {
    pub const ALL: [Mode; 6] = [
        Mode::Default,
        Mode::NoIters,
        Mode::NoPseudo,
        Mode::SupTop,
        Mode::SupRand,
        Mode::CollapseOneClass,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Mode::Default => "default",
            Mode::NoIters => "no_iters",
            Mode::NoPseudo => "no_pseudo",
            Mode::SupTop => "sup_top",
            Mode::SupRand => "sup_rand",
            Mode::CollapseOneClass => "collapse_one_class",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Method::Conclad(m) => m.fmt(f),
            Method::Dfm => f.write_str("dfm"),
        }
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "dfm" {
            return Ok(Method::Dfm);
        }
        Mode::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .map(Method::Conclad)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown mode {s:?}")))
    }
}

impl TryFrom<String> for Method {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Method> for String {
    fn from(m: Method) -> Self {
        m.to_string()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectorConfig {
    /// Labeling budget as a fraction of each task's pool.
    pub budget_fraction: f64,
    /// Fraction of above-threshold samples pseudo-labeled per iteration.
    pub alpha: f64,
    /// Standard deviations above the validation mean for the threshold.
    pub k_std: f64,
    pub retention: f64,
    pub eps: f64,
    /// Total inner iterations, the initial one included.
    pub max_iters: usize,
    /// Share of the budget spent at the first iteration.
    pub initial_budget_share: f64,
    /// Recalibrate the threshold on validation ratio scores at every
    /// iteration; when false the initial-score threshold is reused.
    pub recalibrate_threshold: bool,
    /// Per-class fraction of pre-deployment data held out for validation.
    pub validation_fraction: f64,
    /// Fraction of each task's novelty predictions held out of the final fit
    /// and added to the validation reservoir.
    pub novelty_holdout_fraction: f64,
    pub mode: Method,
    /// Read from the config's own `[pseudolabel]` section.
    #[serde(skip)]
    pub pseudolabel: TrainConfig,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        Self {
            budget_fraction: 0.0125,
            alpha: 0.20,
            k_std: 2.0,
            retention: DEFAULT_RETENTION,
            eps: crate::scoring::DEFAULT_EPS,
            max_iters: 6,
            initial_budget_share: 0.25,
            recalibrate_threshold: true,
            validation_fraction: 0.10,
            novelty_holdout_fraction: 0.10,
            mode: Method::default(),
            pseudolabel: TrainConfig::default(),
        }
    }
}

impl DetectorConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: String| Err(Error::InvalidConfig(what));
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return bad(format!("alpha must lie in (0, 1), got {}", self.alpha));
        }
        if !(self.k_std >= 0.0) {
            return bad(format!("k_std must be >= 0, got {}", self.k_std));
        }
        if !(self.retention > 0.0 && self.retention <= 1.0) {
            return bad(format!("retention must lie in (0, 1], got {}", self.retention));
        }
        if !(self.eps > 0.0) {
            return bad(format!("eps must be positive, got {}", self.eps));
        }
        if self.max_iters == 0 {
            return bad("max_iters must be at least 1".into());
        }
        if !(0.0..=1.0).contains(&self.budget_fraction) {
            return bad(format!("budget_fraction out of range: {}", self.budget_fraction));
        }
        if !(0.0..=1.0).contains(&self.initial_budget_share) {
            return bad(format!(
                "initial_budget_share out of range: {}",
                self.initial_budget_share
            ));
        }
        if !(self.validation_fraction > 0.0 && self.validation_fraction < 1.0) {
            return bad(format!(
                "validation_fraction must lie in (0, 1), got {}",
                self.validation_fraction
            ));
        }
        if !(0.0..1.0).contains(&self.novelty_holdout_fraction) {
            return bad(format!(
                "novelty_holdout_fraction must lie in [0, 1), got {}",
                self.novelty_holdout_fraction
            ));
        }
        self.pseudolabel.validate()
    }
}

/// Persistent detector: learned-class transforms plus validation reservoir.
#[derive(Debug, Clone)]
pub struct DetectorState {
    config: DetectorConfig,
    old_bank: SubspaceBank,
    holdout: EmbeddingSet,
    /// True labels absorbed under another class's transform (collapse mode).
    aliases: BTreeMap<ClassId, ClassId>,
}

impl DetectorState {
    /// Fits one transform per pre-deployment class after holding out
    /// `validation_fraction` of each class to seed the validation reservoir.
    pub fn pretrain(pretrain: &EmbeddingSet, config: DetectorConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let (fit, holdout) = split_validation(pretrain, config.validation_fraction, seed)?;
        let mut old_bank = SubspaceBank::new();
        for (class, rows) in fit {
            old_bank.insert(ClassSubspace::fit(class, &rows, config.retention)?);
        }
        Ok(Self {
            config,
            old_bank,
            holdout,
            aliases: BTreeMap::new(),
        })
    }

    pub fn from_parts(
        config: DetectorConfig,
        old_bank: SubspaceBank,
        holdout: EmbeddingSet,
    ) -> Result<Self> {
        config.validate()?;
        if old_bank.is_empty() {
            return Err(Error::EmptyBank);
        }
        if let Some(s) = old_bank.iter().find(|s| s.d() != holdout.d()) {
            return Err(Error::DimensionMismatch {
                expected: holdout.d(),
                got: s.d(),
            });
        }
        Ok(Self {
            config,
            old_bank,
            holdout,
            aliases: BTreeMap::new(),
        })
    }

    pub fn config(&self) -> &DetectorConfig {
        &self.config
    }

    pub fn old_bank(&self) -> &SubspaceBank {
        &self.old_bank
    }

    pub fn holdout(&self) -> &EmbeddingSet {
        &self.holdout
    }

    pub fn learned_class_ids(&self) -> BTreeSet<ClassId> {
        self.old_bank.class_ids().collect()
    }

    /// Whether queries answering `label` refer to an already learned class.
    pub fn is_known(&self, label: ClassId) -> bool {
        self.old_bank.contains(label) || self.aliases.contains_key(&label)
    }

    pub fn aliases(&self) -> &BTreeMap<ClassId, ClassId> {
        &self.aliases
    }

    /// Threshold on the initial score, calibrated on the validation reservoir.
    pub fn initial_threshold(&self) -> Result<f64> {
        let s = score_initial(&self.old_bank, &self.holdout)?;
        compute_threshold(&s.values, self.config.k_std)
    }

    /// Initial score of `x` against the learned classes.
    pub fn score_initial(&self, x: &EmbeddingSet) -> Result<ScoreVector> {
        score_initial(&self.old_bank, x)
    }
}

/// Splits a labeled set per class into fit rows and held-out validation rows.
/// Each class keeps at least one fit sample.
pub(crate) fn split_validation(
    set: &EmbeddingSet,
    fraction: f64,
    seed: u64,
) -> Result<(BTreeMap<ClassId, EmbeddingSet>, EmbeddingSet)> {
    if set.labels().is_none() {
        return Err(Error::InvalidConfig("pre-deployment set must be labeled".into()));
    }
    let mut rng = seeds::rng(seeds::derive(seed, seeds::PRETRAIN));
    let mut fit = BTreeMap::new();
    let mut held: Vec<usize> = Vec::new();
    for class in set.classes() {
        let mut idx = set.class_indices(class);
        idx.shuffle(&mut rng);
        let n_hold = ((fraction * idx.len() as f64).round() as usize).min(idx.len() - 1);
        held.extend_from_slice(&idx[..n_hold]);
        fit.insert(class, set.select(&idx[n_hold..])?);
    }
    if held.len() < 2 {
        return Err(Error::InsufficientValidation(held.len()));
    }
    held.sort_unstable();
    Ok((fit, set.select(&held)?))
}
