//! Uncertainty scores built from reconstruction errors.
//!
//! - [`score_initial`]: minimum FRE over the old classes. High means far from
//!   everything already learned.
//! - [`score_iter`]: that minimum divided by the FRE under the novel class the
//!   pseudo-labeler assigns. High means far from the old classes and close to
//!   a discovered novel class.
//! - [`score_dfm`]: minimum FRE over one transform per past task (baseline).

use std::collections::BTreeMap;

use crate::embedding::EmbeddingSet;
use crate::error::{Error, Result};
use crate::subspace::ClassSubspace;
use crate::{ClassId, SampleId};

/// Default guard added to the novel-class FRE in the ratio score.
pub const DEFAULT_EPS: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct ScoreVector {
    pub values: Vec<f64>,
    pub iteration: usize,
    pub sample_ids: Vec<SampleId>,
}

impl ScoreVector {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (SampleId, f64)> + '_ {
        self.sample_ids.iter().copied().zip(self.values.iter().copied())
    }
}

/// Class subspaces keyed by class id, iterated in ascending id order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SubspaceBank {
    subspaces: BTreeMap<ClassId, ClassSubspace>,
}

/// Transforms of every class learned before the current task.
pub type OldClassBank = SubspaceBank;
/// Per-iteration transforms of the novel classes discovered in a task.
pub type NovelClassBank = SubspaceBank;

impl SubspaceBank {
    pub fn new() -> Self {
        Self::default()
    }

    /// Inserts under the subspace's own class id, replacing any previous entry.
    pub fn insert(&mut self, subspace: ClassSubspace) -> Option<ClassSubspace> {
        self.subspaces.insert(subspace.class_id(), subspace)
    }

    pub fn get(&self, class: ClassId) -> Option<&ClassSubspace> {
        self.subspaces.get(&class)
    }

    pub fn contains(&self, class: ClassId) -> bool {
        self.subspaces.contains_key(&class)
    }

    pub fn len(&self) -> usize {
        self.subspaces.len()
    }

    pub fn is_empty(&self) -> bool {
        self.subspaces.is_empty()
    }

    pub fn class_ids(&self) -> impl Iterator<Item = ClassId> + '_ {
        self.subspaces.keys().copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = &ClassSubspace> + '_ {
        self.subspaces.values()
    }

    /// Smallest FRE of `u` over the bank and the class attaining it; the
    /// lowest class id wins ties.
    pub fn min_fre(&self, u: &[f32]) -> Result<(f64, ClassId)> {
        let mut best: Option<(f64, ClassId)> = None;
        for s in self.subspaces.values() {
            let e = s.fre_f32(u)?;
            if best.is_none_or(|(b, _)| e < b) {
                best = Some((e, s.class_id()));
            }
        }
        best.ok_or(Error::EmptyBank)
    }
}

impl FromIterator<ClassSubspace> for SubspaceBank {
    fn from_iter<I: IntoIterator<Item = ClassSubspace>>(iter: I) -> Self {
        let mut bank = Self::new();
        for s in iter {
            bank.insert(s);
        }
        bank
    }
}

/// Initial score: `min_j FRE_j(u)` over the old classes.
pub fn score_initial(old: &OldClassBank, x: &EmbeddingSet) -> Result<ScoreVector> {
    if old.is_empty() {
        return Err(Error::EmptyBank);
    }
    let values = x
        .rows()
        .map(|r| old.min_fre(r).map(|(e, _)| e))
        .collect::<Result<Vec<_>>>()?;
    Ok(ScoreVector {
        values,
        iteration: 0,
        sample_ids: x.ids().to_vec(),
    })
}

/// Iterative ratio score: `min_j FRE_j(u) / (FRE_m(u) + eps)` where `m` is the
/// novel class assigned to `u` and the old transforms are frozen at task start.
pub fn score_iter(
    old: &OldClassBank,
    novel: &NovelClassBank,
    assignments: &[ClassId],
    x: &EmbeddingSet,
    eps: f64,
    iteration: usize,
) -> Result<ScoreVector> {
    if old.is_empty() || novel.is_empty() {
        return Err(Error::EmptyBank);
    }
    if !(eps > 0.0) {
        return Err(Error::InvalidConfig(format!("eps must be positive, got {eps}")));
    }
    if assignments.len() != x.n() {
        return Err(Error::SizeMismatch(format!(
            "{} assignments for {} samples",
            assignments.len(),
            x.n()
        )));
    }
    let mut values = Vec::with_capacity(x.n());
    for (row, &m) in x.rows().zip(assignments) {
        let target = novel.get(m).ok_or(Error::UnknownAssignment(m))?;
        let (numerator, _) = old.min_fre(row)?;
        values.push(numerator / (target.fre_f32(row)? + eps));
    }
    Ok(ScoreVector {
        values,
        iteration,
        sample_ids: x.ids().to_vec(),
    })
}

/// Per-task baseline score: `min_j FRE_j(u)` over stored task transforms.
pub fn score_dfm(task_bank: &[ClassSubspace], x: &EmbeddingSet) -> Result<ScoreVector> {
    if task_bank.is_empty() {
        return Err(Error::EmptyBank);
    }
    let mut values = vec![f64::INFINITY; x.n()];
    for t in task_bank {
        for (v, e) in values.iter_mut().zip(t.fre_batch(x)?) {
            if e < *v {
                *v = e;
            }
        }
    }
    Ok(ScoreVector {
        values,
        iteration: 0,
        sample_ids: x.ids().to_vec(),
    })
}
