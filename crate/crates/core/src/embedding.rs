//! Row-major container for backbone feature vectors.

use std::collections::{BTreeSet, HashSet};

use crate::error::{Error, Result};
use crate::{ClassId, SampleId};

/// An `n x d` matrix of embeddings with optional class labels and stable ids.
///
/// Invariants: `n >= 1`, `d >= 1`, labels (if any) have length `n`, ids are
/// unique.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingSet {
    data: Vec<f32>,
    n: usize,
    d: usize,
    labels: Option<Vec<ClassId>>,
    ids: Vec<SampleId>,
}

impl EmbeddingSet {
    /// Builds an unlabeled set from row-major data; ids are `0..n`.
    pub fn new(data: Vec<f32>, d: usize) -> Result<Self> {
        if d == 0 {
            return Err(Error::EmptyInput("embedding dimension is zero"));
        }
        if data.is_empty() {
            return Err(Error::EmptyInput("embedding set has no rows"));
        }
        if !data.len().is_multiple_of(d) {
            return Err(Error::SizeMismatch(format!(
                "{} values do not divide into rows of {d}",
                data.len()
            )));
        }
        let n = data.len() / d;
        Ok(Self {
            data,
            n,
            d,
            labels: None,
            ids: (0..n as SampleId).collect(),
        })
    }

    pub fn from_rows<R: AsRef<[f32]>>(rows: &[R]) -> Result<Self> {
        let d = rows.first().map(|r| r.as_ref().len()).unwrap_or(0);
        let mut data = Vec::with_capacity(rows.len() * d);
        for r in rows {
            let r = r.as_ref();
            if r.len() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    got: r.len(),
                });
            }
            data.extend_from_slice(r);
        }
        Self::new(data, d)
    }

    pub fn with_labels(mut self, labels: Vec<ClassId>) -> Result<Self> {
        if labels.len() != self.n {
            return Err(Error::SizeMismatch(format!(
                "{} labels for {} rows",
                labels.len(),
                self.n
            )));
        }
        self.labels = Some(labels);
        Ok(self)
    }

    pub fn with_ids(mut self, ids: Vec<SampleId>) -> Result<Self> {
        if ids.len() != self.n {
            return Err(Error::SizeMismatch(format!(
                "{} ids for {} rows",
                ids.len(),
                self.n
            )));
        }
        let mut seen = HashSet::with_capacity(ids.len());
        for &id in &ids {
            if !seen.insert(id) {
                return Err(Error::DuplicateSample(id));
            }
        }
        self.ids = ids;
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.d..(i + 1) * self.d]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[f32]> + '_ {
        self.data.chunks_exact(self.d)
    }

    pub fn row_f64(&self, i: usize) -> Vec<f64> {
        self.row(i).iter().map(|&v| v as f64).collect()
    }

    pub fn ids(&self) -> &[SampleId] {
        &self.ids
    }

    pub fn labels(&self) -> Option<&[ClassId]> {
        self.labels.as_deref()
    }

    /// Sorted distinct labels; empty when the set is unlabeled.
    pub fn classes(&self) -> BTreeSet<ClassId> {
        self.labels
            .as_ref()
            .map(|l| l.iter().copied().collect())
            .unwrap_or_default()
    }

    /// Row indices carrying `class`, in row order.
    pub fn class_indices(&self, class: ClassId) -> Vec<usize> {
        match &self.labels {
            Some(l) => (0..self.n).filter(|&i| l[i] == class).collect(),
            None => Vec::new(),
        }
    }

    /// Sub-set of the given rows, keeping ids and labels.
    pub fn select(&self, indices: &[usize]) -> Result<Self> {
        if indices.is_empty() {
            return Err(Error::EmptyInput("selection is empty"));
        }
        let mut data = Vec::with_capacity(indices.len() * self.d);
        for &i in indices {
            data.extend_from_slice(self.row(i));
        }
        Ok(Self {
            data,
            n: indices.len(),
            d: self.d,
            labels: self
                .labels
                .as_ref()
                .map(|l| indices.iter().map(|&i| l[i]).collect()),
            ids: indices.iter().map(|&i| self.ids[i]).collect(),
        })
    }

    /// Copy with labels stripped, as handed to a detector.
    pub fn without_labels(&self) -> Self {
        Self {
            labels: None,
            ..self.clone()
        }
    }

    /// Appends rows from `other`. Labels survive only if both sides have them.
    pub fn extend(&mut self, other: &EmbeddingSet) -> Result<()> {
        if other.d != self.d {
            return Err(Error::DimensionMismatch {
                expected: self.d,
                got: other.d,
            });
        }
        let existing: HashSet<SampleId> = self.ids.iter().copied().collect();
        if let Some(dup) = other.ids.iter().find(|id| existing.contains(id)) {
            return Err(Error::DuplicateSample(*dup));
        }
        self.data.extend_from_slice(&other.data);
        self.ids.extend_from_slice(&other.ids);
        self.labels = match (self.labels.take(), &other.labels) {
            (Some(mut a), Some(b)) => {
                a.extend_from_slice(b);
                Some(a)
            }
            _ => None,
        };
        self.n += other.n;
        Ok(())
    }

    /// Multiplies every coordinate by `c`.
    pub fn scaled(&self, c: f32) -> Self {
        Self {
            data: self.data.iter().map(|v| v * c).collect(),
            ..self.clone()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_ragged_and_empty() {
        assert!(EmbeddingSet::new(vec![], 3).is_err());
        assert!(EmbeddingSet::new(vec![1.0; 4], 0).is_err());
        assert!(EmbeddingSet::new(vec![1.0; 5], 2).is_err());
    }

    #[test]
    fn duplicate_ids_rejected() {
        let s = EmbeddingSet::new(vec![0.0; 6], 2).unwrap();
        assert!(matches!(
            s.with_ids(vec![4, 5, 4]),
            Err(Error::DuplicateSample(4))
        ));
    }

    #[test]
    fn select_keeps_ids_and_labels() {
        let s = EmbeddingSet::from_rows(&[[0.0f32, 1.0], [2.0, 3.0], [4.0, 5.0]])
            .unwrap()
            .with_labels(vec![7, 8, 9])
            .unwrap()
            .with_ids(vec![10, 11, 12])
            .unwrap();
        let sub = s.select(&[2, 0]).unwrap();
        assert_eq!(sub.ids(), &[12, 10]);
        assert_eq!(sub.labels().unwrap(), &[9, 7]);
        assert_eq!(sub.row(0), &[4.0, 5.0]);
    }

    #[test]
    fn extend_rejects_id_collision() {
        let mut a = EmbeddingSet::new(vec![0.0; 4], 2).unwrap();
        let b = EmbeddingSet::new(vec![1.0; 2], 2).unwrap();
        assert!(a.extend(&b).is_err());
        let b = b.with_ids(vec![9]).unwrap();
        a.extend(&b).unwrap();
        assert_eq!(a.n(), 3);
        assert_eq!(a.ids(), &[0, 1, 9]);
    }
}
