//! Per-class PCA subspaces and feature reconstruction error (FRE).
//!
//! A [`ClassSubspace`] stores the mean of a class and an orthonormal basis of
//! its top principal directions. The FRE of a vector `u` is the norm of the
//! part of `u - mean` that the basis cannot reconstruct:
//!
//! ```text
//! fre(u) = || (u - mean) - P^T P (u - mean) ||_2
//! ```
//!
//! Fits use the SVD of the mean-centered sample matrix rather than an
//! eigendecomposition of the covariance, which stays accurate when `n < d`.

use nalgebra::{DMatrix, DVector, SVD};

use crate::embedding::EmbeddingSet;
use crate::error::{Error, Result};
use crate::ClassId;

/// Default fraction of total variance kept by a fit.
pub const DEFAULT_RETENTION: f64 = 0.995;

/// Convergence tolerance handed to nalgebra's SVD. Tighter values let the
/// iteration stop on a wrong decomposition of rank-deficient input.
const SVD_EPS: f64 = 1e-12;

/// Largest accepted `| ||A v|| - sigma |` relative to the top singular value.
const SVD_CHECK: f64 = 1e-8;

/// Entries smaller than this fraction of a component's largest entry are
/// treated as zero by the sign rule.
const SIGN_TOLERANCE: f64 = 1e-12;

/// Slack on the cumulative variance comparison so that `retention = 1.0`
/// stops at the numerical rank.
const RETENTION_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct ClassSubspace {
    class_id: ClassId,
    mean: Vec<f64>,
    /// `k x d`, row-major, orthonormal rows.
    components: Vec<f64>,
    /// Per-component sample variance (`sigma_i^2 / (n - 1)`), descending.
    explained_variance: Vec<f64>,
    variance_kept: f64,
    n_fit: usize,
}

impl ClassSubspace {
    /// Fits a subspace to the rows of `samples`.
    ///
    /// `k` is the smallest count whose cumulative explained-variance ratio
    /// reaches `retention`, capped at `min(n - 1, d)`. Identical samples (or a
    /// single sample) give `k = 0`, a mean-only subspace. Each component is
    /// signed so that its first nonzero entry is positive.
    pub fn fit(class_id: ClassId, samples: &EmbeddingSet, retention: f64) -> Result<Self> {
        if !(retention > 0.0 && retention <= 1.0) {
            return Err(Error::InvalidConfig(format!(
                "retention must lie in (0, 1], got {retention}"
            )));
        }
        let n = samples.n();
        let d = samples.d();
        if n == 0 {
            return Err(Error::EmptyInput("no samples to fit"));
        }

        let mut mean = vec![0.0f64; d];
        for row in samples.rows() {
            for (m, &v) in mean.iter_mut().zip(row) {
                *m += v as f64;
            }
        }
        for m in &mut mean {
            *m /= n as f64;
        }

        let centered = DMatrix::from_fn(n, d, |i, j| samples.row(i)[j] as f64 - mean[j]);
        let mean_only = |mean: Vec<f64>| Self {
            class_id,
            mean,
            components: Vec::new(),
            explained_variance: Vec::new(),
            variance_kept: 1.0,
            n_fit: n,
        };
        if n == 1 || centered.iter().all(|&v| v == 0.0) {
            return Ok(mean_only(mean));
        }

        let svd = SVD::try_new(centered.clone(), false, true, SVD_EPS, 0)
            .ok_or_else(|| Error::InvalidSubspace("SVD did not converge".into()))?;
        let singular_values = svd.singular_values;
        let right = svd
            .v_t
            .ok_or_else(|| Error::InvalidSubspace("SVD returned no right vectors".into()))?;

        let mut order: Vec<usize> = (0..singular_values.len()).collect();
        order.sort_by(|&a, &b| singular_values[b].total_cmp(&singular_values[a]));
        let energies: Vec<f64> = order
            .iter()
            .map(|&i| singular_values[i] * singular_values[i])
            .collect();
        let total: f64 = energies.iter().sum();
        if total <= 0.0 {
            return Ok(mean_only(mean));
        }

        let k_max = (n - 1).min(d).min(energies.len());
        let mut k = 0;
        let mut cumulative = 0.0;
        while k < k_max {
            cumulative += energies[k];
            k += 1;
            if cumulative / total >= retention - RETENTION_SLACK {
                break;
            }
        }

        let top = singular_values[order[0]];
        let mut components = Vec::with_capacity(k * d);
        for &src in &order[..k] {
            let mut row: Vec<f64> = right.row(src).iter().copied().collect();
            let v = DVector::from_column_slice(&row);
            if ((&centered * &v).norm() - singular_values[src]).abs() > SVD_CHECK * top {
                return Err(Error::InvalidSubspace("SVD failed its residual check".into()));
            }
            fix_sign(&mut row);
            components.extend_from_slice(&row);
        }
        let explained_variance = energies[..k]
            .iter()
            .map(|e| e / (n - 1) as f64)
            .collect();

        Ok(Self {
            class_id,
            mean,
            components,
            explained_variance,
            variance_kept: (cumulative / total).min(1.0),
            n_fit: n,
        })
    }

    /// Builds a subspace from an explicit mean and basis. Rows of
    /// `components` (row-major, `k x d`) must be orthonormal within 1e-6.
    pub fn from_parts(class_id: ClassId, mean: Vec<f64>, components: Vec<f64>) -> Result<Self> {
        let d = mean.len();
        if d == 0 {
            return Err(Error::EmptyInput("subspace mean is empty"));
        }
        if !components.len().is_multiple_of(d) {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: components.len() % d,
            });
        }
        let k = components.len() / d;
        for a in 0..k {
            for b in a..k {
                let dot: f64 = (0..d)
                    .map(|j| components[a * d + j] * components[b * d + j])
                    .sum();
                let want = if a == b { 1.0 } else { 0.0 };
                if (dot - want).abs() > 1e-6 {
                    return Err(Error::InvalidSubspace(format!(
                        "rows {a} and {b} have dot product {dot}"
                    )));
                }
            }
        }
        Ok(Self {
            class_id,
            mean,
            components,
            explained_variance: vec![0.0; k],
            variance_kept: 1.0,
            n_fit: 0,
        })
    }

    pub fn class_id(&self) -> ClassId {
        self.class_id
    }

    pub fn with_class_id(mut self, class_id: ClassId) -> Self {
        self.class_id = class_id;
        self
    }

    pub fn d(&self) -> usize {
        self.mean.len()
    }

    /// Number of retained components.
    pub fn k(&self) -> usize {
        self.components.len() / self.d()
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn components(&self) -> &[f64] {
        &self.components
    }

    pub fn component(&self, j: usize) -> &[f64] {
        let d = self.d();
        &self.components[j * d..(j + 1) * d]
    }

    pub fn explained_variance(&self) -> &[f64] {
        &self.explained_variance
    }

    pub fn variance_kept(&self) -> f64 {
        self.variance_kept
    }

    pub fn n_fit(&self) -> usize {
        self.n_fit
    }

    /// Feature reconstruction error of `u`.
    pub fn fre(&self, u: &[f64]) -> Result<f64> {
        self.check_dim(u.len())?;
        Ok(self.residual_norm(u.iter().copied()))
    }

    /// [`fre`](Self::fre) for an `f32` row.
    pub fn fre_f32(&self, u: &[f32]) -> Result<f64> {
        self.check_dim(u.len())?;
        Ok(self.residual_norm(u.iter().map(|&v| v as f64)))
    }

    /// FRE of every row of `x`, in row order.
    pub fn fre_batch(&self, x: &EmbeddingSet) -> Result<Vec<f64>> {
        self.check_dim(x.d())?;
        Ok(x
            .rows()
            .map(|r| self.residual_norm(r.iter().map(|&v| v as f64)))
            .collect())
    }

    fn check_dim(&self, got: usize) -> Result<()> {
        if got != self.d() {
            return Err(Error::DimensionMismatch {
                expected: self.d(),
                got,
            });
        }
        Ok(())
    }

    fn residual_norm(&self, u: impl Iterator<Item = f64>) -> f64 {
        let d = self.d();
        let mut residual: Vec<f64> = u.zip(&self.mean).map(|(v, m)| v - m).collect();
        let coeffs: Vec<f64> = self
            .components
            .chunks_exact(d)
            .map(|p| p.iter().zip(&residual).map(|(a, b)| a * b).sum())
            .collect();
        for (p, c) in self.components.chunks_exact(d).zip(&coeffs) {
            for (r, pj) in residual.iter_mut().zip(p) {
                *r -= c * pj;
            }
        }
        residual.iter().map(|r| r * r).sum::<f64>().sqrt()
    }
}

fn fix_sign(row: &mut [f64]) {
    let scale = row.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if let Some(first) = row.iter().find(|v| v.abs() > SIGN_TOLERANCE * scale) {
        if *first < 0.0 {
            row.iter_mut().for_each(|v| *v = -*v);
        }
    }
}
