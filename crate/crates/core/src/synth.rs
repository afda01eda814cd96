//! Synthetic embedding datasets.
//!
//! Each class is a Gaussian on its own random affine subspace: a random mean,
//! a random orthonormal basis of `subspace_rank` directions with variances
//! `(cluster_spread^2) * axis_decay^j`, plus isotropic noise of standard
//! deviation `noise_floor * cluster_spread` in every coordinate. Class means
//! are drawn first and re-drawn until every pair is at least
//! `min_mean_separation * cluster_spread` apart.
//!
//! With `shared_rank = Some(a)` all means and bases are drawn inside one
//! random `a`-dimensional subspace common to every class, so that unions of a
//! few classes fill most of the occupied space while single classes do not.

use nalgebra::DMatrix;
use rand::{Rng, RngExt};
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::embedding::EmbeddingSet;
use crate::error::{Error, Result};
use crate::seeds;
use crate::ClassId;

const MAX_ATTEMPTS: usize = 1000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub n_classes: usize,
    pub d: usize,
    pub n_per_class: usize,
    /// Standard deviation along a class's leading axis.
    pub cluster_spread: f64,
    /// Minimum pairwise mean distance, in units of `cluster_spread`.
    pub min_mean_separation: f64,
    /// Intrinsic dimension of each class; must be below `d`.
    pub subspace_rank: usize,
    /// Variance ratio between consecutive within-class axes.
    pub axis_decay: f64,
    /// Isotropic noise standard deviation, in units of `cluster_spread`.
    pub noise_floor: f64,
    /// Dimension of the subspace shared by all classes; `None` uses all `d`.
    pub shared_rank: Option<usize>,
    #[serde(skip)]
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_classes: 10,
            d: 64,
            n_per_class: 500,
            cluster_spread: 1.0,
            min_mean_separation: 10.0,
            subspace_rank: 20,
            axis_decay: 0.97,
            noise_floor: 0.05,
            shared_rank: Some(28),
            seed: 0,
        }
    }
}

impl SynthConfig {
    fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.n_classes == 0 || self.n_per_class == 0 || self.d == 0 {
            return bad("n_classes, n_per_class and d must be positive".into());
        }
        if self.subspace_rank == 0 || self.subspace_rank >= self.d {
            return bad(format!(
                "subspace_rank must lie in [1, d), got {} with d = {}",
                self.subspace_rank, self.d
            ));
        }
        if !(self.cluster_spread > 0.0) {
            return bad("cluster_spread must be positive".into());
        }
        if !(self.min_mean_separation >= 0.0) {
            return bad("min_mean_separation must be >= 0".into());
        }
        if !(self.axis_decay > 0.0 && self.axis_decay <= 1.0) {
            return bad("axis_decay must lie in (0, 1]".into());
        }
        if !(self.noise_floor >= 0.0) {
            return bad("noise_floor must be >= 0".into());
        }
        if let Some(a) = self.shared_rank {
            if a < self.subspace_rank || a > self.d {
                return bad(format!(
                    "shared_rank must lie in [subspace_rank, d], got {a} with rank {} and d = {}",
                    self.subspace_rank, self.d
                ));
            }
        }
        Ok(())
    }

    fn ambient(&self) -> usize {
        self.shared_rank.unwrap_or(self.d)
    }
}

fn gaussian_vec(rng: &mut impl Rng, n: usize, scale: f64) -> Vec<f64> {
    (0..n)
        .map(|_| scale * rng.sample::<f64, _>(StandardNormal))
        .collect()
}

fn draw_means(cfg: &SynthConfig, rng: &mut impl Rng) -> Result<Vec<Vec<f64>>> {
    let min_dist = cfg.min_mean_separation * cfg.cluster_spread;
    let a = cfg.ambient();
    // Expected pairwise distance of two such draws is 1.25 * min_dist.
    let scale = 1.25 * min_dist / (2.0 * a as f64).sqrt();
    let mut means: Vec<Vec<f64>> = Vec::with_capacity(cfg.n_classes);
    for _ in 0..cfg.n_classes {
        let mut placed = false;
        for _ in 0..MAX_ATTEMPTS {
            let m = gaussian_vec(rng, a, scale);
            let far = means.iter().all(|o| {
                let d2: f64 = o.iter().zip(&m).map(|(a, b)| (a - b) * (a - b)).sum();
                d2.sqrt() >= min_dist
            });
            if far {
                means.push(m);
                placed = true;
                break;
            }
        }
        if !placed {
            return Err(Error::InfeasibleSeparation {
                n_classes: cfg.n_classes,
                separation: cfg.min_mean_separation,
                attempts: MAX_ATTEMPTS,
            });
        }
    }
    Ok(means)
}

fn random_basis(rng: &mut impl Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_vec(rows, cols, gaussian_vec(rng, rows * cols, 1.0))
        .qr()
        .q()
}

/// Shared basis (`d x a`) and class means in ambient coordinates.
type Layout = (Option<DMatrix<f64>>, Vec<Vec<f64>>);

fn draw_layout(cfg: &SynthConfig, rng: &mut impl Rng) -> Result<Layout> {
    let shared = cfg
        .shared_rank
        .filter(|&a| a < cfg.d)
        .map(|a| random_basis(rng, cfg.d, a));
    let means = draw_means(cfg, rng)?;
    let means = match &shared {
        Some(q) => means
            .into_iter()
            .map(|m| (q * nalgebra::DVector::from_vec(m)).as_slice().to_vec())
            .collect(),
        None => means,
    };
    Ok((shared, means))
}

/// The configured class means, in class order.
pub fn synth_class_means(cfg: &SynthConfig) -> Result<Vec<Vec<f64>>> {
    cfg.validate()?;
    Ok(draw_layout(cfg, &mut seeds::rng(cfg.seed))?.1)
}

/// Labeled dataset with `n_classes * n_per_class` rows; class `c` has label
/// `c` and occupies rows `c * n_per_class ..`; ids are row indices.
pub fn synth_dataset(cfg: &SynthConfig) -> Result<EmbeddingSet> {
    cfg.validate()?;
    let mut rng = seeds::rng(cfg.seed);
    let (shared, means) = draw_layout(cfg, &mut rng)?;
    let d = cfg.d;
    let r = cfg.subspace_rank;
    let noise = cfg.noise_floor * cfg.cluster_spread;
    let axis_sd: Vec<f64> = (0..r)
        .map(|j| cfg.cluster_spread * cfg.axis_decay.powi(j as i32).sqrt())
        .collect();

    let mut data = Vec::with_capacity(cfg.n_classes * cfg.n_per_class * d);
    let mut labels = Vec::with_capacity(cfg.n_classes * cfg.n_per_class);
    for (c, mean) in means.iter().enumerate() {
        let basis = match &shared {
            Some(q) => q * random_basis(&mut rng, q.ncols(), r),
            None => random_basis(&mut rng, d, r),
        };
        for _ in 0..cfg.n_per_class {
            let mut x = mean.clone();
            for (j, sd) in axis_sd.iter().enumerate() {
                let z: f64 = rng.sample(StandardNormal);
                for (xi, bij) in x.iter_mut().zip(basis.column(j).iter()) {
                    *xi += sd * z * bij;
                }
            }
            if noise > 0.0 {
                for xi in &mut x {
                    *xi += noise * rng.sample::<f64, _>(StandardNormal);
                }
            }
            data.extend(x.iter().map(|&v| v as f32));
            labels.push(c as ClassId);
        }
    }
    EmbeddingSet::new(data, d)?.with_labels(labels)
}
