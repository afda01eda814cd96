//! Independent reference implementations used as test oracles.
//!
//! Nothing here calls into the library's numerical code: the SVD is a
//! one-sided Jacobi sweep, AUROC is counted pair by pair, and FRE goes through
//! an explicit `d x d` projection matrix.

#![allow(dead_code)]

use std::collections::BTreeSet;

use rand::{Rng, RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian(rng: &mut impl Rng) -> f64 {
    StandardNormal.sample(rng)
}

/// `n x d` Gaussian rows with column `j` scaled by `decay^j`.
pub fn random_matrix(rng: &mut impl Rng, n: usize, d: usize, decay: f64) -> Vec<Vec<f64>> {
    (0..n)
        .map(|_| (0..d).map(|j| gaussian(rng) * decay.powi(j as i32)).collect())
        .collect()
}

pub fn to_f32_rows(rows: &[Vec<f64>]) -> Vec<Vec<f32>> {
    rows.iter().map(|r| r.iter().map(|&v| v as f32).collect()).collect()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Thin SVD by one-sided Jacobi rotations on the columns of `a` (`n x d`).
///
/// Returns singular values (descending) and the matching right singular
/// vectors.
pub fn jacobi_svd(a: &[Vec<f64>]) -> (Vec<f64>, Vec<Vec<f64>>) {
    let n = a.len();
    let d = a[0].len();
    // columns of A and of V
    let mut cols: Vec<Vec<f64>> = (0..d).map(|j| (0..n).map(|i| a[i][j]).collect()).collect();
    let mut v: Vec<Vec<f64>> = (0..d)
        .map(|j| (0..d).map(|i| if i == j { 1.0 } else { 0.0 }).collect())
        .collect();
    for _sweep in 0..100 {
        let mut rotated = false;
        for p in 0..d {
            for q in p + 1..d {
                let alpha = dot(&cols[p], &cols[p]);
                let beta = dot(&cols[q], &cols[q]);
                let gamma = dot(&cols[p], &cols[q]);
                if gamma.abs() <= 1e-15 * (alpha * beta).sqrt() || gamma == 0.0 {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for m in [&mut cols, &mut v] {
                    let (lo, hi) = m.split_at_mut(q);
                    for (x, y) in lo[p].iter_mut().zip(hi[0].iter_mut()) {
                        let (xp, yq) = (*x, *y);
                        *x = c * xp - s * yq;
                        *y = s * xp + c * yq;
                    }
                }
            }
        }
        if !rotated {
            break;
        }
    }
    let mut pairs: Vec<(f64, Vec<f64>)> = cols.iter().map(|c| norm(c)).zip(v).collect();
    pairs.sort_by(|a, b| b.0.total_cmp(&a.0));
    pairs.into_iter().unzip()
}

pub struct PcaOracle {
    pub mean: Vec<f64>,
    pub k: usize,
    pub components: Vec<Vec<f64>>,
    pub explained_variance: Vec<f64>,
}

pub fn pca_oracle(rows: &[Vec<f64>], retention: f64) -> PcaOracle {
    let n = rows.len();
    let d = rows[0].len();
    let mean: Vec<f64> = (0..d)
        .map(|j| rows.iter().map(|r| r[j]).sum::<f64>() / n as f64)
        .collect();
    let centered: Vec<Vec<f64>> = rows
        .iter()
        .map(|r| r.iter().zip(&mean).map(|(a, m)| a - m).collect())
        .collect();
    let (sv, vecs) = jacobi_svd(&centered);
    let energy: Vec<f64> = sv.iter().map(|s| s * s).collect();
    let total: f64 = energy.iter().sum();
    let cap = (n - 1).min(d);
    let mut k = 0;
    let mut acc = 0.0;
    while k < cap {
        acc += energy[k];
        k += 1;
        if acc / total >= retention - 1e-12 {
            break;
        }
    }
    let components = vecs[..k]
        .iter()
        .map(|c| {
            let first = c.iter().find(|x| x.abs() > 1e-12).copied().unwrap_or(1.0);
            c.iter().map(|x| x * first.signum()).collect()
        })
        .collect();
    PcaOracle {
        mean,
        k,
        components,
        explained_variance: energy[..k].iter().map(|e| e / (n - 1) as f64).collect(),
    }
}

/// `|| (I - P^T P)(u - mean) ||` with the projector built explicitly.
pub fn fre_oracle(mean: &[f64], components: &[Vec<f64>], u: &[f64]) -> f64 {
    let d = mean.len();
    let mut proj = vec![vec![0.0; d]; d];
    for p in components {
        for a in 0..d {
            for b in 0..d {
                proj[a][b] += p[a] * p[b];
            }
        }
    }
    let c: Vec<f64> = u.iter().zip(mean).map(|(x, m)| x - m).collect();
    let r: Vec<f64> = (0..d)
        .map(|a| c[a] - (0..d).map(|b| proj[a][b] * c[b]).sum::<f64>())
        .collect();
    norm(&r)
}

/// Counts every (novel, old) pair: wins score 2, ties 1; returns the count and
/// the number of pairs.
pub fn auroc_pairs2(scores: &[f64], is_novel: &[bool]) -> (u64, u64) {
    let mut twice = 0u64;
    let mut pairs = 0u64;
    for (i, &a) in scores.iter().enumerate() {
        if !is_novel[i] {
            continue;
        }
        for (j, &b) in scores.iter().enumerate() {
            if is_novel[j] {
                continue;
            }
            pairs += 1;
            twice += if a > b {
                2
            } else if a == b {
                1
            } else {
                0
            };
        }
    }
    (twice, pairs)
}

pub fn auroc_pairs(scores: &[f64], is_novel: &[bool]) -> f64 {
    let (twice, pairs) = auroc_pairs2(scores, is_novel);
    twice as f64 / (2 * pairs) as f64
}

pub fn softmax_ce(weights: &[f64], bias: &[f64], d: usize, x: &[Vec<f64>], y: &[usize]) -> f64 {
    let c = bias.len();
    let mut total = 0.0;
    for (row, &t) in x.iter().zip(y) {
        let logits: Vec<f64> = (0..c)
            .map(|k| bias[k] + dot(&weights[k * d..(k + 1) * d], row))
            .collect();
        let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = m + logits.iter().map(|l| (l - m).exp()).sum::<f64>().ln();
        total += lse - logits[t];
    }
    total / x.len() as f64
}

pub fn disjoint<T: Ord + Copy>(a: &BTreeSet<T>, b: &BTreeSet<T>) -> bool {
    a.intersection(b).next().is_none()
}

pub fn random_unit(rng: &mut impl Rng, d: usize) -> Vec<f64> {
    let v: Vec<f64> = (0..d).map(|_| gaussian(rng)).collect();
    let n = norm(&v);
    v.into_iter().map(|x| x / n).collect()
}

pub fn uniform(rng: &mut impl Rng, lo: f64, hi: f64) -> f64 {
    rng.random_range(lo..hi)
}
