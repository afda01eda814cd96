//! Threshold calibration and sample selection rules.

use std::collections::BTreeSet;

use rand::seq::index;

use crate::error::{Error, Result};
use crate::scoring::ScoreVector;
use crate::seeds;
use crate::SampleId;

/// `mean + k_std * std` of the validation scores (population std).
pub fn compute_threshold(holdout_scores: &[f64], k_std: f64) -> Result<f64> {
    let n = holdout_scores.len();
    if n < 2 {
        return Err(Error::InsufficientValidation(n));
    }
    let mean = holdout_scores.iter().sum::<f64>() / n as f64;
    let var = holdout_scores
        .iter()
        .map(|s| (s - mean) * (s - mean))
        .sum::<f64>()
        / n as f64;
    Ok(mean + k_std * var.sqrt())
}

/// Number of oracle calls allowed for a pool of `pool_len` samples.
pub fn budget_for_fraction(fraction: f64, pool_len: usize) -> usize {
    ((fraction * pool_len as f64 - 1e-9).ceil().max(0.0) as usize).min(pool_len)
}

/// Uniform draw without replacement of `b0` samples whose initial score is
/// above the pool mean. Returns every candidate when there are at most `b0`.
pub fn select_initial_queries(s0: &ScoreVector, b0: usize, seed: u64) -> Vec<SampleId> {
    if b0 == 0 || s0.is_empty() {
        return Vec::new();
    }
    let mean = s0.values.iter().sum::<f64>() / s0.len() as f64;
    let candidates: Vec<SampleId> = s0
        .iter()
        .filter(|&(_, v)| v > mean)
        .map(|(id, _)| id)
        .collect();
    if candidates.len() <= b0 {
        return candidates;
    }
    let mut rng = seeds::rng(seed);
    let mut picked = index::sample(&mut rng, candidates.len(), b0).into_vec();
    picked.sort_unstable();
    picked.into_iter().map(|i| candidates[i]).collect()
}

/// The `budget` non-excluded samples whose score is closest to `t_inner`
/// (highest ambiguity `1 / (S - t_inner)^2`). Ties go to the lower id.
pub fn select_ambiguous(
    scores: &ScoreVector,
    t_inner: f64,
    budget: usize,
    exclude: &BTreeSet<SampleId>,
) -> Vec<SampleId> {
    ranked(scores, exclude, budget, |v| (v - t_inner) * (v - t_inner))
}

/// The `budget` non-excluded samples with the highest scores.
pub fn select_top(scores: &ScoreVector, budget: usize, exclude: &BTreeSet<SampleId>) -> Vec<SampleId> {
    ranked(scores, exclude, budget, |v| -v)
}

/// `budget` non-excluded samples drawn uniformly without replacement.
pub fn select_random(
    scores: &ScoreVector,
    budget: usize,
    exclude: &BTreeSet<SampleId>,
    seed: u64,
) -> Vec<SampleId> {
    let pool: Vec<SampleId> = scores
        .sample_ids
        .iter()
        .copied()
        .filter(|id| !exclude.contains(id))
        .collect();
    if pool.len() <= budget {
        return pool;
    }
    let mut rng = seeds::rng(seed);
    let mut picked = index::sample(&mut rng, pool.len(), budget).into_vec();
    picked.sort_unstable();
    picked.into_iter().map(|i| pool[i]).collect()
}

/// The `ceil(alpha * |A|)` highest-scoring members of `A`, the non-excluded
/// samples scoring strictly above `t_inner`. Ties go to the lower id.
pub fn select_pseudo(
    scores: &ScoreVector,
    t_inner: f64,
    alpha: f64,
    exclude: &BTreeSet<SampleId>,
) -> Vec<SampleId> {
    let above = scores
        .iter()
        .filter(|&(id, v)| v > t_inner && !exclude.contains(&id))
        .count();
    let take = ((alpha * above as f64) - 1e-9).ceil().max(0.0) as usize;
    // the top `take <= |A|` non-excluded scores all lie in A
    ranked(scores, exclude, take.min(above), |v| -v)
}

/// Sorts non-excluded samples by `key` ascending, ties by lower id, and keeps
/// the first `budget`.
fn ranked(
    scores: &ScoreVector,
    exclude: &BTreeSet<SampleId>,
    budget: usize,
    key: impl Fn(f64) -> f64,
) -> Vec<SampleId> {
    if budget == 0 {
        return Vec::new();
    }
    let mut order: Vec<(f64, SampleId)> = scores
        .iter()
        .filter(|(id, _)| !exclude.contains(id))
        .map(|(id, v)| (key(v), id))
        .collect();
    order.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    order.into_iter().take(budget).map(|(_, id)| id).collect()
}
