//! Single-layer softmax pseudo-labeler over the novel classes of one task.
//!
//! The model is `softmax(W x + b)` with one output per discovered novel class,
//! trained with Adam on mean cross-entropy over seeded, shuffled mini-batches.
//! It is re-initialized at every task and retrained from scratch whenever the
//! accumulated label set changes.

use rand::seq::SliceRandom;
use rand::RngExt;
use serde::{Deserialize, Serialize};

use crate::embedding::EmbeddingSet;
use crate::error::{Error, Result};
use crate::seeds;
use crate::ClassId;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    /// Seeds the per-epoch shuffle; derived from the run seed.
    #[serde(skip)]
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.001,
            batch_size: 10,
            epochs: 5,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.learning_rate > 0.0
            && self.batch_size > 0
            && self.epochs > 0
            && (0.0..1.0).contains(&self.adam_beta1)
            && (0.0..1.0).contains(&self.adam_beta2)
            && self.adam_eps > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!("bad training config {self:?}")))
        }
    }
}

/// Gradient of the mean cross-entropy, laid out like the parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradient {
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PseudoLabeler {
    /// `classes x d`, row-major.
    weights: Vec<f64>,
    bias: Vec<f64>,
    /// Ascending, unique.
    class_ids: Vec<ClassId>,
    d: usize,
    rng_seed: u64,
    /// Full-data mean loss before training, then after each epoch.
    loss_history: Vec<f64>,
}

impl PseudoLabeler {
    /// Weights uniform in `(-1/sqrt(d), 1/sqrt(d))`, zero bias.
    pub fn init(class_ids: &[ClassId], d: usize, seed: u64) -> Result<Self> {
        let class_ids = sorted_unique(class_ids)?;
        if d == 0 {
            return Err(Error::EmptyInput("labeler input dimension is zero"));
        }
        let bound = 1.0 / (d as f64).sqrt();
        let mut rng = seeds::rng(seed);
        let weights = (0..class_ids.len() * d)
            .map(|_| rng.random_range(-bound..bound))
            .collect();
        Ok(Self {
            weights,
            bias: vec![0.0; class_ids.len()],
            class_ids,
            d,
            rng_seed: seed,
            loss_history: Vec::new(),
        })
    }

    /// Builds a labeler from explicit parameters.
    pub fn from_parameters(
        class_ids: &[ClassId],
        d: usize,
        weights: Vec<f64>,
        bias: Vec<f64>,
    ) -> Result<Self> {
        let class_ids = sorted_unique(class_ids)?;
        if weights.len() != class_ids.len() * d {
            return Err(Error::SizeMismatch(format!(
                "{} weights for {} classes x {d}",
                weights.len(),
                class_ids.len()
            )));
        }
        if bias.len() != class_ids.len() {
            return Err(Error::SizeMismatch(format!(
                "{} biases for {} classes",
                bias.len(),
                class_ids.len()
            )));
        }
        Ok(Self {
            weights,
            bias,
            class_ids,
            d,
            rng_seed: 0,
            loss_history: Vec::new(),
        })
    }

    pub fn class_ids(&self) -> &[ClassId] {
        &self.class_ids
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    pub fn rng_seed(&self) -> u64 {
        self.rng_seed
    }

    pub fn loss_history(&self) -> &[f64] {
        &self.loss_history
    }

    fn check_dim(&self, x: &EmbeddingSet) -> Result<()> {
        if x.d() != self.d {
            return Err(Error::DimensionMismatch {
                expected: self.d,
                got: x.d(),
            });
        }
        Ok(())
    }

    fn class_index(&self, label: ClassId) -> Result<usize> {
        self.class_ids
            .binary_search(&label)
            .map_err(|_| Error::UnknownLabel(label))
    }

    fn logits_into(&self, x: &[f64], out: &mut [f64]) {
        for (c, o) in out.iter_mut().enumerate() {
            let w = &self.weights[c * self.d..(c + 1) * self.d];
            *o = self.bias[c] + w.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
        }
    }

    /// Softmax probabilities per sample, columns in `class_ids` order.
    pub fn predict_proba(&self, x: &EmbeddingSet) -> Result<Vec<Vec<f64>>> {
        self.check_dim(x)?;
        let mut logits = vec![0.0; self.class_ids.len()];
        Ok((0..x.n())
            .map(|i| {
                self.logits_into(&x.row_f64(i), &mut logits);
                softmax(&logits)
            })
            .collect())
    }

    /// Argmax class per sample; equal logits resolve to the lowest class id.
    pub fn predict(&self, x: &EmbeddingSet) -> Result<Vec<ClassId>> {
        self.check_dim(x)?;
        let mut logits = vec![0.0; self.class_ids.len()];
        Ok((0..x.n())
            .map(|i| {
                self.logits_into(&x.row_f64(i), &mut logits);
                let mut best = 0;
                for c in 1..logits.len() {
                    if logits[c] > logits[best] {
                        best = c;
                    }
                }
                self.class_ids[best]
            })
            .collect())
    }

    /// Mean cross-entropy over all rows and its gradient.
    pub fn loss_and_gradient(&self, x: &EmbeddingSet, y: &[ClassId]) -> Result<(f64, Gradient)> {
        self.check_dim(x)?;
        let targets = self.targets(x, y)?;
        let rows: Vec<Vec<f64>> = (0..x.n()).map(|i| x.row_f64(i)).collect();
        let all: Vec<usize> = (0..rows.len()).collect();
        Ok(self.batch_loss_and_gradient(&rows, &targets, &all))
    }

    fn targets(&self, x: &EmbeddingSet, y: &[ClassId]) -> Result<Vec<usize>> {
        if y.len() != x.n() {
            return Err(Error::SizeMismatch(format!(
                "{} labels for {} samples",
                y.len(),
                x.n()
            )));
        }
        y.iter().map(|&l| self.class_index(l)).collect()
    }

    fn batch_loss_and_gradient(
        &self,
        rows: &[Vec<f64>],
        targets: &[usize],
        batch: &[usize],
    ) -> (f64, Gradient) {
        let c_n = self.class_ids.len();
        let mut grad = Gradient {
            weights: vec![0.0; self.weights.len()],
            bias: vec![0.0; c_n],
        };
        let mut logits = vec![0.0; c_n];
        let mut loss = 0.0;
        for &i in batch {
            let x = &rows[i];
            self.logits_into(x, &mut logits);
            let lse = log_sum_exp(&logits);
            loss += lse - logits[targets[i]];
            for (c, &z) in logits.iter().enumerate() {
                let delta = (z - lse).exp() - if c == targets[i] { 1.0 } else { 0.0 };
                grad.bias[c] += delta;
                let g = &mut grad.weights[c * self.d..(c + 1) * self.d];
                for (gj, xj) in g.iter_mut().zip(x) {
                    *gj += delta * xj;
                }
            }
        }
        let scale = 1.0 / batch.len() as f64;
        grad.weights.iter_mut().for_each(|g| *g *= scale);
        grad.bias.iter_mut().for_each(|g| *g *= scale);
        (loss * scale, grad)
    }

    /// Trains a copy of this labeler on `(x, y)` and returns it.
    ///
    /// Adam moments start from zero on every call.
    pub fn train(&self, x: &EmbeddingSet, y: &[ClassId], cfg: &TrainConfig) -> Result<Self> {
        cfg.validate()?;
        self.check_dim(x)?;
        let targets = self.targets(x, y)?;
        let rows: Vec<Vec<f64>> = (0..x.n()).map(|i| x.row_f64(i)).collect();
        let all: Vec<usize> = (0..rows.len()).collect();

        let mut model = self.clone();
        model.loss_history.clear();
        model
            .loss_history
            .push(model.batch_loss_and_gradient(&rows, &targets, &all).0);

        let n_params = model.weights.len() + model.bias.len();
        let mut adam = Adam::new(n_params, cfg);
        let mut rng = seeds::rng(cfg.seed);
        let mut order = all.clone();
        for _ in 0..cfg.epochs {
            order.shuffle(&mut rng);
            for batch in order.chunks(cfg.batch_size) {
                let (_, g) = model.batch_loss_and_gradient(&rows, &targets, batch);
                let w_len = model.weights.len();
                adam.step(&mut model.weights, &g.weights, 0);
                adam.step(&mut model.bias, &g.bias, w_len);
                adam.advance();
            }
            model
                .loss_history
                .push(model.batch_loss_and_gradient(&rows, &targets, &all).0);
        }
        Ok(model)
    }
}

fn sorted_unique(class_ids: &[ClassId]) -> Result<Vec<ClassId>> {
    if class_ids.is_empty() {
        return Err(Error::EmptyClassSet);
    }
    let mut ids = class_ids.to_vec();
    ids.sort_unstable();
    if let Some(w) = ids.windows(2).find(|w| w[0] == w[1]) {
        return Err(Error::DuplicateClass(w[0]));
    }
    Ok(ids)
}

fn log_sum_exp(v: &[f64]) -> f64 {
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

fn softmax(v: &[f64]) -> Vec<f64> {
    let lse = log_sum_exp(v);
    v.iter().map(|x| (x - lse).exp()).collect()
}

/// Adam over one flat parameter vector, updated in slices.
struct Adam {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    t: i32,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl Adam {
    fn new(n: usize, cfg: &TrainConfig) -> Self {
        Self {
            lr: cfg.learning_rate,
            beta1: cfg.adam_beta1,
            beta2: cfg.adam_beta2,
            eps: cfg.adam_eps,
            t: 1,
            m: vec![0.0; n],
            v: vec![0.0; n],
        }
    }

    /// Updates `params` whose moments start at `offset` in the flat state.
    fn step(&mut self, params: &mut [f64], grad: &[f64], offset: usize) {
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        for (j, (p, g)) in params.iter_mut().zip(grad).enumerate() {
            let m = &mut self.m[offset + j];
            let v = &mut self.v[offset + j];
            *m = self.beta1 * *m + (1.0 - self.beta1) * g;
            *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
            *p -= self.lr * (*m / c1) / ((*v / c2).sqrt() + self.eps);
        }
    }

    fn advance(&mut self) {
        self.t += 1;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> (EmbeddingSet, Vec<ClassId>) {
        let x = EmbeddingSet::from_rows(&[[1.0f32, 0.0], [0.9, 0.1], [0.0, 1.0], [0.2, 0.8]])
            .unwrap();
        (x, vec![3, 3, 8, 8])
    }

    #[test]
    fn init_is_deterministic_and_bounded() {
        let a = PseudoLabeler::init(&[4, 1], 16, 7).unwrap();
        let b = PseudoLabeler::init(&[1, 4], 16, 7).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.class_ids(), &[1, 4]);
        assert!(a.weights().iter().all(|w| w.abs() < 0.25));
        assert!(a.bias().iter().all(|&b| b == 0.0));
        let c = PseudoLabeler::init(&[1, 4], 16, 8).unwrap();
        assert_ne!(a.weights(), c.weights());
    }

    #[test]
    fn init_rejects_empty_and_duplicates() {
        assert!(matches!(
            PseudoLabeler::init(&[], 3, 0),
            Err(Error::EmptyClassSet)
        ));
        assert!(PseudoLabeler::init(&[2, 2], 3, 0).is_err());
    }

    #[test]
    fn equal_logits_pick_lowest_id() {
        let l = PseudoLabeler::from_parameters(&[9, 7], 2, vec![0.0; 4], vec![0.0; 2]).unwrap();
        let (x, _) = toy();
        assert_eq!(l.predict(&x).unwrap(), vec![7; 4]);
    }

    #[test]
    fn one_class_predicts_constant() {
        let l = PseudoLabeler::init(&[5], 2, 1).unwrap();
        let (x, _) = toy();
        assert_eq!(l.predict(&x).unwrap(), vec![5; 4]);
        let trained = l.train(&x, &[5; 4], &TrainConfig::default()).unwrap();
        let h = trained.loss_history();
        assert!(h.last().unwrap() <= &(h[0] + 1e-12));
        assert_eq!(trained.predict(&x).unwrap(), vec![5; 4]);
    }

    #[test]
    fn probabilities_sum_to_one() {
        let l = PseudoLabeler::init(&[0, 1, 2], 2, 3).unwrap();
        let (x, _) = toy();
        for p in l.predict_proba(&x).unwrap() {
            assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert!(p.iter().all(|&v| v > 0.0 && v < 1.0));
        }
    }

    #[test]
    fn unknown_label_and_dimension_errors() {
        let l = PseudoLabeler::init(&[3, 8], 2, 0).unwrap();
        let (x, _) = toy();
        assert!(matches!(
            l.train(&x, &[3, 3, 8, 4], &TrainConfig::default()),
            Err(Error::UnknownLabel(4))
        ));
        let wide = EmbeddingSet::new(vec![0.0; 3], 3).unwrap();
        assert!(l.predict(&wide).is_err());
    }

    #[test]
    fn training_is_deterministic_and_learns_toy() {
        let (x, y) = toy();
        let cfg = TrainConfig {
            learning_rate: 0.05,
            epochs: 50,
            batch_size: 2,
            ..TrainConfig::default()
        };
        let l = PseudoLabeler::init(&[3, 8], 2, 11).unwrap();
        let a = l.train(&x, &y, &cfg).unwrap();
        let b = l.train(&x, &y, &cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.predict(&x).unwrap(), y);
        assert_eq!(a.loss_history().len(), 51);
    }
}
