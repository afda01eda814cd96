//! Continual novel-class detection over precomputed feature embeddings.
//!
//! Each learned class is summarised by a PCA subspace; a sample's distance to
//! that subspace (its feature reconstruction error) is the elemental
//! uncertainty measure. At every task the detector scores an unlabeled pool
//! against the old classes, spends a tiny labeling budget on ambiguous
//! samples, pseudo-labels confident novel ones, and finally absorbs the
//! discovered classes so they stop looking novel in later tasks.
//!
//! Module map:
//!
//! - [`embedding`]: the `n x d` sample container.
//! - [`subspace`]: per-class PCA fits and reconstruction error.
//! - [`scoring`]: old-class, iterative ratio, and per-task baseline scores.
//! - [`pseudolabel`]: the softmax pseudo-labeler trained with Adam.
//! - [`detector`]: threshold calibration, query/pseudo selection, task loop.
//! - [`stream`] / [`synth`]: task streams with 2:1 old/new mixing, synthetic data.
//! - [`eval`]: AUROC and per-task records.
//! - [`io`], [`config`], [`experiment`]: file formats, config, and runners.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod detector;
pub mod embedding;
pub mod error;
pub mod eval;
pub mod experiment;
pub mod io;
pub mod pseudolabel;
pub mod scoring;
pub mod seeds;
pub mod stream;
pub mod subspace;
pub mod synth;

pub use detector::{DetectorConfig, DetectorState, LabelOracle, Mode, TaskResult};
pub use embedding::EmbeddingSet;
pub use error::{Error, Result};
pub use subspace::ClassSubspace;

/// Integer class label, as stored in LBL1 files.
pub type ClassId = i32;

/// Stable per-sample identifier, unique within a dataset.
pub type SampleId = u64;
