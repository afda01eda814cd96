//! Experiment configuration files (TOML).
//!
//! ```toml
//! seed = 7
//!
//! [data]                # either files ...
//! embeddings = "feats.emb"
//! labels = "feats.lbl"
//! # [data.synth]        # ... or a synthetic set (the default)
//! # n_classes = 10
//!
//! [stream]
//! increment = 2
//!
//! [detector]
//! budget_fraction = 0.0125
//! mode = "default"
//!
//! [pseudolabel]
//! epochs = 5
//!
//! [output]
//! directory = "results"
//! ```
//!
//! Every key is optional and unknown keys are rejected. Relative paths are
//! resolved against the directory holding the config file.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::detector::DetectorConfig;
use crate::error::{Error, Result};
use crate::pseudolabel::TrainConfig;
use crate::stream::StreamConfig;
use crate::synth::SynthConfig;

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub embeddings: Option<PathBuf>,
    pub labels: Option<PathBuf>,
    /// Used when no files are given; defaults apply if absent.
    pub synth: Option<SynthConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub directory: PathBuf,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            directory: PathBuf::from("conclad-out"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub data: DataConfig,
    pub stream: StreamConfig,
    pub detector: DetectorConfig,
    pub pseudolabel: TrainConfig,
    pub output: OutputConfig,
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut cfg = Self::from_toml_str(&fs::read_to_string(path)?)?;
        let base = path.parent().unwrap_or(Path::new(""));
        cfg.resolve_paths(base);
        Ok(cfg)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let Some(p) = self.data.embeddings.as_mut() {
            fix(p);
        }
        if let Some(p) = self.data.labels.as_mut() {
            fix(p);
        }
        fix(&mut self.output.directory);
    }

    pub fn validate(&self) -> Result<()> {
        match (&self.data.embeddings, &self.data.labels, &self.data.synth) {
            (Some(_), Some(_), None) | (None, None, _) => {}
            (Some(_), Some(_), Some(_)) => {
                return Err(Error::InvalidConfig(
                    "[data] takes either embedding/label files or [data.synth], not both".into(),
                ))
            }
            _ => {
                return Err(Error::InvalidConfig(
                    "[data] needs both embeddings and labels".into(),
                ))
            }
        }
        self.detector_config().validate()
    }

    /// Detector settings with the `[pseudolabel]` section folded in.
    pub fn detector_config(&self) -> DetectorConfig {
        DetectorConfig {
            pseudolabel: self.pseudolabel.clone(),
            ..self.detector.clone()
        }
    }
}
