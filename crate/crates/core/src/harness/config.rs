//! Experiment configuration (TOML).
//!
//! ```toml
//! seed = 1
//! num_trials = 3
//! exclude_punct = true
//! metrics = ["UAS", "LAS", "UCM", "LCM"]
//! out_dir = "out"
//!
//! [data]
//! task = "dependency"        # or "semantic"
//! train = "train.conllu"     # optional: a synthetic corpus is generated when absent
//! test = "test.conllu"
//! train_size = 500
//! test_size = 200
//!
//! [train]
//! epochs = 10
//! learning_rate = 0.1
//! regularization = 0.0001
//!
//! [[settings]]
//! name = "seed"
//! old = { kind = "arc_factored", capacity = "large", seed = 1 }
//! new = { kind = "arc_factored", capacity = "large", seed = 2 }
//!
//! [mitigation]
//! distillation = true
//! ensemble_size = 5          # 0 disables the ensemble row
//! oracles = true
//! rankers = { old = 1.0, new = 0.0 }
//! bcr = { method = "dropout_p", rate = 0.3, num_candidates = 10, seed = 0 }
//! ```
//!
//! Relative data paths and `out_dir` are resolved against the config
//! file's directory.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::decoding::{Method, SamplingConfig};
use crate::error::Error;
use crate::metrics::MetricKind;
use crate::scoring::{Capacity, ModelKind, TrainConfig};
use crate::structures::Task;

/// Seeds of trial `t` are the configured seeds plus `t * TRIAL_SEED_STRIDE`.
pub const TRIAL_SEED_STRIDE: u64 = 1000;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub kind: ModelKind,
    pub capacity: Capacity,
    #[serde(default = "one")]
    pub data_fraction: f64,
    pub seed: u64,
}

fn one() -> f64 {
    1.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UpdateSetting {
    pub name: String,
    pub old: ModelSpec,
    pub new: ModelSpec,
}

impl UpdateSetting {
    pub fn validate(&self) -> Result<(), Error> {
        if self.old == self.new {
            return Err(Error::Config(format!(
                "setting {:?}: old and new model specs are identical",
                self.name
            )));
        }
        for spec in [&self.old, &self.new] {
            if !(spec.data_fraction > 0.0 && spec.data_fraction <= 1.0) {
                return Err(Error::Config(format!(
                    "setting {:?}: data_fraction must be in (0, 1]",
                    self.name
                )));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    pub task: Task,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub train: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub test: Option<PathBuf>,
    #[serde(default = "default_train_size")]
    pub train_size: usize,
    #[serde(default = "default_test_size")]
    pub test_size: usize,
}

fn default_train_size() -> usize {
    500
}

fn default_test_size() -> usize {
    200
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSection {
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    #[serde(default = "default_learning_rate")]
    pub learning_rate: f64,
    #[serde(default = "default_regularization")]
    pub regularization: f64,
}

fn default_epochs() -> usize {
    TrainConfig::default().epochs
}

fn default_learning_rate() -> f64 {
    TrainConfig::default().learning_rate
}

fn default_regularization() -> f64 {
    TrainConfig::default().regularization
}

impl Default for TrainSection {
    fn default() -> Self {
        TrainSection {
            epochs: default_epochs(),
            learning_rate: default_learning_rate(),
            regularization: default_regularization(),
        }
    }
}

impl TrainSection {
    pub fn train_config(&self, seed: u64, data_fraction: f64) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            learning_rate: self.learning_rate,
            seed,
            regularization: self.regularization,
            data_fraction,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RankerWeights {
    #[serde(default = "one")]
    pub old: f64,
    #[serde(default)]
    pub new: f64,
}

impl Default for RankerWeights {
    fn default() -> Self {
        RankerWeights { old: 1.0, new: 0.0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MitigationConfig {
    #[serde(default = "yes")]
    pub distillation: bool,
    #[serde(default = "default_ensemble_size")]
    pub ensemble_size: usize,
    #[serde(default = "yes")]
    pub oracles: bool,
    #[serde(default)]
    pub rankers: RankerWeights,
    #[serde(default = "default_bcr")]
    pub bcr: SamplingConfig,
}

fn yes() -> bool {
    true
}

fn default_ensemble_size() -> usize {
    5
}

fn default_bcr() -> SamplingConfig {
    SamplingConfig {
        method: Method::DropoutP { rate: 0.3 },
        num_candidates: 10,
        seed: 0,
    }
}

impl Default for MitigationConfig {
    fn default() -> Self {
        MitigationConfig {
            distillation: true,
            ensemble_size: default_ensemble_size(),
            oracles: true,
            rankers: RankerWeights::default(),
            bcr: default_bcr(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_trials")]
    pub num_trials: usize,
    #[serde(default = "yes")]
    pub exclude_punct: bool,
    pub metrics: Vec<MetricKind>,
    #[serde(default = "default_out_dir")]
    pub out_dir: PathBuf,
    pub data: DataConfig,
    #[serde(default)]
    pub train: TrainSection,
    pub settings: Vec<UpdateSetting>,
    #[serde(default)]
    pub mitigation: MitigationConfig,
}

fn default_seed() -> u64 {
    1
}

fn default_trials() -> usize {
    1
}

fn default_out_dir() -> PathBuf {
    PathBuf::from("out")
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, Error> {
        let config: ExperimentConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    /// Reads a config file, resolving relative data paths against its
    /// directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, Error> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)?;
        let mut config = ExperimentConfig::from_toml(&text)?;
        let base = path.parent().unwrap_or(Path::new(""));
        for p in [&mut config.data.train, &mut config.data.test].into_iter().flatten() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        if config.out_dir.is_relative() {
            config.out_dir = base.join(&config.out_dir);
        }
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), Error> {
        if self.num_trials == 0 {
            return Err(Error::Config("num_trials must be at least 1".into()));
        }
        if self.metrics.is_empty() {
            return Err(Error::Config("at least one metric is required".into()));
        }
        if self.settings.is_empty() {
            return Err(Error::Config("at least one update setting is required".into()));
        }
        if self.data.train.is_some() != self.data.test.is_some() {
            return Err(Error::Config("data.train and data.test must be given together".into()));
        }
        if self.data.train_size == 0 || self.data.test_size == 0 {
            return Err(Error::Config("train_size and test_size must be positive".into()));
        }
        self.train.train_config(0, 1.0).validate()?;
        for (i, s) in self.settings.iter().enumerate() {
            s.validate()?;
            if self.settings[..i].iter().any(|t| t.name == s.name) {
                return Err(Error::Config(format!("duplicate setting name {:?}", s.name)));
            }
            for spec in [&s.old, &s.new] {
                if spec.kind == ModelKind::ArcFactored && self.data.task == Task::Semantic {
                    return Err(Error::Config(format!(
                        "setting {:?}: arc-factored models need the dependency task",
                        s.name
                    )));
                }
            }
            self.mitigation.bcr.check_model(s.new.kind)?;
        }
        for m in &self.metrics {
            let ok = match self.data.task {
                Task::Dependency => *m != MetricKind::SpanEm,
                Task::Semantic => matches!(m, MetricKind::Em | MetricKind::SpanEm),
            };
            if !ok {
                return Err(Error::Config(format!(
                    "metric {} does not apply to the {} task",
                    m, self.data.task
                )));
            }
        }
        let w = self.mitigation.rankers;
        if !(w.old >= 0.0 && w.new >= 0.0 && w.old + w.new > 0.0) {
            return Err(Error::Config(
                "ranker weights must be non-negative and not all zero".into(),
            ));
        }
        self.mitigation.bcr.validate()
    }

    /// SHA-256 over the config serialized as JSON with sorted keys.
    pub fn hash(&self) -> String {
        let canonical = self.canonical_json();
        hex::encode(Sha256::digest(canonical.to_string().as_bytes()))
    }

    /// The config as a JSON value; object keys are sorted.
    pub fn canonical_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("config serializes")
    }
}
