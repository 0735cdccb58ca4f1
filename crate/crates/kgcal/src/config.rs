//! Experiment configuration.
//!
//! Config files are flat `key = value` text, one setting per line, `#` starts
//! a comment. Relative paths in a file are resolved against the file's
//! directory. The same keys are accepted as `key=value` overrides on the
//! command line.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use kgcal_core::ranking::DEFAULT_HITS_AT;
use kgcal_core::{CalibrationMethod, ModelKind, NegativeStrategy, SamplingMode, TiePolicy, TrainConfig};

use crate::error::{KgcalError, Result};
use crate::ingest::{DuplicatePolicy, SplitPaths, TsvFormat};

/// Environment variable naming the directory relative output paths live in.
pub const OUTPUT_ROOT_ENV: &str = "KGCAL_OUTPUT_ROOT";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StrategyKind {
    GroundTruth,
    Synthetic,
}

impl StrategyKind {
    pub const ALL: [StrategyKind; 2] = [StrategyKind::GroundTruth, StrategyKind::Synthetic];

    pub fn name(self) -> &'static str {
        match self {
            StrategyKind::GroundTruth => "ground_truth",
            StrategyKind::Synthetic => "synthetic",
        }
    }
}

impl FromStr for StrategyKind {
    type Err = KgcalError;

    fn from_str(s: &str) -> Result<Self> {
        match s.replace('-', "_").as_str() {
            "ground_truth" => Ok(StrategyKind::GroundTruth),
            "synthetic" => Ok(StrategyKind::Synthetic),
            other => Err(KgcalError::config(format!("unknown strategy {other:?}"))),
        }
    }
}

/// Default base-rate grid: 0.05, 0.10, …, 0.95.
pub fn default_alphas() -> Vec<f64> {
    (1..=19).map(|i| i as f64 / 20.0).collect()
}

mod as_display {
    use std::fmt::Display;
    use std::str::FromStr;

    use serde::{de, Deserialize, Deserializer, Serializer};

    pub fn serialize<T: Display, S: Serializer>(value: &T, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(value)
    }

    pub fn deserialize<'de, T, D>(d: D) -> Result<T, D::Error>
    where
        T: FromStr,
        T::Err: Display,
        D: Deserializer<'de>,
    {
        String::deserialize(d)?.parse().map_err(de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub train: PathBuf,
    pub valid: PathBuf,
    pub test: PathBuf,
    /// Validation and test files carry a label column.
    pub labeled: bool,
    /// Drop duplicate training triples instead of rejecting the file.
    pub dedup: bool,
    #[serde(with = "as_display")]
    pub model: ModelKind,
    pub training: TrainConfig,
    pub methods: Vec<CalibrationMethod>,
    pub strategies: Vec<StrategyKind>,
    /// Positive base rate assumed by synthetic calibration.
    pub alpha: f64,
    /// Corruptions per positive for synthetic calibration; the training η
    /// when unset.
    pub calibration_eta: Option<usize>,
    /// Redraw synthetic calibration corruptions that are known positives.
    pub calibration_filtered: bool,
    pub bins: usize,
    pub hits_at: Vec<usize>,
    pub ties: TiePolicy,
    pub clip_eps: f64,
    pub ranking: bool,
    pub output: PathBuf,
    pub reuse_checkpoints: bool,
    pub sweep_alphas: Vec<f64>,
    /// Closed-world negative pool size as a multiple of the test positives.
    pub pool_factor: usize,
    pub sensitivity_etas: Vec<usize>,
    pub sensitivity_ks: Vec<usize>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            train: PathBuf::new(),
            valid: PathBuf::new(),
            test: PathBuf::new(),
            labeled: true,
            dedup: false,
            model: ModelKind::TransE {
                norm: kgcal_core::NormOrder::L2,
            },
            training: TrainConfig::default(),
            methods: CalibrationMethod::ALL.to_vec(),
            strategies: StrategyKind::ALL.to_vec(),
            alpha: 0.5,
            calibration_eta: None,
            calibration_filtered: false,
            bins: kgcal_core::metrics::DEFAULT_BINS,
            hits_at: DEFAULT_HITS_AT.to_vec(),
            ties: TiePolicy::Pessimistic,
            clip_eps: kgcal_core::metrics::DEFAULT_CLIP_EPS,
            ranking: true,
            output: PathBuf::from("kgcal-out"),
            reuse_checkpoints: true,
            sweep_alphas: default_alphas(),
            pool_factor: 10,
            sensitivity_etas: vec![2, 10, 20],
            sensitivity_ks: vec![8, 32],
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    value
        .parse()
        .map_err(|e| KgcalError::config(format!("{key}: cannot parse {value:?}: {e}")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value.to_ascii_lowercase().as_str() {
        "true" | "yes" | "1" | "on" => Ok(true),
        "false" | "no" | "0" | "off" => Ok(false),
        _ => Err(KgcalError::config(format!("{key}: expected a boolean, got {value:?}"))),
    }
}

fn parse_list<T: FromStr>(key: &str, value: &str) -> Result<Vec<T>>
where
    T::Err: std::fmt::Display,
{
    value
        .split(',')
        .map(str::trim)
        .filter(|v| !v.is_empty())
        .map(|v| parse(key, v))
        .collect()
}

fn parse_sampling(value: &str) -> Result<SamplingMode> {
    match value.replace('_', "-").as_str() {
        "uniform" | "uniform-entities" => Ok(SamplingMode::UniformEntities),
        "per-batch" | "per-batch-entities" => Ok(SamplingMode::PerBatchEntities),
        other => Err(KgcalError::config(format!("sampling: unknown mode {other:?}"))),
    }
}

impl ExperimentConfig {
    /// Applies one setting. Relative paths are joined onto `base`.
    pub fn set(&mut self, key: &str, value: &str, base: &Path) -> Result<()> {
        let path = |v: &str| base.join(v);
        let t = &mut self.training;
        match key {
            "train" => self.train = path(value),
            "valid" | "validation" => self.valid = path(value),
            "test" => self.test = path(value),
            "labeled" => self.labeled = parse_bool(key, value)?,
            "dedup" => self.dedup = parse_bool(key, value)?,
            "model" => self.model = parse(key, value)?,
            "k" => t.k = parse(key, value)?,
            "eta" => t.eta = parse(key, value)?,
            "epochs" => t.epochs = parse(key, value)?,
            "learning_rate" | "lr" => t.learning_rate = parse(key, value)?,
            "batch_size" => t.batch_size = parse(key, value)?,
            "loss" => t.loss = parse(key, value)?,
            "margin" => t.margin = parse(key, value)?,
            "adv_temperature" => t.adv_temperature = parse(key, value)?,
            "seed" => t.seed = parse(key, value)?,
            "adam_beta1" => t.adam_beta1 = parse(key, value)?,
            "adam_beta2" => t.adam_beta2 = parse(key, value)?,
            "adam_epsilon" => t.adam_epsilon = parse(key, value)?,
            "sampling" => t.sampling = parse_sampling(value)?,
            "normalize_entities" => t.normalize_entities = parse_bool(key, value)?,
            "methods" => self.methods = parse_list(key, value)?,
            "strategies" => self.strategies = parse_list(key, value)?,
            "alpha" => self.alpha = parse(key, value)?,
            "calibration_eta" => {
                self.calibration_eta = match value {
                    "" | "auto" => None,
                    v => Some(parse(key, v)?),
                }
            }
            "calibration_filtered" => self.calibration_filtered = parse_bool(key, value)?,
            "bins" => self.bins = parse(key, value)?,
            "hits_at" => self.hits_at = parse_list(key, value)?,
            "ties" => self.ties = parse(key, value)?,
            "clip_eps" => self.clip_eps = parse(key, value)?,
            "ranking" => self.ranking = parse_bool(key, value)?,
            "output" => self.output = path(value),
            "reuse_checkpoints" => self.reuse_checkpoints = parse_bool(key, value)?,
            "sweep_alphas" => self.sweep_alphas = parse_list(key, value)?,
            "pool_factor" => self.pool_factor = parse(key, value)?,
            "sensitivity_etas" => self.sensitivity_etas = parse_list(key, value)?,
            "sensitivity_ks" => self.sensitivity_ks = parse_list(key, value)?,
            other => return Err(KgcalError::config(format!("unknown key {other:?}"))),
        }
        Ok(())
    }

    /// Applies every `key = value` line of `text`.
    pub fn apply_text(&mut self, text: &str, base: &Path, source: &Path) -> Result<()> {
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| KgcalError::Parse {
                path: source.to_path_buf(),
                line: idx + 1,
                message: "expected key = value".into(),
            })?;
            self.set(key.trim(), value.trim(), base).map_err(|e| KgcalError::Parse {
                path: source.to_path_buf(),
                line: idx + 1,
                message: e.to_string(),
            })?;
        }
        Ok(())
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| KgcalError::io(path, e))?;
        let base = path.parent().unwrap_or(Path::new(""));
        let mut config = Self::default();
        config.apply_text(&text, base, path)?;
        Ok(config)
    }

    /// Applies `key=value` overrides; relative paths stay relative to the
    /// working directory.
    pub fn apply_overrides<S: AsRef<str>>(&mut self, overrides: &[S]) -> Result<()> {
        for item in overrides {
            let item = item.as_ref();
            let (key, value) = item
                .split_once('=')
                .ok_or_else(|| KgcalError::config(format!("override {item:?} is not key=value")))?;
            self.set(key.trim(), value.trim(), Path::new(""))?;
        }
        Ok(())
    }

    /// Places a relative output directory under `root`.
    pub fn resolve_output_root(&mut self, root: Option<&Path>) {
        if let Some(root) = root {
            if self.output.is_relative() {
                self.output = root.join(&self.output);
            }
        }
    }

    pub fn calibration_eta(&self) -> usize {
        self.calibration_eta.unwrap_or(self.training.eta)
    }

    pub fn strategy(&self, kind: StrategyKind) -> NegativeStrategy {
        match kind {
            StrategyKind::GroundTruth => NegativeStrategy::GroundTruth,
            StrategyKind::Synthetic => NegativeStrategy::Synthetic {
                eta: self.calibration_eta(),
                alpha: self.alpha,
            },
        }
    }

    pub fn split_paths(&self) -> SplitPaths {
        SplitPaths {
            train: self.train.clone(),
            valid: self.valid.clone(),
            test: self.test.clone(),
            format: if self.labeled {
                TsvFormat::Labeled
            } else {
                TsvFormat::Positive
            },
            duplicates: if self.dedup {
                DuplicatePolicy::Dedup
            } else {
                DuplicatePolicy::Reject
            },
        }
    }

    /// Checks value ranges and that the dataset files exist.
    pub fn validate(&self) -> Result<()> {
        self.training.validate()?;
        for (name, path) in [("train", &self.train), ("valid", &self.valid), ("test", &self.test)] {
            if path.as_os_str().is_empty() {
                return Err(KgcalError::config(format!("`{name}` path is not set")));
            }
            if !path.is_file() {
                return Err(KgcalError::config(format!("`{name}` file {} does not exist", path.display())));
            }
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(KgcalError::config(format!("alpha must lie in (0, 1), got {}", self.alpha)));
        }
        if self.calibration_eta == Some(0) {
            return Err(KgcalError::config("calibration_eta must be at least 1"));
        }
        if self.methods.is_empty() || self.strategies.is_empty() {
            return Err(KgcalError::config("at least one calibration method and strategy is required"));
        }
        if self.strategies.contains(&StrategyKind::GroundTruth) && !self.labeled {
            return Err(KgcalError::config("ground-truth calibration needs labeled validation data"));
        }
        if self.bins < 2 {
            return Err(KgcalError::config("bins must be at least 2"));
        }
        if self.hits_at.is_empty() || self.hits_at.contains(&0) {
            return Err(KgcalError::config("hits_at must list positive cut-offs"));
        }
        if !(self.clip_eps > 0.0 && self.clip_eps < 0.5) {
            return Err(KgcalError::config("clip_eps must lie in (0, 0.5)"));
        }
        if let Some(a) = self.sweep_alphas.iter().find(|a| !(**a > 0.0 && **a < 1.0)) {
            return Err(KgcalError::config(format!("sweep alpha {a} outside (0, 1)")));
        }
        if self.pool_factor == 0 {
            return Err(KgcalError::config("pool_factor must be at least 1"));
        }
        Ok(())
    }
}
