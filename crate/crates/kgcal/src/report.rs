//! Report bundles and their on-disk layout.
//!
//! A bundle directory holds `summary.json`, one `reliability_<name>.csv` per
//! predictor, `ranks.json` when ranking ran, and `config_echo.json`.
//! Wall-clock information goes to `run_info.json`, which is not part of the
//! bundle, so `summary.json` is identical across reruns.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use kgcal_core::{CalibrationMethod, RankReport, ReliabilityBin, ReliabilityDiagram, TiePolicy, TrainConfig};

use crate::config::{ExperimentConfig, StrategyKind};
use crate::error::{KgcalError, Result};

pub const SCHEMA_VERSION: u32 = 1;
pub const SUMMARY_FILE: &str = "summary.json";
pub const RANKS_FILE: &str = "ranks.json";
pub const CONFIG_ECHO_FILE: &str = "config_echo.json";
pub const RUN_INFO_FILE: &str = "run_info.json";
const RELIABILITY_PREFIX: &str = "reliability_";

/// JSON has no infinities; thresholds may be ±∞, so those are written as
/// the strings `"inf"` / `"-inf"`.
pub mod extended_f64 {
    use super::*;

    #[derive(Serialize, Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Str(String),
    }

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else if *v > 0.0 {
            s.serialize_str("inf")
        } else if *v < 0.0 {
            s.serialize_str("-inf")
        } else {
            s.serialize_str("nan")
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<f64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Num(v) => Ok(v),
            Repr::Str(s) => match s.as_str() {
                "inf" => Ok(f64::INFINITY),
                "-inf" => Ok(f64::NEG_INFINITY),
                "nan" => Ok(f64::NAN),
                other => Err(serde::de::Error::custom(format!("not a number: {other:?}"))),
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub brier: f64,
    pub log_loss: f64,
    /// Accuracy of `probability ≥ 0.5`.
    pub accuracy: f64,
    /// Largest reliability gap over bins holding at least 30 samples.
    pub max_reliability_gap: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibratedRow {
    pub method: CalibrationMethod,
    pub strategy: StrategyKind,
    pub metrics: MetricRow,
    pub degenerate: bool,
    pub sample_size: usize,
}

impl CalibratedRow {
    pub fn name(&self) -> String {
        format!("{}_{}", self.method, self.strategy.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSummary {
    pub train_triples: usize,
    pub entities: usize,
    pub relations: usize,
    pub validation: usize,
    pub validation_positives: usize,
    pub test: usize,
    pub test_positives: usize,
    pub duplicates_dropped: usize,
    /// SHA-256 over the three input files.
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingSummary {
    pub model: String,
    pub config: TrainConfig,
    pub final_mean_loss: Option<f64>,
    pub checkpoint_key: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationSummary {
    pub alpha: f64,
    pub eta: usize,
    pub omega_pos: f64,
    pub omega_neg: f64,
    pub filtered: bool,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationSummary {
    pub bins: usize,
    pub clip_eps: f64,
    pub tie_policy: TiePolicy,
    pub hits_at: Vec<usize>,
    pub decision_threshold: f64,
}

/// Triple classification with relation-specific thresholds learned on the
/// validation raw scores.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdSummary {
    pub accuracy: f64,
    pub fallbacks: usize,
    #[serde(with = "extended_f64")]
    pub global: f64,
    pub per_relation: BTreeMap<String, Threshold>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Threshold(#[serde(with = "extended_f64")] pub f64);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub schema_version: u32,
    pub kgcal_version: String,
    pub dataset: DatasetSummary,
    pub training: TrainingSummary,
    pub calibration: CalibrationSummary,
    pub evaluation: EvaluationSummary,
    pub uncalibrated: MetricRow,
    pub calibrated: Vec<CalibratedRow>,
    pub thresholds: Option<ThresholdSummary>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportBundle {
    pub summary: Summary,
    /// Keyed by predictor name: `uncalibrated` or `<method>_<strategy>`.
    pub reliability: BTreeMap<String, ReliabilityDiagram>,
    pub ranks: Option<RankReport>,
    pub config: ExperimentConfig,
}

#[derive(Debug, Serialize, Deserialize)]
struct CsvBin {
    bin_low: f64,
    bin_high: f64,
    mean_predicted: Option<f64>,
    frequency: Option<f64>,
    count: usize,
}

const CSV_HEADER: [&str; 5] = ["bin_low", "bin_high", "mean_predicted", "frequency", "count"];

pub fn write_reliability_csv(path: &Path, diagram: &ReliabilityDiagram) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_path(path)
        .map_err(|e| KgcalError::format(path, e.to_string()))?;
    w.write_record(CSV_HEADER)?;
    for b in &diagram.bins {
        w.serialize(CsvBin {
            bin_low: b.low,
            bin_high: b.high,
            mean_predicted: b.mean_predicted,
            frequency: b.frequency,
            count: b.count,
        })?;
    }
    w.flush().map_err(|e| KgcalError::io(path, e))
}

pub fn read_reliability_csv(path: &Path) -> Result<ReliabilityDiagram> {
    let mut r = csv::Reader::from_path(path).map_err(|e| KgcalError::format(path, e.to_string()))?;
    let header = r.headers()?.clone();
    if header.iter().ne(CSV_HEADER) {
        return Err(KgcalError::format(path, "unexpected reliability CSV header"));
    }
    let bins = r
        .deserialize::<CsvBin>()
        .map(|row| {
            let b = row.map_err(|e| KgcalError::format(path, e.to_string()))?;
            Ok(ReliabilityBin {
                low: b.bin_low,
                high: b.bin_high,
                mean_predicted: b.mean_predicted,
                frequency: b.frequency,
                count: b.count,
            })
        })
        .collect::<Result<_>>()?;
    Ok(ReliabilityDiagram { bins })
}

pub(crate) fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)? + "\n";
    fs::write(path, text).map_err(|e| KgcalError::io(path, e))
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| KgcalError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| KgcalError::format(path, e.to_string()))
}

/// Writes the bundle files into `dir`, creating it if needed.
pub fn emit_report(bundle: &ReportBundle, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| KgcalError::io(dir, e))?;
    write_json(&dir.join(SUMMARY_FILE), &bundle.summary)?;
    write_json(&dir.join(CONFIG_ECHO_FILE), &bundle.config)?;
    for (name, diagram) in &bundle.reliability {
        write_reliability_csv(&dir.join(format!("{RELIABILITY_PREFIX}{name}.csv")), diagram)?;
    }
    let ranks = dir.join(RANKS_FILE);
    match &bundle.ranks {
        Some(report) => write_json(&ranks, report)?,
        None if ranks.exists() => fs::remove_file(&ranks).map_err(|e| KgcalError::io(&ranks, e))?,
        None => {}
    }
    Ok(())
}

/// Reads a bundle written by [`emit_report`].
pub fn load_report(dir: &Path) -> Result<ReportBundle> {
    let summary: Summary = read_json(&dir.join(SUMMARY_FILE))?;
    if summary.schema_version != SCHEMA_VERSION {
        return Err(KgcalError::format(
            dir.join(SUMMARY_FILE),
            format!("unsupported schema version {}", summary.schema_version),
        ));
    }
    let config = read_json(&dir.join(CONFIG_ECHO_FILE))?;
    let ranks_path = dir.join(RANKS_FILE);
    let ranks = if ranks_path.exists() {
        Some(read_json(&ranks_path)?)
    } else {
        None
    };
    let mut reliability = BTreeMap::new();
    for entry in fs::read_dir(dir).map_err(|e| KgcalError::io(dir, e))? {
        let path = entry.map_err(|e| KgcalError::io(dir, e))?.path();
        let Some(name) = path.file_name().and_then(|n| n.to_str()) else {
            continue;
        };
        if let Some(stem) = name.strip_prefix(RELIABILITY_PREFIX).and_then(|n| n.strip_suffix(".csv")) {
            reliability.insert(stem.to_string(), read_reliability_csv(&path)?);
        }
    }
    Ok(ReportBundle {
        summary,
        reliability,
        ranks,
        config,
    })
}
