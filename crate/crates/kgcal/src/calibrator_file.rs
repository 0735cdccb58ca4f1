//! JSON files for fitted calibrators.
//!
//! `{"method": "platt", "a": .., "b": .., "metadata": {..}}` or
//! `{"method": "isotonic", "breakpoints": [..], "values": [..], "metadata": {..}}`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use kgcal_core::{Calibrator, IsotonicCalibrator, PlattCalibrator};

use crate::error::{KgcalError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "lowercase")]
enum Params {
    Platt { a: f64, b: f64 },
    Isotonic { breakpoints: Vec<f64>, values: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibratorMetadata {
    pub strategy: String,
    /// Base rate and corruption rate; absent for ground-truth calibration.
    pub alpha: Option<f64>,
    pub eta: Option<usize>,
    pub seed: u64,
    pub filtered: bool,
    /// SHA-256 of the validation file the calibrator was fitted on.
    pub source_split_hash: String,
    pub degenerate: bool,
    pub sample_size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct FileRepr {
    #[serde(flatten)]
    params: Params,
    metadata: CalibratorMetadata,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CalibratorFile {
    pub calibrator: Calibrator,
    pub metadata: CalibratorMetadata,
}

impl CalibratorFile {
    pub fn to_json(&self) -> Result<String> {
        let params = match &self.calibrator {
            Calibrator::Platt(p) => Params::Platt { a: p.a, b: p.b },
            Calibrator::Isotonic(iso) => Params::Isotonic {
                breakpoints: iso.breakpoints().to_vec(),
                values: iso.values().to_vec(),
            },
        };
        let repr = FileRepr {
            params,
            metadata: self.metadata.clone(),
        };
        Ok(serde_json::to_string_pretty(&repr)? + "\n")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let repr: FileRepr = serde_json::from_str(text)?;
        let calibrator = match repr.params {
            Params::Platt { a, b } => {
                if !(a.is_finite() && b.is_finite()) {
                    return Err(KgcalError::config("platt parameters must be finite"));
                }
                Calibrator::Platt(PlattCalibrator { a, b })
            }
            Params::Isotonic { breakpoints, values } => {
                Calibrator::Isotonic(IsotonicCalibrator::new(breakpoints, values)?)
            }
        };
        Ok(Self {
            calibrator,
            metadata: repr.metadata,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?).map_err(|e| KgcalError::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| KgcalError::io(path, e))?;
        Self::from_json(&text).map_err(|e| match e {
            KgcalError::Json(j) => KgcalError::format(path, j.to_string()),
            other => other,
        })
    }
}
