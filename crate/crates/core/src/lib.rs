//! Knowledge-graph embedding models with calibrated probability outputs.
//!
//! This crate holds the pure numerical core: triple and graph types, the
//! TransE / DistMult / ComplEx / HolE scoring functions and their gradients,
//! corruption sampling, the training losses and a row-sparse Adam optimizer,
//! Platt and isotonic calibrators with base-rate-preserving sample weights,
//! and the calibration, ranking and triple-classification metrics.
//!
//! It is `no_std` and only needs `alloc`. File formats, the experiment
//! pipeline and the command line live in the `kgcal` crate.
#![no_std]
#![warn(missing_debug_implementations)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod calibration;
pub mod error;
pub mod graph;
pub mod loss;
pub mod math;
pub mod metrics;
pub mod models;
pub mod optim;
pub mod ranking;
pub mod sampling;
pub mod thresholds;
pub mod train;

pub use calibration::{
    calibrate, calibration_sample, calibration_weights, expit, fit_isotonic, fit_platt, fit_sample,
    CalibrationFit, CalibrationInputs, CalibrationMethod, CalibrationWeights, Calibrator,
    IsotonicCalibrator, IsotonicFit, NegativeStrategy, PlattCalibrator, PlattFit, WeightedSample,
};
pub use error::{Error, Result};
pub use graph::{build_filter_index, DatasetSplits, Dictionary, FilterIndex, KnowledgeGraph, LabeledTriple, Triple};
pub use loss::{compute_loss, LossKind, LossOutput};
pub use metrics::{brier_score, log_loss, reliability_bins, ReliabilityBin, ReliabilityDiagram};
pub use models::{init_model, EmbeddingModel, ModelKind, NormOrder};
pub use optim::{Adam, AdamConfig};
pub use ranking::{rank_triple, ranked_eval, RankMode, RankReport, TiePolicy};
pub use sampling::{sample_corruptions, CorruptedSide, CorruptionBatch, SamplingMode};
pub use thresholds::{classify, learn_thresholds, Classification, ThresholdSpec, ThresholdTable};
pub use train::{train, EpochStats, TrainConfig, TrainOutcome};
