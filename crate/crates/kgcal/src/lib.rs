//! File formats, experiment pipeline and command line for `kgcal-core`.
//!
//! The pipeline trains a knowledge-graph embedding model, calibrates its
//! scores on the validation split and evaluates calibration, ranking and
//! triple classification on the test split. Every artifact is a plain file:
//! TSV datasets, binary checkpoints with a JSON sidecar, JSON calibrators
//! and a report directory of JSON and CSV files.

pub mod calibrator_file;
pub mod checkpoint;
pub mod config;
pub mod error;
pub mod fixtures;
pub mod ingest;
pub mod pipeline;
pub mod report;

pub use config::{ExperimentConfig, StrategyKind};
pub use error::{KgcalError, Result, StageExt};
pub use pipeline::{run_base_rate_sweep, run_pipeline, run_sensitivity};
pub use report::{emit_report, load_report, ReportBundle};
