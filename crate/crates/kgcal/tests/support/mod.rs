//! Configurations over the planted-structure fixture.
#![allow(dead_code)]

use std::path::Path;

use kgcal::fixtures::write_default_planted;
use kgcal::ExperimentConfig;
use kgcal_core::{LossKind, ModelKind, NormOrder};

/// Writes the default planted dataset to `dir/data` and returns a config
/// reading it, writing to `dir/out`.
pub fn planted_config(dir: &Path) -> ExperimentConfig {
    let paths = write_default_planted(dir.join("data")).expect("fixture");
    let mut config = ExperimentConfig {
        train: paths.train,
        valid: paths.valid,
        test: paths.test,
        labeled: true,
        model: ModelKind::TransE { norm: NormOrder::L2 },
        output: dir.join("out"),
        ..ExperimentConfig::default()
    };
    config.training.seed = 7;
    config.training.loss = LossKind::SelfAdversarial;
    config
}

/// The desk-scale setup: k = 32, 300 epochs, self-adversarial loss.
pub fn desk_config(dir: &Path) -> ExperimentConfig {
    let mut config = planted_config(dir);
    config.training.k = 32;
    config.training.epochs = 300;
    config.training.learning_rate = 1e-2;
    config
}

/// A few epochs at small k, for tests that exercise plumbing only.
pub fn quick_config(dir: &Path) -> ExperimentConfig {
    let mut config = planted_config(dir);
    config.training.k = 8;
    config.training.epochs = 5;
    config.training.eta = 4;
    config.training.learning_rate = 1e-2;
    config
}
