//! Experiment orchestration: train, calibrate on validation, evaluate on
//! test, plus the base-rate and η/k sweeps.

use std::collections::{BTreeMap, HashSet};
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use kgcal_core::math::derive_seed;
use kgcal_core::thresholds::ThresholdSpec;
use kgcal_core::{
    brier_score, build_filter_index, calibrate, calibration_weights, classify, expit, learn_thresholds, log_loss,
    ranked_eval, reliability_bins, train, CalibrationFit, CalibrationInputs, CalibrationMethod, DatasetSplits,
    EmbeddingModel, EpochStats, FilterIndex, LabeledTriple, NegativeStrategy, RankReport, ReliabilityDiagram,
    TrainConfig, Triple,
};

use crate::calibrator_file::{CalibratorFile, CalibratorMetadata};
use crate::checkpoint::{dictionary_hash, load_checkpoint, save_checkpoint};
use crate::config::{ExperimentConfig, StrategyKind};
use crate::error::{KgcalError, Result, StageExt};
use crate::ingest::{load_splits, IngestStats};
use crate::report::{
    emit_report, write_json, CalibratedRow, CalibrationSummary, DatasetSummary, EvaluationSummary, MetricRow,
    ReportBundle, Summary, Threshold, ThresholdSummary, TrainingSummary, RUN_INFO_FILE, SCHEMA_VERSION,
};

/// Bins with fewer samples are ignored when reporting the reliability gap.
pub const GAP_MIN_COUNT: usize = 30;
pub const FAILURE_FILE: &str = "failure.json";
pub const SWEEP_FILE: &str = "sweep_base_rate.csv";
pub const SENSITIVITY_FILE: &str = "sensitivity.csv";

// Independent random streams derived from the run seed.
const CALIBRATION_STREAM: u64 = 0xCA11_B8A7;
const POOL_STREAM: u64 = 0x9001;
const SWEEP_STREAM: u64 = 0x5EE9;

#[derive(Debug, Clone)]
pub struct Dataset {
    pub splits: DatasetSplits,
    pub filter: FilterIndex,
    pub stats: IngestStats,
    /// SHA-256 of the training, validation and test files together.
    pub sha256: String,
    pub valid_sha256: String,
    pub dictionary_hash: String,
}

fn file_digest(path: &Path) -> Result<[u8; 32]> {
    let bytes = fs::read(path).map_err(|e| KgcalError::io(path, e))?;
    Ok(Sha256::digest(&bytes).into())
}

pub fn load_dataset(config: &ExperimentConfig) -> Result<Dataset> {
    let paths = config.split_paths();
    let (splits, stats) = load_splits(&paths)?;
    let filter = build_filter_index(&splits);
    let mut all = Sha256::new();
    let mut valid_sha256 = String::new();
    for path in [&paths.train, &paths.valid, &paths.test] {
        let digest = file_digest(path)?;
        if path == &paths.valid {
            valid_sha256 = hex::encode(digest);
        }
        all.update(digest);
    }
    let dictionary_hash = dictionary_hash(&splits.train.entities, &splits.train.relations);
    Ok(Dataset {
        splits,
        filter,
        stats,
        sha256: hex::encode(all.finalize()),
        valid_sha256,
        dictionary_hash,
    })
}

#[derive(Debug, Clone)]
pub struct TrainedModel {
    pub model: EmbeddingModel,
    pub history: Vec<EpochStats>,
    pub checkpoint: PathBuf,
    pub key: String,
    pub reused: bool,
}

/// Content hash identifying a training run: dataset, model kind and the
/// full training configuration.
pub fn checkpoint_key(data: &Dataset, config: &ExperimentConfig, training: &TrainConfig) -> Result<String> {
    let mut h = Sha256::new();
    h.update(data.sha256.as_bytes());
    h.update(config.model.to_string().as_bytes());
    h.update(serde_json::to_vec(training)?);
    Ok(hex::encode(h.finalize())[..16].to_string())
}

#[derive(Serialize)]
struct LogLine {
    epoch: usize,
    mean_loss: f64,
    wall_ms: u128,
}

/// Trains with `training`, or loads the cached checkpoint of an identical
/// earlier run. Every epoch is appended to `log_path` as a JSON line.
pub fn train_or_load(
    config: &ExperimentConfig,
    training: &TrainConfig,
    data: &Dataset,
    log_path: &Path,
) -> Result<TrainedModel> {
    let key = checkpoint_key(data, config, training)?;
    let dir = config.output.join("checkpoints");
    let checkpoint = dir.join(format!("{key}.ckpt"));
    let history_path = dir.join(format!("{key}.history.json"));
    if config.reuse_checkpoints && checkpoint.is_file() && history_path.is_file() {
        let model = load_checkpoint(&checkpoint, Some(&data.dictionary_hash))?;
        let text = fs::read_to_string(&history_path).map_err(|e| KgcalError::io(&history_path, e))?;
        let history = serde_json::from_str(&text)?;
        return Ok(TrainedModel {
            model,
            history,
            checkpoint,
            key,
            reused: true,
        });
    }
    fs::create_dir_all(&dir).map_err(|e| KgcalError::io(&dir, e))?;
    let log_file = File::create(log_path).map_err(|e| KgcalError::io(log_path, e))?;
    let mut log = BufWriter::new(log_file);
    let mut log_error = None;
    let start = Instant::now();
    let outcome = train(&data.splits.train, config.model, training, |stats| {
        let line = LogLine {
            epoch: stats.epoch,
            mean_loss: stats.mean_loss,
            wall_ms: start.elapsed().as_millis(),
        };
        let written = serde_json::to_string(&line)
            .map_err(KgcalError::from)
            .and_then(|s| writeln!(log, "{s}").map_err(|e| KgcalError::io(log_path, e)));
        if let Err(e) = written {
            log_error.get_or_insert(e);
        }
    });
    log.flush().map_err(|e| KgcalError::io(log_path, e))?;
    if let Some(e) = log_error {
        return Err(e);
    }
    let outcome = outcome?;
    save_checkpoint(&checkpoint, &outcome.model, &data.dictionary_hash)?;
    write_json(&history_path, &outcome.history)?;
    Ok(TrainedModel {
        model: outcome.model,
        history: outcome.history,
        checkpoint,
        key,
        reused: false,
    })
}

pub fn calibration_seed(config: &ExperimentConfig) -> u64 {
    derive_seed(config.training.seed, CALIBRATION_STREAM, 0)
}

fn split_scores(model: &EmbeddingModel, split: &[LabeledTriple]) -> Result<(Vec<f64>, Vec<bool>)> {
    let triples: Vec<Triple> = split.iter().map(|lt| lt.triple).collect();
    let scores = model.score_all(&triples)?;
    Ok((scores, split.iter().map(|lt| lt.label).collect()))
}

#[derive(Debug, Clone)]
pub struct FittedCalibrator {
    pub method: CalibrationMethod,
    pub strategy: StrategyKind,
    pub fit: CalibrationFit,
    pub metadata: CalibratorMetadata,
}

impl FittedCalibrator {
    pub fn name(&self) -> String {
        format!("{}_{}", self.method, self.strategy.name())
    }

    pub fn file(&self) -> CalibratorFile {
        CalibratorFile {
            calibrator: self.fit.calibrator.clone(),
            metadata: self.metadata.clone(),
        }
    }
}

/// Fits one calibrator on the validation split.
pub fn fit_calibrator(
    config: &ExperimentConfig,
    data: &Dataset,
    model: &EmbeddingModel,
    method: CalibrationMethod,
    strategy: NegativeStrategy,
    strategy_kind: StrategyKind,
) -> Result<FittedCalibrator> {
    let (scores, labels) = split_scores(model, &data.splits.validation)?;
    let pos_scores: Vec<f64> = scores.iter().zip(&labels).filter(|(_, &l)| l).map(|(&s, _)| s).collect();
    let neg_scores: Vec<f64> = scores.iter().zip(&labels).filter(|(_, &l)| !l).map(|(&s, _)| s).collect();
    let pos_triples = data.splits.validation_positives();
    let scorer = |ts: &[Triple]| ts.iter().map(|t| model.score_unchecked(t)).collect::<Vec<f64>>();
    let seed = calibration_seed(config);
    let inputs = match strategy {
        NegativeStrategy::GroundTruth => CalibrationInputs::ground_truth(&pos_scores, &neg_scores),
        NegativeStrategy::Synthetic { .. } => {
            let mut inputs =
                CalibrationInputs::synthetic(&pos_triples, &pos_scores, &scorer, model.num_entities(), seed);
            inputs.sampling = config.training.sampling;
            inputs.filter = config.calibration_filtered.then_some(&data.filter);
            inputs
        }
    };
    let fit = calibrate(&strategy, method, &inputs)?;
    let (alpha, eta) = match strategy {
        NegativeStrategy::GroundTruth => (None, None),
        NegativeStrategy::Synthetic { eta, alpha } => (Some(alpha), Some(eta)),
    };
    let metadata = CalibratorMetadata {
        strategy: strategy.name().to_string(),
        alpha,
        eta,
        seed,
        filtered: config.calibration_filtered && alpha.is_some(),
        source_split_hash: data.valid_sha256.clone(),
        degenerate: fit.degenerate,
        sample_size: fit.sample_size,
    };
    Ok(FittedCalibrator {
        method,
        strategy: strategy_kind,
        fit,
        metadata,
    })
}

/// Fits every configured method × strategy.
pub fn fit_calibrators(
    config: &ExperimentConfig,
    data: &Dataset,
    model: &EmbeddingModel,
) -> Result<Vec<FittedCalibrator>> {
    let mut out = Vec::new();
    for &strategy in &config.strategies {
        for &method in &config.methods {
            out.push(fit_calibrator(config, data, model, method, config.strategy(strategy), strategy)?);
        }
    }
    Ok(out)
}

pub fn metric_row(config: &ExperimentConfig, probs: &[f64], labels: &[bool]) -> Result<(MetricRow, ReliabilityDiagram)> {
    let diagram = reliability_bins(probs, labels, config.bins)?;
    let row = MetricRow {
        brier: brier_score(probs, labels)?,
        log_loss: log_loss(probs, labels, config.clip_eps)?,
        accuracy: classify(probs, ThresholdSpec::Single(0.5), &[], labels)?.accuracy,
        max_reliability_gap: diagram.max_gap(GAP_MIN_COUNT),
    };
    Ok((row, diagram))
}

/// Relation-specific raw-score thresholds learned on validation and
/// applied to test.
pub fn threshold_classification(data: &Dataset, model: &EmbeddingModel) -> Result<ThresholdSummary> {
    let (v_scores, v_labels) = split_scores(model, &data.splits.validation)?;
    let v_rel: Vec<usize> = data.splits.validation.iter().map(|lt| lt.triple.predicate).collect();
    let table = learn_thresholds(&v_scores, &v_labels, &v_rel)?;
    let (t_scores, t_labels) = split_scores(model, &data.splits.test)?;
    let t_rel: Vec<usize> = data.splits.test.iter().map(|lt| lt.triple.predicate).collect();
    let result = classify(&t_scores, ThresholdSpec::PerRelation(&table), &t_rel, &t_labels)?;
    let relations = &data.splits.train.relations;
    let per_relation = table
        .per_relation
        .iter()
        .map(|(&r, &tau)| {
            let name = relations.label(r).map_or_else(|| r.to_string(), str::to_string);
            (name, Threshold(tau))
        })
        .collect();
    Ok(ThresholdSummary {
        accuracy: result.accuracy,
        fallbacks: result.fallbacks,
        global: table.global,
        per_relation,
    })
}

pub fn rank_test(config: &ExperimentConfig, data: &Dataset, model: &EmbeddingModel, filtered: bool) -> Result<RankReport> {
    let positives = data.splits.test_positives();
    let filter = filtered.then_some(&data.filter);
    Ok(ranked_eval(model, &positives, filter, &config.hits_at, config.ties)?)
}

#[derive(Debug, Serialize)]
struct RunInfo {
    started_unix_ms: u128,
    wall_ms: u128,
    checkpoint: PathBuf,
    checkpoint_reused: bool,
}

#[derive(Debug, Serialize)]
struct Failure<'a> {
    stage: &'a str,
    error: String,
}

/// Runs the whole experiment and writes the bundle to `config.output`.
///
/// Artifacts are written as soon as they exist: the checkpoint after
/// training, each calibrator after fitting. When a stage fails,
/// `failure.json` names it and the error is returned tagged with the stage.
pub fn run_pipeline(config: &ExperimentConfig) -> Result<ReportBundle> {
    let out = &config.output;
    fs::create_dir_all(out).map_err(|e| KgcalError::io(out, e)).stage("setup")?;
    let failure = out.join(FAILURE_FILE);
    if failure.exists() {
        fs::remove_file(&failure).map_err(|e| KgcalError::io(&failure, e)).stage("setup")?;
    }
    let result = pipeline_stages(config);
    if let Err(e) = &result {
        let record = Failure {
            stage: e.stage().unwrap_or("unknown"),
            error: e.without_stage().to_string(),
        };
        // The original error matters more than a failure to record it.
        let _ = write_json(&failure, &record);
    }
    result
}

fn pipeline_stages(config: &ExperimentConfig) -> Result<ReportBundle> {
    let started = std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map_or(0, |d| d.as_millis());
    let clock = Instant::now();
    config.validate().stage("config")?;
    let out = &config.output;
    let data = load_dataset(config).stage("ingest")?;
    let trained = train_or_load(config, &config.training, &data, &out.join("train_log.jsonl")).stage("train")?;
    let model = &trained.model;

    let calibrators = fit_calibrators(config, &data, model).stage("calibrate")?;
    let cal_dir = out.join("calibrators");
    fs::create_dir_all(&cal_dir).map_err(|e| KgcalError::io(&cal_dir, e)).stage("calibrate")?;
    for c in &calibrators {
        c.file().save(&cal_dir.join(format!("{}.json", c.name()))).stage("calibrate")?;
    }

    let (scores, labels) = split_scores(model, &data.splits.test).stage("evaluate")?;
    let mut reliability = BTreeMap::new();
    let uncal_probs: Vec<f64> = scores.iter().map(|&s| expit(s)).collect();
    let (uncalibrated, diagram) = metric_row(config, &uncal_probs, &labels).stage("evaluate")?;
    reliability.insert("uncalibrated".to_string(), diagram);
    let mut calibrated = Vec::new();
    for c in &calibrators {
        let probs = c.fit.calibrator.apply_all(&scores);
        let (metrics, diagram) = metric_row(config, &probs, &labels).stage("evaluate")?;
        reliability.insert(c.name(), diagram);
        calibrated.push(CalibratedRow {
            method: c.method,
            strategy: c.strategy,
            metrics,
            degenerate: c.fit.degenerate,
            sample_size: c.fit.sample_size,
        });
    }
    let thresholds = if config.labeled {
        Some(threshold_classification(&data, model).stage("evaluate")?)
    } else {
        None
    };
    let ranks = if config.ranking && data.splits.test.iter().any(|lt| lt.label) {
        Some(rank_test(config, &data, model, true).stage("rank")?)
    } else {
        None
    };

    let weights = calibration_weights(config.alpha, config.calibration_eta()).stage("report")?;
    let splits = &data.splits;
    let summary = Summary {
        schema_version: SCHEMA_VERSION,
        kgcal_version: env!("CARGO_PKG_VERSION").to_string(),
        dataset: DatasetSummary {
            train_triples: splits.train.len(),
            entities: splits.train.num_entities(),
            relations: splits.train.num_relations(),
            validation: splits.validation.len(),
            validation_positives: splits.validation.iter().filter(|lt| lt.label).count(),
            test: splits.test.len(),
            test_positives: splits.test.iter().filter(|lt| lt.label).count(),
            duplicates_dropped: data.stats.duplicates_dropped,
            sha256: data.sha256.clone(),
        },
        training: TrainingSummary {
            model: config.model.to_string(),
            config: config.training.clone(),
            final_mean_loss: trained.history.last().map(|s| s.mean_loss),
            checkpoint_key: trained.key.clone(),
        },
        calibration: CalibrationSummary {
            alpha: config.alpha,
            eta: config.calibration_eta(),
            omega_pos: weights.omega_pos,
            omega_neg: weights.omega_neg,
            filtered: config.calibration_filtered,
            seed: calibration_seed(config),
        },
        evaluation: EvaluationSummary {
            bins: config.bins,
            clip_eps: config.clip_eps,
            tie_policy: config.ties,
            hits_at: config.hits_at.clone(),
            decision_threshold: 0.5,
        },
        uncalibrated,
        calibrated,
        thresholds,
    };
    let bundle = ReportBundle {
        summary,
        reliability,
        ranks,
        config: config.clone(),
    };
    emit_report(&bundle, out).stage("report")?;
    let info = RunInfo {
        started_unix_ms: started,
        wall_ms: clock.elapsed().as_millis(),
        checkpoint: trained.checkpoint.clone(),
        checkpoint_reused: trained.reused,
    };
    write_json(&out.join(RUN_INFO_FILE), &info).stage("report")?;
    Ok(bundle)
}

/// Predictors compared in the base-rate sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Predictor {
    Platt,
    Isotonic,
    Uncalibrated,
    Baseline,
}

impl From<CalibrationMethod> for Predictor {
    fn from(m: CalibrationMethod) -> Self {
        match m {
            CalibrationMethod::Platt => Predictor::Platt,
            CalibrationMethod::Isotonic => Predictor::Isotonic,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub alpha: f64,
    pub predictor: Predictor,
    pub brier: f64,
    pub log_loss: f64,
    pub positives: usize,
    pub negatives: usize,
}

/// Entropy of a Bernoulli(α) outcome: the log loss of always predicting α
/// on a sample whose positive rate is α.
pub fn baseline_log_loss(alpha: f64) -> f64 {
    -(alpha * alpha.ln() + (1.0 - alpha) * (1.0 - alpha).ln())
}

/// Closed-world negatives: one-side corruptions of `positives` that are not
/// known positives, without repeats. Stops after `target` triples or when
/// draws keep hitting known or already pooled triples.
pub fn negative_pool(
    positives: &[Triple],
    entity_count: usize,
    filter: &FilterIndex,
    target: usize,
    seed: u64,
) -> Vec<Triple> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pool = Vec::with_capacity(target);
    let mut seen = HashSet::with_capacity(target);
    let max_draws = 100 * target.max(1);
    if positives.is_empty() || entity_count < 2 {
        return pool;
    }
    for _ in 0..max_draws {
        if pool.len() == target {
            break;
        }
        let t = positives[rng.gen_range(0..positives.len())];
        let mut e = rng.gen_range(0..entity_count - 1);
        let candidate = if rng.gen_bool(0.5) {
            if e >= t.subject {
                e += 1;
            }
            Triple::new(e, t.predicate, t.object)
        } else {
            if e >= t.object {
                e += 1;
            }
            Triple::new(t.subject, t.predicate, e)
        };
        if !filter.contains(&candidate) && seen.insert(candidate) {
            pool.push(candidate);
        }
    }
    pool
}

/// Positive and negative counts giving base rate `alpha` without exceeding
/// the available triples.
fn sweep_counts(alpha: f64, positives: usize, negatives: usize) -> (usize, usize) {
    let ratio = alpha / (1.0 - alpha);
    let wanted = (ratio * negatives as f64).round() as usize;
    if wanted <= positives {
        (wanted.max(1), negatives)
    } else {
        (positives, ((positives as f64 / ratio).round() as usize).max(1))
    }
}

/// For each α: synthetic calibration with that base rate on the validation
/// positives, then evaluation on test positives mixed with closed-world
/// negatives at positive rate α. Rows come in the order of `alphas`; every
/// α uses random streams derived from its own value.
pub fn run_base_rate_sweep(config: &ExperimentConfig, alphas: &[f64]) -> Result<Vec<SweepRow>> {
    if let Some(a) = alphas.iter().find(|a| !(**a > 0.0 && **a < 1.0)) {
        return Err(KgcalError::Core(kgcal_core::Error::Domain(format!("alpha {a} outside (0, 1)")))).stage("config");
    }
    config.training.validate().map_err(KgcalError::from).stage("config")?;
    fs::create_dir_all(&config.output).map_err(|e| KgcalError::io(&config.output, e)).stage("setup")?;
    let data = load_dataset(config).stage("ingest")?;
    let trained = train_or_load(config, &config.training, &data, &config.output.join("train_log.jsonl")).stage("train")?;
    let model = &trained.model;

    let test_pos = data.splits.test_positives();
    if test_pos.is_empty() {
        return Err(KgcalError::config("base-rate sweep needs test positives")).stage("sweep");
    }
    let target = config.pool_factor * test_pos.len();
    let pool_seed = derive_seed(config.training.seed, POOL_STREAM, 0);
    let pool = negative_pool(&test_pos, model.num_entities(), &data.filter, target, pool_seed);
    if pool.is_empty() {
        return Err(KgcalError::config("no closed-world negatives could be drawn")).stage("sweep");
    }
    let pos_scores = model.score_all(&test_pos).stage("sweep")?;
    let neg_scores = model.score_all(&pool).stage("sweep")?;

    let mut rows = Vec::new();
    for &alpha in alphas {
        let (n_pos, n_neg) = sweep_counts(alpha, test_pos.len(), pool.len());
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.training.seed, SWEEP_STREAM, alpha.to_bits()));
        let mut scores: Vec<f64> = pos_scores.choose_multiple(&mut rng, n_pos).copied().collect();
        scores.extend(neg_scores.choose_multiple(&mut rng, n_neg).copied());
        let labels: Vec<bool> = (0..n_pos + n_neg).map(|i| i < n_pos).collect();

        let mut push = |predictor, probs: &[f64]| -> Result<()> {
            rows.push(SweepRow {
                alpha,
                predictor,
                brier: brier_score(probs, &labels)?,
                log_loss: log_loss(probs, &labels, config.clip_eps)?,
                positives: n_pos,
                negatives: n_neg,
            });
            Ok(())
        };
        let strategy = NegativeStrategy::Synthetic {
            eta: config.calibration_eta(),
            alpha,
        };
        for &method in &config.methods {
            let fit = fit_calibrator(config, &data, model, method, strategy, StrategyKind::Synthetic).stage("calibrate")?;
            push(method.into(), &fit.fit.calibrator.apply_all(&scores)).stage("sweep")?;
        }
        let uncal: Vec<f64> = scores.iter().map(|&s| expit(s)).collect();
        push(Predictor::Uncalibrated, &uncal).stage("sweep")?;
        push(Predictor::Baseline, &vec![alpha; scores.len()]).stage("sweep")?;
    }
    write_sweep_csv(&config.output.join(SWEEP_FILE), &rows).stage("report")?;
    Ok(rows)
}

pub fn write_sweep_csv(path: &Path, rows: &[SweepRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| KgcalError::format(path, e.to_string()))?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush().map_err(|e| KgcalError::io(path, e))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SensitivityCell {
    pub eta: usize,
    pub k: usize,
    pub uncalibrated_brier: Option<f64>,
    /// Test Brier per `<method>_<strategy>`.
    pub calibrated_brier: BTreeMap<String, f64>,
    pub error: Option<String>,
}

/// Unique grid points in first-appearance order.
pub fn sensitivity_grid(etas: &[usize], ks: &[usize]) -> Vec<(usize, usize)> {
    let mut seen = HashSet::new();
    etas.iter()
        .flat_map(|&eta| ks.iter().map(move |&k| (eta, k)))
        .filter(|cell| seen.insert(*cell))
        .collect()
}

fn sensitivity_cell(config: &ExperimentConfig, data: &Dataset, eta: usize, k: usize) -> Result<SensitivityCell> {
    let mut cell_config = config.clone();
    cell_config.training.eta = eta;
    cell_config.training.k = k;
    cell_config.calibration_eta = Some(eta);
    let log = config.output.join(format!("train_log_eta{eta}_k{k}.jsonl"));
    let trained = train_or_load(&cell_config, &cell_config.training, data, &log).stage("train")?;
    let (scores, labels) = split_scores(&trained.model, &data.splits.test).stage("evaluate")?;
    let uncal: Vec<f64> = scores.iter().map(|&s| expit(s)).collect();
    let uncalibrated_brier = Some(brier_score(&uncal, &labels).stage("evaluate")?);
    let mut calibrated_brier = BTreeMap::new();
    for c in fit_calibrators(&cell_config, data, &trained.model).stage("calibrate")? {
        let probs = c.fit.calibrator.apply_all(&scores);
        calibrated_brier.insert(c.name(), brier_score(&probs, &labels).stage("evaluate")?);
    }
    Ok(SensitivityCell {
        eta,
        k,
        uncalibrated_brier,
        calibrated_brier,
        error: None,
    })
}

/// Trains and calibrates every (η, k) cell. A failing cell is recorded with
/// its error and the sweep moves on.
pub fn run_sensitivity(config: &ExperimentConfig, etas: &[usize], ks: &[usize]) -> Result<Vec<SensitivityCell>> {
    config.training.validate().map_err(KgcalError::from).stage("config")?;
    fs::create_dir_all(&config.output).map_err(|e| KgcalError::io(&config.output, e)).stage("setup")?;
    let data = load_dataset(config).stage("ingest")?;
    let cells: Vec<SensitivityCell> = sensitivity_grid(etas, ks)
        .into_iter()
        .map(|(eta, k)| {
            sensitivity_cell(config, &data, eta, k).unwrap_or_else(|e| SensitivityCell {
                eta,
                k,
                uncalibrated_brier: None,
                calibrated_brier: BTreeMap::new(),
                error: Some(e.to_string()),
            })
        })
        .collect();
    write_sensitivity_csv(&config.output.join(SENSITIVITY_FILE), config, &cells).stage("report")?;
    Ok(cells)
}

pub fn write_sensitivity_csv(path: &Path, config: &ExperimentConfig, cells: &[SensitivityCell]) -> Result<()> {
    let names: Vec<String> = config
        .strategies
        .iter()
        .flat_map(|s| config.methods.iter().map(move |m| format!("{m}_{}", s.name())))
        .collect();
    let mut w = csv::Writer::from_path(path).map_err(|e| KgcalError::format(path, e.to_string()))?;
    let mut header = vec!["eta".to_string(), "k".to_string(), "uncalibrated".to_string()];
    header.extend(names.iter().cloned());
    header.push("error".to_string());
    w.write_record(&header)?;
    let fmt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for c in cells {
        let mut record = vec![c.eta.to_string(), c.k.to_string(), fmt(c.uncalibrated_brier)];
        record.extend(names.iter().map(|n| fmt(c.calibrated_brier.get(n).copied())));
        record.push(c.error.clone().unwrap_or_default());
        w.write_record(&record)?;
    }
    w.flush().map_err(|e| KgcalError::io(path, e))
}
