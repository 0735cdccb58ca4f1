use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use kgcal::calibrator_file::CalibratorFile;
use kgcal::checkpoint::{load_checkpoint, save_checkpoint};
use kgcal::config::{ExperimentConfig, StrategyKind, OUTPUT_ROOT_ENV};
use kgcal::fixtures::PlantedSpec;
use kgcal::pipeline::{self, Dataset, FAILURE_FILE, SENSITIVITY_FILE, SWEEP_FILE};
use kgcal::report::{write_reliability_csv, SUMMARY_FILE};
use kgcal::{KgcalError, Result, StageExt};
use kgcal_core::thresholds::ThresholdSpec;
use kgcal_core::{classify, expit, CalibrationMethod, EmbeddingModel};

/// Train, calibrate and evaluate knowledge-graph embedding models.
#[derive(Debug, Parser)]
#[command(name = "kgcal", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// Flat `key = value` experiment config.
    #[arg(long, short)]
    config: Option<PathBuf>,
    /// Override one config key; may be repeated.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    #[arg(long)]
    train: Option<PathBuf>,
    #[arg(long)]
    valid: Option<PathBuf>,
    #[arg(long)]
    test: Option<PathBuf>,
    /// Validation and test files carry a label column (the default).
    #[arg(long, conflicts_with = "positive_only")]
    labeled: bool,
    /// Validation and test files hold positives only.
    #[arg(long)]
    positive_only: bool,
    /// Output directory; relative paths go under $KGCAL_OUTPUT_ROOT when set.
    #[arg(long, short)]
    output: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Args)]
struct ModelSource {
    /// Use this checkpoint instead of training (or reusing a cached run).
    #[arg(long)]
    checkpoint: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train a model and write its checkpoint.
    Train {
        #[command(flatten)]
        common: Common,
        /// Also copy the checkpoint to this path.
        #[arg(long)]
        save: Option<PathBuf>,
    },
    /// Fit calibrators on the validation split.
    Calibrate {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        source: ModelSource,
        /// Restrict to one method (platt or isotonic).
        #[arg(long)]
        method: Option<CalibrationMethod>,
        /// Restrict to one strategy (ground_truth or synthetic).
        #[arg(long)]
        strategy: Option<StrategyKind>,
    },
    /// Brier score, log loss and reliability diagrams on the test split.
    EvalCalibration {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        source: ModelSource,
        /// Calibrator files to evaluate next to the uncalibrated scores.
        #[arg(long = "calibrator")]
        calibrators: Vec<PathBuf>,
    },
    /// MR, MRR and Hits@N of the test positives.
    EvalRanking {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        source: ModelSource,
        /// Do not filter known positives from the candidate lists.
        #[arg(long)]
        raw: bool,
    },
    /// Triple classification accuracy on the test split.
    Classify {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        source: ModelSource,
        /// Threshold calibrated probabilities from this calibrator file.
        #[arg(long, conflicts_with = "per_relation")]
        calibrator: Option<PathBuf>,
        #[arg(long, default_value_t = 0.5)]
        threshold: f64,
        /// Learn one raw-score threshold per relation on validation.
        #[arg(long)]
        per_relation: bool,
    },
    /// Calibration quality across positive base rates.
    SweepBaseRate {
        #[command(flatten)]
        common: Common,
        /// Comma-separated base rates; defaults to 0.05, 0.10, …, 0.95.
        #[arg(long, value_delimiter = ',')]
        alphas: Vec<f64>,
    },
    /// Brier score over a grid of corruption rates and dimensionalities.
    SweepSensitivity {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',')]
        etas: Vec<usize>,
        #[arg(long, value_delimiter = ',')]
        ks: Vec<usize>,
    },
    /// Run the full pipeline and write the report bundle.
    Report {
        #[command(flatten)]
        common: Common,
    },
    /// Write a planted-structure synthetic dataset and a config for it.
    SynthData {
        /// Target directory.
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 7)]
        seed: u64,
    },
}

fn build_config(common: &Common) -> Result<ExperimentConfig> {
    let mut config = match &common.config {
        Some(path) => ExperimentConfig::from_file(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(p) = &common.train {
        config.train = p.clone();
    }
    if let Some(p) = &common.valid {
        config.valid = p.clone();
    }
    if let Some(p) = &common.test {
        config.test = p.clone();
    }
    if common.labeled {
        config.labeled = true;
    }
    if common.positive_only {
        config.labeled = false;
    }
    if let Some(p) = &common.output {
        config.output = p.clone();
    }
    if let Some(seed) = common.seed {
        config.training.seed = seed;
    }
    config.apply_overrides(&common.set)?;
    let root = std::env::var_os(OUTPUT_ROOT_ENV).map(PathBuf::from);
    config.resolve_output_root(root.as_deref());
    config.validate()?;
    std::fs::create_dir_all(&config.output).map_err(|e| KgcalError::io(&config.output, e))?;
    Ok(config)
}

fn print_json<T: Serialize>(value: &T) -> Result<()> {
    use std::io::Write;
    let text = serde_json::to_string_pretty(value)?;
    match writeln!(std::io::stdout().lock(), "{text}") {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(KgcalError::io("<stdout>", e)),
        _ => Ok(()),
    }
}

/// Loads `checkpoint` if given, otherwise trains or reuses the cached run.
fn obtain_model(config: &ExperimentConfig, data: &Dataset, source: &ModelSource) -> Result<EmbeddingModel> {
    match &source.checkpoint {
        Some(path) => load_checkpoint(path, Some(&data.dictionary_hash)).stage("load-model"),
        None => {
            let log = config.output.join("train_log.jsonl");
            Ok(pipeline::train_or_load(config, &config.training, data, &log).stage("train")?.model)
        }
    }
}

fn prepare(common: &Common) -> Result<(ExperimentConfig, Dataset)> {
    let config = build_config(common).stage("config")?;
    let data = pipeline::load_dataset(&config).stage("ingest")?;
    Ok((config, data))
}

#[derive(Serialize)]
struct EvalRow {
    name: String,
    #[serde(flatten)]
    metrics: kgcal::report::MetricRow,
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train { common, save } => {
            let (config, data) = prepare(&common)?;
            let log = config.output.join("train_log.jsonl");
            let trained = pipeline::train_or_load(&config, &config.training, &data, &log).stage("train")?;
            if let Some(path) = &save {
                save_checkpoint(path, &trained.model, &data.dictionary_hash).stage("train")?;
            }
            #[derive(Serialize)]
            struct Out<'a> {
                checkpoint: &'a Path,
                reused: bool,
                epochs: usize,
                final_mean_loss: Option<f64>,
            }
            print_json(&Out {
                checkpoint: save.as_deref().unwrap_or(&trained.checkpoint),
                reused: trained.reused,
                epochs: trained.history.len(),
                final_mean_loss: trained.history.last().map(|s| s.mean_loss),
            })
        }
        Command::Calibrate {
            common,
            source,
            method,
            strategy,
        } => {
            let (config, data) = prepare(&common)?;
            let model = obtain_model(&config, &data, &source)?;
            let dir = config.output.join("calibrators");
            std::fs::create_dir_all(&dir).map_err(|e| KgcalError::io(&dir, e)).stage("calibrate")?;
            let methods = method.map_or_else(|| config.methods.clone(), |m| vec![m]);
            let strategies = strategy.map_or_else(|| config.strategies.clone(), |s| vec![s]);
            let mut written = Vec::new();
            for &s in &strategies {
                for &m in &methods {
                    let fit = pipeline::fit_calibrator(&config, &data, &model, m, config.strategy(s), s).stage("calibrate")?;
                    let path = dir.join(format!("{}.json", fit.name()));
                    fit.file().save(&path).stage("calibrate")?;
                    written.push(path);
                }
            }
            print_json(&written)
        }
        Command::EvalCalibration {
            common,
            source,
            calibrators,
        } => {
            let (config, data) = prepare(&common)?;
            let model = obtain_model(&config, &data, &source)?;
            let triples: Vec<_> = data.splits.test.iter().map(|lt| lt.triple).collect();
            let labels: Vec<bool> = data.splits.test.iter().map(|lt| lt.label).collect();
            let scores = model.score_all(&triples).stage("evaluate")?;
            let mut predictors = vec![("uncalibrated".to_string(), scores.iter().map(|&s| expit(s)).collect::<Vec<_>>())];
            for path in &calibrators {
                let file = CalibratorFile::load(path).stage("evaluate")?;
                let name = path.file_stem().map_or_else(|| "calibrated".into(), |s| s.to_string_lossy().into_owned());
                predictors.push((name, file.calibrator.apply_all(&scores)));
            }
            let mut rows = Vec::new();
            for (name, probs) in predictors {
                let (metrics, diagram) = pipeline::metric_row(&config, &probs, &labels).stage("evaluate")?;
                write_reliability_csv(&config.output.join(format!("reliability_{name}.csv")), &diagram).stage("evaluate")?;
                rows.push(EvalRow { name, metrics });
            }
            print_json(&rows)
        }
        Command::EvalRanking { common, source, raw } => {
            let (config, data) = prepare(&common)?;
            let model = obtain_model(&config, &data, &source)?;
            let report = pipeline::rank_test(&config, &data, &model, !raw).stage("rank")?;
            let path = config.output.join(kgcal::report::RANKS_FILE);
            std::fs::write(&path, serde_json::to_string_pretty(&report)? + "\n")
                .map_err(|e| KgcalError::io(&path, e))
                .stage("rank")?;
            print_json(&report)
        }
        Command::Classify {
            common,
            source,
            calibrator,
            threshold,
            per_relation,
        } => {
            let (config, data) = prepare(&common)?;
            let model = obtain_model(&config, &data, &source)?;
            let triples: Vec<_> = data.splits.test.iter().map(|lt| lt.triple).collect();
            let labels: Vec<bool> = data.splits.test.iter().map(|lt| lt.label).collect();
            let relations: Vec<usize> = triples.iter().map(|t| t.predicate).collect();
            let scores = model.score_all(&triples).stage("classify")?;
            let result = if per_relation {
                pipeline::threshold_classification(&data, &model).stage("classify")?.accuracy
            } else {
                let probs = match &calibrator {
                    Some(path) => CalibratorFile::load(path).stage("classify")?.calibrator.apply_all(&scores),
                    None => scores.iter().map(|&s| expit(s)).collect(),
                };
                classify(&probs, ThresholdSpec::Single(threshold), &relations, &labels)
                    .stage("classify")?
                    .accuracy
            };
            #[derive(Serialize)]
            struct Out {
                mode: &'static str,
                accuracy: f64,
            }
            let mode = match (per_relation, &calibrator) {
                (true, _) => "per_relation",
                (false, Some(_)) => "calibrated",
                (false, None) => "uncalibrated",
            };
            print_json(&Out { mode, accuracy: result })
        }
        Command::SweepBaseRate { common, alphas } => {
            let config = build_config(&common).stage("config")?;
            let alphas = if alphas.is_empty() { config.sweep_alphas.clone() } else { alphas };
            let rows = pipeline::run_base_rate_sweep(&config, &alphas)?;
            eprintln!("wrote {}", config.output.join(SWEEP_FILE).display());
            print_json(&rows)
        }
        Command::SweepSensitivity { common, etas, ks } => {
            let config = build_config(&common).stage("config")?;
            let etas = if etas.is_empty() { config.sensitivity_etas.clone() } else { etas };
            let ks = if ks.is_empty() { config.sensitivity_ks.clone() } else { ks };
            let cells = pipeline::run_sensitivity(&config, &etas, &ks)?;
            let failed = cells.iter().filter(|c| c.error.is_some()).count();
            eprintln!(
                "wrote {} ({} cells, {failed} failed)",
                config.output.join(SENSITIVITY_FILE).display(),
                cells.len()
            );
            Ok(())
        }
        Command::Report { common } => {
            let config = build_config(&common).stage("config")?;
            let bundle = kgcal::run_pipeline(&config).map_err(|e| {
                eprintln!("partial artifacts kept in {}; see {FAILURE_FILE}", config.output.display());
                e
            })?;
            eprintln!("wrote {}", config.output.join(SUMMARY_FILE).display());
            print_json(&bundle.summary)
        }
        Command::SynthData { out, seed } => {
            let spec = PlantedSpec {
                seed,
                ..PlantedSpec::default()
            };
            let paths = spec.generate().and_then(|d| d.write(&out)).stage("synth-data")?;
            let cfg = out.join("experiment.cfg");
            let text = format!(
                "# planted-structure dataset written by `kgcal synth-data`\ntrain = {}\nvalid = {}\ntest = {}\nlabeled = true\nmodel = transe-l2\nk = 32\nepochs = 300\nlearning_rate = 0.01\nseed = {seed}\noutput = run\n",
                file_name(&paths.train),
                file_name(&paths.valid),
                file_name(&paths.test),
            );
            std::fs::write(&cfg, text).map_err(|e| KgcalError::io(&cfg, e)).stage("synth-data")?;
            eprintln!("wrote {}", cfg.display());
            Ok(())
        }
    }
}

fn file_name(path: &Path) -> String {
    path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default()
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            match &e {
                KgcalError::Stage { stage, source } => eprintln!("error[{stage}]: {source}"),
                other => eprintln!("error: {other}"),
            }
            match e.stage() {
                Some("config") => ExitCode::from(2),
                _ => ExitCode::FAILURE,
            }
        }
    }
}
