//! `gava-loop`: augmentation, training, evaluation, correlation studies and
//! evaluator training-data export, driven by one JSON config and one seed.
//!
//! Exit codes: 0 on success, 1 on invalid input or configuration, 2 when a
//! run fails after validation.

pub mod config;
pub mod report;

use std::fs::{self, File};
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use gava_core::data::{load_dataset, save_dataset, split_dataset, LoadOptions};
use gava_core::evaluator::build_gava_training_instances;
use gava_core::generator::Checkpoint;
use gava_core::metrics::{dataset_accuracy, gava_score_dataset, CorrelationStudy};
use gava_core::strategies::{augment_static, run_sda_pipeline, run_training, TrainingHistory};
use gava_core::{Dataset, GeneratorParams, Provenance, Strategy, StrategyConfig};
use serde_json::Value;

pub use config::{load_config, RunConfig};
pub use report::{write_report, RunReport};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] gava_core::Error),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Config(_) => 1,
            CliError::Core(e) if e.is_validation() => 1,
            CliError::Core(_) | CliError::Io { .. } => 2,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "gava-loop", version, about = "Evaluator-supervised GenQA training runs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Add evaluator-filtered generations as alternate targets.
    Augment(RunArgs),
    /// Train a generator with the configured strategy.
    Train(RunArgs),
    /// Score a checkpoint on a dataset.
    Evaluate(RunArgs),
    /// Pearson and Spearman correlation of metric columns against manual scores.
    Correlate(RunArgs),
    /// Export labeled evaluator training inputs.
    BuildGavaData(RunArgs),
}

#[derive(Debug, Args)]
struct RunArgs {
    /// JSON config file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_parser = ["baseline", "sda", "dda", "lw"])]
    strategy: Option<String>,
    #[arg(long)]
    theta: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// `oracle` or `external:<shell command>`.
    #[arg(long)]
    evaluator: Option<String>,
    /// Output directory; must be absent or empty.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    train: Option<PathBuf>,
    #[arg(long)]
    dev: Option<PathBuf>,
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Any config key, as `key=value`. Applied after the file, before the flags above.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

impl RunArgs {
    fn overrides(&self) -> Result<Vec<(String, Value)>, CliError> {
        let mut out = self
            .set
            .iter()
            .map(|s| config::parse_override(s))
            .collect::<Result<Vec<_>, _>>()?;
        let path = |p: &PathBuf| Value::String(p.to_string_lossy().into_owned());
        if let Some(s) = &self.strategy {
            out.push(("strategy".into(), Value::String(s.clone())));
        }
        if let Some(t) = self.theta {
            let n = serde_json::Number::from_f64(t).ok_or_else(|| CliError::Config(format!("theta {t} is not finite")))?;
            out.push(("theta".into(), Value::Number(n)));
        }
        if let Some(s) = self.seed {
            out.push(("seed".into(), Value::from(s)));
        }
        if let Some(e) = &self.evaluator {
            out.push(("evaluator".into(), Value::String(e.clone())));
        }
        for (key, value) in [
            ("out", &self.out),
            ("train", &self.train),
            ("dev", &self.dev),
            ("input", &self.input),
            ("checkpoint", &self.checkpoint),
        ] {
            if let Some(p) = value {
                out.push((key.into(), path(p)));
            }
        }
        Ok(out)
    }
}

/// Parses `argv` (without the program name), runs the command and returns the
/// process exit code. Errors are printed to stderr.
pub fn run_command<S: AsRef<str>>(argv: &[S]) -> i32 {
    let stdout = std::io::stdout();
    match run(argv, &mut stdout.lock()) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

/// Like [`run_command`] but returns the error and writes command output to `stdout`.
pub fn run<S: AsRef<str>>(argv: &[S], stdout: &mut dyn Write) -> Result<(), CliError> {
    let args = std::iter::once("gava-loop").chain(argv.iter().map(AsRef::as_ref));
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                write!(stdout, "{e}").map_err(|source| stdout_error(source))?;
                return Ok(());
            }
            return Err(CliError::Usage(e.to_string().trim_end().to_string()));
        }
    };
    let started = Instant::now();
    let (name, args) = match &cli.command {
        Command::Augment(a) => ("augment", a),
        Command::Train(a) => ("train", a),
        Command::Evaluate(a) => ("evaluate", a),
        Command::Correlate(a) => ("correlate", a),
        Command::BuildGavaData(a) => ("build-gava-data", a),
    };
    let mut cfg = load_config(args.config.as_deref(), &args.overrides()?)?;
    cfg.resolve_seed()?;
    cfg.validate()?;
    let ctx = Context {
        name,
        hash: cfg.hash(),
        started,
    };
    match cli.command {
        Command::Augment(_) => augment(&cfg, &ctx),
        Command::Train(_) => train(&cfg, &ctx),
        Command::Evaluate(_) => evaluate(&cfg, &ctx, stdout),
        Command::Correlate(_) => correlate(&cfg, stdout),
        Command::BuildGavaData(_) => build_gava_data(&cfg),
    }
}

struct Context {
    name: &'static str,
    hash: String,
    started: Instant,
}

impl Context {
    fn report(&self, cfg: &RunConfig) -> RunReport {
        RunReport::new(self.name, self.hash.clone(), cfg.seed())
    }

    fn finish(&self, mut report: RunReport) -> RunReport {
        report.wall_clock_seconds = self.started.elapsed().as_secs_f64();
        report
    }
}

fn stdout_error(source: std::io::Error) -> CliError {
    CliError::Io {
        path: PathBuf::from("<stdout>"),
        source,
    }
}

fn require<'a>(value: &'a Option<PathBuf>, what: &str) -> Result<&'a Path, CliError> {
    let p = value
        .as_deref()
        .ok_or_else(|| CliError::Config(format!("missing {what} (set --{what} or `{what}` in the config)")))?;
    if !p.exists() {
        return Err(CliError::Config(format!("{what} path {} does not exist", p.display())));
    }
    Ok(p)
}

/// `input` when set, otherwise the named fallback path.
fn input_or<'a>(cfg: &'a RunConfig, fallback: &'a Option<PathBuf>, what: &str) -> Result<&'a Path, CliError> {
    if cfg.input.is_some() {
        require(&cfg.input, "input")
    } else {
        require(fallback, what)
    }
}

fn optional<'a>(value: &'a Option<PathBuf>, what: &str) -> Result<Option<&'a Path>, CliError> {
    match value {
        None => Ok(None),
        Some(_) => require(value, what).map(Some),
    }
}

/// Creates the output directory, refusing one that already holds files.
fn prepare_out(cfg: &RunConfig) -> Result<PathBuf, CliError> {
    let out = cfg
        .out
        .clone()
        .ok_or_else(|| CliError::Config("missing out (set --out)".into()))?;
    if out.exists() {
        let mut entries = fs::read_dir(&out).map_err(|source| CliError::Io {
            path: out.clone(),
            source,
        })?;
        if entries.next().is_some() {
            return Err(CliError::Config(format!("output directory {} is not empty", out.display())));
        }
    } else {
        fs::create_dir_all(&out).map_err(|source| CliError::Io {
            path: out.clone(),
            source,
        })?;
    }
    Ok(out)
}

fn load(path: &Path, cfg: &RunConfig) -> Result<Dataset, CliError> {
    let opts = if cfg.strict {
        LoadOptions::strict(cfg.context_size)
    } else {
        LoadOptions::lenient(cfg.context_size)
    };
    Ok(load_dataset(path, opts)?)
}

/// Training and dev sets, holding out `dev_fraction` of the training file
/// when no dev file is configured.
fn train_dev(cfg: &RunConfig, train_path: &Path) -> Result<(Dataset, Dataset), CliError> {
    let train = load(train_path, cfg)?;
    match optional(&cfg.dev, "dev")? {
        Some(p) => Ok((train, load(p, cfg)?)),
        None => {
            if train.len() < 2 {
                return Err(CliError::Config("need a dev file or at least 2 training examples".into()));
            }
            Ok(split_dataset(&train, cfg.dev_fraction, cfg.seed())?)
        }
    }
}

fn initial_model(cfg: &RunConfig) -> Result<Option<GeneratorParams>, CliError> {
    match optional(&cfg.checkpoint, "checkpoint")? {
        Some(p) => Ok(Some(Checkpoint::load(p)?.params()?)),
        None => Ok(None),
    }
}

fn save_checkpoint(out: &Path, cfg: &RunConfig, model: &GeneratorParams, history: &TrainingHistory) -> Result<(), CliError> {
    let best = history.best().expect("history has its best epoch");
    Checkpoint::new(model, cfg.hash(), best.epoch, best.dev_gava_score).save(out.join("checkpoint.json"))?;
    let path = out.join("history.json");
    fs::write(&path, history.to_json()?).map_err(|source| CliError::Io { path, source })
}

fn augment(cfg: &RunConfig, ctx: &Context) -> Result<(), CliError> {
    let data_path = input_or(cfg, &cfg.train, "train")?;
    let dataset = load(data_path, cfg)?;
    let base = initial_model(cfg)?;
    let out = prepare_out(cfg)?;
    let evaluator = cfg.evaluator()?;
    let mut report = ctx.report(cfg);
    let scfg = cfg.strategy_config();

    let base = match base {
        Some(b) => b,
        None => {
            let (train, dev) = train_dev(cfg, data_path)?;
            let baseline = StrategyConfig {
                strategy: Strategy::Baseline,
                ..scfg.clone()
            };
            let (model, history) = run_training(&GeneratorParams::zeros(), &train, &dev, &*evaluator, &baseline)?;
            save_checkpoint(&out, cfg, &model, &history)?;
            report.base_history = Some(history.epochs.clone());
            model
        }
    };
    let augmented = augment_static(&dataset, &base, &*evaluator, &scfg)?;
    save_dataset(out.join("augmented.jsonl"), &augmented)?;
    report.metrics.augmented_size = Some(augmented.count_provenance(Provenance::Sda));
    write_report(&out.join("report.json"), &ctx.finish(report))
}

fn train(cfg: &RunConfig, ctx: &Context) -> Result<(), CliError> {
    let train_path = require(&cfg.train, "train")?;
    let (train, dev) = train_dev(cfg, train_path)?;
    let init = initial_model(cfg)?.unwrap_or_else(GeneratorParams::zeros);
    let out = prepare_out(cfg)?;
    let evaluator = cfg.evaluator()?;
    let scfg = cfg.strategy_config();
    let mut report = ctx.report(cfg);
    report.strategy = Some(cfg.strategy);

    let (model, history) = if cfg.strategy == Strategy::Sda && train.count_provenance(Provenance::Sda) == 0 {
        let run = run_sda_pipeline(&init, &train, &dev, &*evaluator, &scfg)?;
        save_dataset(out.join("augmented.jsonl"), &run.augmented)?;
        report.base_history = Some(run.base_history.epochs.clone());
        (run.model, run.history)
    } else {
        run_training(&init, &train, &dev, &*evaluator, &scfg)?
    };
    save_checkpoint(&out, cfg, &model, &history)?;

    let best = history.best().expect("history has its best epoch");
    report.metrics.gava_score = Some(best.dev_gava_score);
    report.metrics.accuracy = dataset_accuracy(&dev)?;
    report.metrics.augmented_size = best.augmented_size;
    let report = report.with_history(&history);
    write_report(&out.join("report.json"), &ctx.finish(report))
}

fn evaluate(cfg: &RunConfig, ctx: &Context, stdout: &mut dyn Write) -> Result<(), CliError> {
    let ckpt = require(&cfg.checkpoint, "checkpoint")?;
    let data_path = input_or(cfg, &cfg.dev, "dev")?;
    let model = Checkpoint::load(ckpt)?.params()?;
    let dataset = load(data_path, cfg)?;
    let out = cfg.out.as_ref().map(|_| prepare_out(cfg)).transpose()?;
    let evaluator = cfg.evaluator()?;

    let mut report = ctx.report(cfg);
    report.metrics.gava_score = Some(gava_score_dataset(&model, &dataset, &*evaluator, cfg.strategy_config().reference_policy())?);
    report.metrics.accuracy = dataset_accuracy(&dataset)?;
    let report = ctx.finish(report);
    match out {
        Some(dir) => write_report(&dir.join("report.json"), &report),
        None => stdout.write_all(report.to_json().as_bytes()).map_err(stdout_error),
    }
}

fn correlate(cfg: &RunConfig, stdout: &mut dyn Write) -> Result<(), CliError> {
    let input = require(&cfg.input, "input")?;
    let file = File::open(input).map_err(|source| CliError::Io {
        path: input.to_path_buf(),
        source,
    })?;
    let report = CorrelationStudy::from_csv(BufReader::new(file))?.run()?;
    let mut json = serde_json::to_string_pretty(&report).expect("report serializes");
    json.push('\n');
    match &cfg.out {
        Some(_) => {
            let path = prepare_out(cfg)?.join("correlation.json");
            fs::write(&path, json).map_err(|source| CliError::Io { path, source })
        }
        None => stdout.write_all(json.as_bytes()).map_err(stdout_error),
    }
}

fn build_gava_data(cfg: &RunConfig) -> Result<(), CliError> {
    let data_path = input_or(cfg, &cfg.train, "train")?;
    let dataset = load(data_path, cfg)?;
    let instances = build_gava_training_instances(&dataset, cfg.max_references)?;
    let out = prepare_out(cfg)?;
    let mut text = String::new();
    for inst in &instances {
        let line = serde_json::json!({
            "question_id": inst.question.id,
            "rendered": inst.rendered(),
            "label": inst.label,
        });
        text.push_str(&line.to_string());
        text.push('\n');
    }
    let path = out.join("gava_train.jsonl");
    fs::write(&path, text).map_err(|source| CliError::Io { path, source })
}
