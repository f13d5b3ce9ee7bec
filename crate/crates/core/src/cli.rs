//! Command-line front end: `train`, `predict`, `score`, `analyze-errors`,
//! and `generate`.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 data error,
//! 3 numeric failure.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::config::RunConfig;
use crate::corpus::{self, Document};
use crate::error::{CorefError, Result};
use crate::error_analysis;
use crate::evaluation::{self, EvalOptions, MentionMode};
use crate::inference::{self, PredictOptions, PredictionResult};
use crate::synthetic::{self, SyntheticConfig};
use crate::training::{self, Checkpoint};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;

pub const CHECKPOINT_FILE: &str = "model.ckpt";
pub const BEST_CHECKPOINT_FILE: &str = "best.ckpt";
pub const METRICS_FILE: &str = "metrics.jsonl";
pub const CONFIG_SNAPSHOT: &str = "config.toml";

#[derive(Debug, Parser)]
#[command(
    name = "coref-mtl",
    version,
    about = "Multi-task span-ranking coreference resolution"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a model and write checkpoint, metrics log, and config snapshot.
    Train(TrainArgs),
    /// Predict clusters and typed mentions with a trained checkpoint.
    Predict(PredictArgs),
    /// Score a response file against a key file.
    Score(ScoreArgs),
    /// Contrast the resolution errors of two systems.
    AnalyzeErrors(AnalyzeArgs),
    /// Write a synthetic corpus (CoNLL, sidecar, and JSONL).
    Generate(GenerateArgs),
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// TOML run configuration.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Task-weight preset: baseline, sg, sg_ent, sg_ent_infs.
    #[arg(long)]
    pub preset: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub steps: Option<usize>,
    /// Training documents (`.conll` or `.jsonl`).
    #[arg(long, required = true, num_args = 1..)]
    pub train: Vec<PathBuf>,
    /// Sidecar mention layers merged into the training documents.
    #[arg(long, num_args = 1..)]
    pub sidecar: Vec<PathBuf>,
    #[arg(long, num_args = 1..)]
    pub dev: Vec<PathBuf>,
    #[arg(long)]
    pub output: PathBuf,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Optional configuration; its model block must match the checkpoint.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub input: PathBuf,
    /// JSONL predictions.
    #[arg(long)]
    pub output: PathBuf,
    /// Also write CoNLL predictions here.
    #[arg(long)]
    pub conll: Option<PathBuf>,
    /// Singleton probability threshold.
    #[arg(long)]
    pub threshold: Option<f64>,
    #[arg(long)]
    pub no_singletons: bool,
}

#[derive(Debug, Args)]
pub struct ScoreArgs {
    pub key: PathBuf,
    pub response: PathBuf,
    #[arg(long)]
    pub keep_singletons: bool,
    #[arg(long, value_enum, default_value_t = MentionMode::Coreferent)]
    pub mention_mode: MentionMode,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    pub gold: PathBuf,
    pub system_a: PathBuf,
    pub system_b: PathBuf,
    #[arg(long, default_value = "A")]
    pub name_a: String,
    #[arg(long, default_value = "B")]
    pub name_b: String,
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[arg(long, default_value_t = 20)]
    pub documents: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 0.4)]
    pub singleton_ratio: f64,
    #[arg(long, default_value_t = 0.5)]
    pub distractor_rate: f64,
    /// Output stem; writes `<stem>.conll`, `<stem>.sidecar.tsv`, `<stem>.jsonl`.
    #[arg(long)]
    pub output: PathBuf,
}

fn exit_code(e: &CorefError) -> i32 {
    match e {
        CorefError::Config(_) => EXIT_USAGE,
        CorefError::NonFiniteLoss { .. } => EXIT_NUMERIC,
        _ => EXIT_DATA,
    }
}

/// Parses `args` (program name first) and runs the subcommand.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let text = e.render().to_string();
            let _ = if code == EXIT_OK {
                write!(out, "{text}")
            } else {
                write!(err, "{text}")
            };
            return code;
        }
    };
    match dispatch(cli.command, out) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            exit_code(&e)
        }
    }
}

fn dispatch(cmd: Command, out: &mut dyn Write) -> Result<()> {
    match cmd {
        Command::Train(a) => cmd_train(&a, out),
        Command::Predict(a) => cmd_predict(&a, out),
        Command::Score(a) => cmd_score(&a, out),
        Command::AnalyzeErrors(a) => cmd_analyze_errors(&a, out),
        Command::Generate(a) => cmd_generate(&a, out),
    }
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| CorefError::io(path, e))
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    std::fs::write(path, contents).map_err(|e| CorefError::io(path, e))
}

fn emit(out: &mut dyn Write, text: &str) -> Result<()> {
    writeln!(out, "{text}").map_err(|e| CorefError::io("<stdout>", e))
}

/// Reads documents by extension: `.jsonl` as JSON lines, anything else as CoNLL.
pub fn read_documents(path: &Path) -> Result<Vec<Document>> {
    let text = read(path)?;
    if path.extension().is_some_and(|e| e == "jsonl") {
        corpus::parse_jsonl(&text)
    } else {
        corpus::parse_conll(&text)
    }
}

fn read_all(paths: &[PathBuf], sidecars: &[PathBuf]) -> Result<Vec<Document>> {
    let mut docs = Vec::new();
    for p in paths {
        docs.extend(read_documents(p)?);
    }
    for s in sidecars {
        let rows = corpus::parse_sidecar(&read(s)?)?;
        docs = corpus::merge_sidecar_corpus(docs, &rows)?;
    }
    Ok(docs)
}

pub fn cmd_train(a: &TrainArgs, out: &mut dyn Write) -> Result<()> {
    let mut cfg = match &a.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(name) = &a.preset {
        cfg.apply_preset(name)?;
    }
    if let Some(seed) = a.seed {
        cfg.train.seed = seed;
    }
    if let Some(steps) = a.steps {
        cfg.train.steps = steps;
    }
    cfg.validate()?;
    let corpus = read_all(&a.train, &a.sidecar)?;
    let dev = read_all(&a.dev, &[])?;
    std::fs::create_dir_all(&a.output).map_err(|e| CorefError::io(&a.output, e))?;
    write_file(&a.output.join(CONFIG_SNAPSHOT), cfg.to_toml_string()?)?;

    let outcome = training::train(&corpus, &dev, cfg.model.clone(), cfg.train.clone())?;
    let mut log = Vec::new();
    training::write_log(&outcome.log, &mut log)?;
    write_file(&a.output.join(METRICS_FILE), log)?;
    outcome.last.save(&a.output.join(CHECKPOINT_FILE))?;
    if let Some((f1, best)) = &outcome.best {
        best.save(&a.output.join(BEST_CHECKPOINT_FILE))?;
        emit(
            out,
            &format!("best dev average F1 {f1:.4} at step {}", best.step),
        )?;
    }
    let last = outcome.log.last().map_or(0.0, |r| r.total);
    emit(
        out,
        &format!(
            "trained {} steps; final loss {last:.6}; wrote {}",
            outcome.last.step,
            a.output.display()
        ),
    )
}

pub fn cmd_predict(a: &PredictArgs, out: &mut dyn Write) -> Result<()> {
    let ckpt = Checkpoint::load(&a.checkpoint)?;
    let snapshot = a
        .checkpoint
        .parent()
        .map(|d| d.join(CONFIG_SNAPSHOT))
        .filter(|p| p.exists());
    let cfg = match (&a.config, snapshot) {
        (Some(p), _) => {
            let cfg = RunConfig::load(p)?;
            if cfg.model != ckpt.model.config {
                return Err(CorefError::Incompatible(format!(
                    "the model block of {} does not match the checkpoint",
                    p.display()
                )));
            }
            cfg
        }
        (None, Some(p)) => RunConfig::load(&p)?,
        (None, None) => RunConfig::default(),
    };
    let opts = PredictOptions {
        threshold: a.threshold.unwrap_or(cfg.inference.threshold),
        singletons: cfg.inference.singletons && !a.no_singletons,
    };
    let docs = read_documents(&a.input)?;
    let preds = inference::predict_corpus(&ckpt.model, &docs, &opts)?;
    let pred_docs: Vec<Document> = preds
        .iter()
        .zip(&docs)
        .map(|(p, d)| p.to_document(d))
        .collect();
    write_file(&a.output, corpus::write_jsonl(&pred_docs)?)?;
    if let Some(path) = &a.conll {
        write_file(path, corpus::write_conll(&pred_docs, opts.singletons))?;
    }
    emit(out, &format!("predicted {} documents", docs.len()))
}

fn read_predictions(path: &Path) -> Result<Vec<PredictionResult>> {
    Ok(read_documents(path)?
        .iter()
        .map(PredictionResult::from_document)
        .collect())
}

pub fn cmd_score(a: &ScoreArgs, out: &mut dyn Write) -> Result<()> {
    let key = read_documents(&a.key)?;
    let response = read_predictions(&a.response)?;
    let opts = EvalOptions {
        keep_singletons: a.keep_singletons,
        mention_mode: a.mention_mode,
    };
    let report = evaluation::evaluate(&key, &response, opts)?;
    emit(out, &report.to_string())?;
    emit(out, &serde_json::to_string(&report)?)
}

pub fn cmd_analyze_errors(a: &AnalyzeArgs, out: &mut dyn Write) -> Result<()> {
    let gold = read_documents(&a.gold)?;
    let sys_a = read_predictions(&a.system_a)?;
    let sys_b = read_predictions(&a.system_b)?;
    let c = error_analysis::contrast(&gold, &sys_a, &sys_b)?;
    emit(
        out,
        &error_analysis::render_contrast(&c, &a.name_a, &a.name_b),
    )?;
    emit(out, &serde_json::to_string(&c)?)
}

pub fn cmd_generate(a: &GenerateArgs, out: &mut dyn Write) -> Result<()> {
    let cfg = SyntheticConfig {
        documents: a.documents,
        seed: a.seed,
        singleton_ratio: a.singleton_ratio,
        distractor_rate: a.distractor_rate,
        ..Default::default()
    };
    let docs = synthetic::generate(&cfg)?;
    let stem = a.output.to_string_lossy().into_owned();
    write_file(
        Path::new(&format!("{stem}.conll")),
        corpus::write_conll(&docs, false),
    )?;
    write_file(
        Path::new(&format!("{stem}.sidecar.tsv")),
        corpus::write_sidecar(&docs),
    )?;
    write_file(
        Path::new(&format!("{stem}.jsonl")),
        corpus::write_jsonl(&docs)?,
    )?;
    emit(
        out,
        &format!(
            "wrote {} documents to {stem}.{{conll,sidecar.tsv,jsonl}}",
            docs.len()
        ),
    )
}
