//! Command-line front end.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 data or model
//! error. Diagnostics go to stderr.

use std::ffi::OsString;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use super::config::ExperimentConfig;
use super::experiment::{read_dataset, run_experiment};
use super::report::{write_json, SweepAxis};
use super::sweep::run_sweep;
use crate::decoding::{CandidateGenerator, SamplingConfig};
use crate::error::Error;
use crate::metrics::{evaluate, flip_report, format_percent, MetricKind};
use crate::scoring::{load_model, save_model, train_with_stats, Capacity, ModelKind, TrainConfig};
use crate::structures::{serialize_top, write_conllu, write_top, Dataset, Sentence, Split, Structure, Task};
use crate::synth;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "backcompat", version, about = "Measure and mitigate model-update regression")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train a model and save it.
    Train(TrainArgs),
    /// Decode a file, or write candidate sets with --sample.
    Predict(PredictArgs),
    /// Score predictions against gold.
    Evaluate(EvaluateArgs),
    /// Flip report of new predictions against old ones.
    Flips(FlipsArgs),
    /// Run a full experiment from a config file.
    Experiment(ExperimentArgs),
    /// Sweep one mitigation parameter.
    Sweep(SweepArgs),
    /// Write a synthetic corpus.
    Synth(SynthArgs),
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum TaskArg {
    Dependency,
    Semantic,
}

impl From<TaskArg> for Task {
    fn from(t: TaskArg) -> Task {
        match t {
            TaskArg::Dependency => Task::Dependency,
            TaskArg::Semantic => Task::Semantic,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum KindArg {
    Arc,
    Action,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum CapacityArg {
    Small,
    Large,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum AxisArg {
    NumCandidates,
    EnsembleSize,
    DropoutRate,
}

#[derive(Debug, Args)]
struct TrainArgs {
    /// Training file (.conllu or TOP lines).
    #[arg(long)]
    data: PathBuf,
    /// Task of the data file; inferred from the extension when omitted.
    #[arg(long, value_enum)]
    task: Option<TaskArg>,
    #[arg(long, value_enum)]
    kind: KindArg,
    #[arg(long, value_enum, default_value = "large")]
    capacity: CapacityArg,
    #[arg(long, default_value_t = TrainConfig::default().epochs)]
    epochs: usize,
    #[arg(long, default_value_t = TrainConfig::default().learning_rate)]
    lr: f64,
    #[arg(long, default_value_t = TrainConfig::default().regularization)]
    reg: f64,
    #[arg(long, default_value_t = 1.0)]
    data_fraction: f64,
    #[arg(long, default_value_t = TrainConfig::default().seed)]
    seed: u64,
    /// Model file to write.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct PredictArgs {
    #[arg(long)]
    model: PathBuf,
    /// Annotated input file; its trees are ignored.
    #[arg(long)]
    input: PathBuf,
    /// Candidate sampling spec, e.g. `dropout_p=0.3,m=10,seed=0`.
    #[arg(long)]
    sample: Option<String>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct EvaluateArgs {
    #[arg(long)]
    pred: PathBuf,
    #[arg(long)]
    gold: PathBuf,
    #[arg(long, value_enum)]
    task: Option<TaskArg>,
    /// Metric name; repeatable. Defaults to every metric of the task.
    #[arg(long)]
    metric: Vec<String>,
    /// Count punctuation tokens in word-level metrics.
    #[arg(long)]
    keep_punct: bool,
    /// Write the JSON here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct FlipsArgs {
    #[arg(long)]
    old: PathBuf,
    #[arg(long)]
    new: PathBuf,
    #[arg(long)]
    gold: PathBuf,
    #[arg(long, value_enum)]
    task: Option<TaskArg>,
    #[arg(long)]
    metric: String,
    #[arg(long)]
    keep_punct: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ExperimentArgs {
    #[arg(long)]
    config: PathBuf,
    /// Overrides the config's global seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the config's output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SweepArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long, value_enum)]
    axis: AxisArg,
    /// Comma-separated values, e.g. `1,2,5,10`.
    #[arg(long, value_delimiter = ',', required = true)]
    values: Vec<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write the series as CSV.
    #[arg(long)]
    emit_csv: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SynthArgs {
    #[arg(long, value_enum)]
    task: TaskArg,
    #[arg(long)]
    count: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

/// Parses `args` (program name first) and runs the command.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli.command) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {}", e);
            exit_code(&e)
        }
    }
}

fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) => EXIT_USAGE,
        Error::Stage { source, .. } => exit_code(source),
        _ => EXIT_DATA,
    }
}

fn dispatch(command: Command) -> Result<(), Error> {
    match command {
        Command::Train(a) => cmd_train(a),
        Command::Predict(a) => cmd_predict(a),
        Command::Evaluate(a) => cmd_evaluate(a),
        Command::Flips(a) => cmd_flips(a),
        Command::Experiment(a) => cmd_experiment(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::Synth(a) => cmd_synth(a),
    }
}

fn infer_task(path: &Path, explicit: Option<TaskArg>) -> Result<Task, Error> {
    if let Some(t) = explicit {
        return Ok(t.into());
    }
    match path.extension().and_then(|e| e.to_str()) {
        Some("conllu") => Ok(Task::Dependency),
        Some("top") | Some("tsv") => Ok(Task::Semantic),
        _ => Err(Error::Config(format!(
            "cannot infer the task of {}; pass --task",
            path.display()
        ))),
    }
}

fn load(path: &Path, task: Task, split: Split) -> Result<Dataset, Error> {
    read_dataset(path, task, split).map_err(|e| e.in_stage(format!("reading {}", path.display())))
}

/// Prediction files must cover the gold sentences token for token.
fn check_aligned(gold: &Dataset, pred: &Dataset, what: &str) -> Result<(), Error> {
    if gold.len() != pred.len() {
        return Err(Error::Misaligned(format!(
            "{} has {} sentences, gold has {}",
            what,
            pred.len(),
            gold.len()
        )));
    }
    for (g, p) in gold.sentences().zip(pred.sentences()) {
        if g.tokens() != p.tokens() {
            return Err(Error::Misaligned(format!(
                "{} sentence {} does not match gold sentence {}",
                what,
                p.id(),
                g.id()
            )));
        }
    }
    Ok(())
}

fn emit<T: Serialize>(value: &T, out: Option<&Path>) -> Result<(), Error> {
    match out {
        Some(path) => write_json(path, value),
        None => {
            let text = serde_json::to_string_pretty(value).map_err(|e| Error::Io(std::io::Error::other(e)))?;
            println!("{}", text);
            Ok(())
        }
    }
}

fn metric_list(names: &[String], task: Task) -> Result<Vec<MetricKind>, Error> {
    if names.is_empty() {
        return Ok(MetricKind::ALL
            .iter()
            .copied()
            .filter(|m| match task {
                Task::Dependency => *m != MetricKind::SpanEm,
                Task::Semantic => matches!(m, MetricKind::Em | MetricKind::SpanEm),
            })
            .collect());
    }
    names.iter().map(|n| n.parse()).collect()
}

fn cmd_train(a: TrainArgs) -> Result<(), Error> {
    let task = infer_task(&a.data, a.task)?;
    let data = load(&a.data, task, Split::Train)?;
    let kind = match a.kind {
        KindArg::Arc => ModelKind::ArcFactored,
        KindArg::Action => ModelKind::ActionFactored,
    };
    let capacity = match a.capacity {
        CapacityArg::Small => Capacity::Small,
        CapacityArg::Large => Capacity::Large,
    };
    let config = TrainConfig {
        epochs: a.epochs,
        learning_rate: a.lr,
        seed: a.seed,
        regularization: a.reg,
        data_fraction: a.data_fraction,
    };
    let (model, stats) = train_with_stats(kind, capacity, &data, &config).map_err(|e| e.in_stage("training"))?;
    log::info!(
        "trained on {} examples ({} skipped), {} errors in the last epoch",
        stats.examples_used,
        stats.examples_skipped,
        stats.last_epoch_errors
    );
    save_model(&a.out, &model)
}

#[derive(Serialize)]
struct CandidateLine<'a> {
    sentence_id: &'a str,
    candidates: Vec<CandidateJson>,
}

#[derive(Serialize)]
struct CandidateJson {
    rank: usize,
    generator_score: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    heads: Option<Vec<usize>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    labels: Option<Vec<String>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    top: Option<String>,
}

fn candidate_json(sentence: &Sentence, structure: &Structure, rank: usize, generator_score: f64) -> CandidateJson {
    let mut c = CandidateJson {
        rank,
        generator_score,
        heads: None,
        labels: None,
        top: None,
    };
    match structure {
        Structure::Dep(t) => {
            c.heads = Some(t.heads().iter().map(|h| h.node()).collect());
            c.labels = Some(t.labels().to_vec());
        }
        Structure::Span(t) => c.top = Some(serialize_top(t, sentence.tokens())),
    }
    c
}

fn cmd_predict(a: PredictArgs) -> Result<(), Error> {
    let model = load_model(&a.model).map_err(|e| e.in_stage(format!("reading {}", a.model.display())))?;
    let input = load(&a.input, model.task(), Split::Test)?;
    let sentences: Vec<&Sentence> = input.sentences().collect();
    let mut out = BufWriter::new(File::create(&a.out)?);
    if let Some(spec) = &a.sample {
        let config: SamplingConfig = spec.parse()?;
        let generator = CandidateGenerator::new(&model, config)?;
        for s in &sentences {
            let set = generator
                .generate(s)
                .map_err(|e| e.in_stage(format!("sentence {}", s.id())))?;
            let line = CandidateLine {
                sentence_id: &set.sentence_id,
                candidates: set
                    .candidates
                    .iter()
                    .map(|c| candidate_json(s, &c.structure, c.rank, c.generator_score))
                    .collect(),
            };
            serde_json::to_writer(&mut out, &line).map_err(|e| Error::Io(std::io::Error::other(e)))?;
            writeln!(out)?;
        }
    } else {
        let preds =
            super::experiment::predict_all(&sentences, |s| model.predict(s)).map_err(|e| e.in_stage("decoding"))?;
        match model.task() {
            Task::Dependency => write_conllu(
                &mut out,
                sentences
                    .iter()
                    .copied()
                    .zip(preds.iter().filter_map(Structure::as_dep)),
            )?,
            Task::Semantic => write_top(
                &mut out,
                sentences
                    .iter()
                    .copied()
                    .zip(preds.iter().filter_map(Structure::as_span)),
            )?,
        }
    }
    out.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct Score {
    metric: MetricKind,
    correct: usize,
    total: usize,
    accuracy: String,
}

fn cmd_evaluate(a: EvaluateArgs) -> Result<(), Error> {
    let task = infer_task(&a.gold, a.task)?;
    let metrics = metric_list(&a.metric, task)?;
    let gold = load(&a.gold, task, Split::Test)?;
    let pred = load(&a.pred, task, Split::Test)?;
    check_aligned(&gold, &pred, "prediction file")?;
    let mut scores = Vec::new();
    for metric in metrics {
        let (mut correct, mut total) = (0, 0);
        for (g, p) in gold.iter().zip(pred.golds()) {
            let (c, t) = evaluate(&g.sentence, p, &g.gold, metric, !a.keep_punct)?;
            correct += c;
            total += t;
        }
        let accuracy = if total == 0 {
            0.0
        } else {
            100.0 * correct as f64 / total as f64
        };
        scores.push(Score {
            metric,
            correct,
            total,
            accuracy: format_percent(accuracy),
        });
    }
    emit(&scores, a.out.as_deref())
}

fn cmd_flips(a: FlipsArgs) -> Result<(), Error> {
    let task = infer_task(&a.gold, a.task)?;
    let metric: MetricKind = a.metric.parse()?;
    let gold = load(&a.gold, task, Split::Test)?;
    let old = load(&a.old, task, Split::Test)?;
    let new = load(&a.new, task, Split::Test)?;
    check_aligned(&gold, &old, "old prediction file")?;
    check_aligned(&gold, &new, "new prediction file")?;
    let sentences: Vec<&Sentence> = gold.sentences().collect();
    let golds: Vec<Structure> = gold.golds().cloned().collect();
    let old: Vec<Structure> = old.golds().cloned().collect();
    let new: Vec<Structure> = new.golds().cloned().collect();
    let report = flip_report(&sentences, &old, &new, &golds, metric, !a.keep_punct)?;
    emit(&report.to_record(), a.out.as_deref())
}

fn load_config(path: &Path, seed: Option<u64>, out: Option<PathBuf>) -> Result<ExperimentConfig, Error> {
    let mut config = ExperimentConfig::load(path)?;
    if let Some(seed) = seed {
        config.seed = seed;
    }
    if let Some(out) = out {
        config.out_dir = out;
    }
    Ok(config)
}

fn cmd_experiment(a: ExperimentArgs) -> Result<(), Error> {
    let config = load_config(&a.config, a.seed, a.out)?;
    let report = run_experiment(&config)?;
    let path = config.out_dir.join("report.json");
    write_json(&path, &report)?;
    log::info!("wrote {}", path.display());
    Ok(())
}

fn cmd_sweep(a: SweepArgs) -> Result<(), Error> {
    let config = load_config(&a.config, a.seed, a.out)?;
    let axis = match a.axis {
        AxisArg::NumCandidates => SweepAxis::NumCandidates,
        AxisArg::EnsembleSize => SweepAxis::EnsembleSize,
        AxisArg::DropoutRate => SweepAxis::DropoutRate,
    };
    let report = run_sweep(&config, axis, &a.values)?;
    let path = config.out_dir.join(format!("sweep_{}.json", axis));
    write_json(&path, &report)?;
    if let Some(csv_path) = &a.emit_csv {
        report.write_csv(BufWriter::new(File::create(csv_path)?))?;
    }
    log::info!("wrote {}", path.display());
    Ok(())
}

fn cmd_synth(a: SynthArgs) -> Result<(), Error> {
    if a.count == 0 {
        return Err(Error::Config("--count must be positive".into()));
    }
    let mut out = BufWriter::new(File::create(&a.out)?);
    match a.task {
        TaskArg::Dependency => {
            let data = synth::dependency_dataset(a.count, a.seed, Split::Train, "s");
            write_conllu(
                &mut out,
                data.iter().filter_map(|e| e.gold.as_dep().map(|t| (&e.sentence, t))),
            )?;
        }
        TaskArg::Semantic => {
            let data = synth::semantic_dataset(a.count, a.seed, Split::Train, "s");
            write_top(
                &mut out,
                data.iter().filter_map(|e| e.gold.as_span().map(|t| (&e.sentence, t))),
            )?;
        }
    }
    out.flush()?;
    Ok(())
}
