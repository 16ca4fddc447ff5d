//! `dagpo pretrain|finetune|sample|filter|evaluate`.
//!
//! Exit codes: 0 success, 2 configuration error, 3 data error, 4 checkpoint
//! error. Command-line flags override keys from `--config`.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::checkpoint::Checkpoint;
use crate::config::RunConfig;
use crate::dag::{Dag, OrderedDag};
use crate::error::Error;
use crate::eval::{
    bootstrap_extreme, crossing_rate, export_report, hypervolume, mean, pareto_extract,
    sample_model, Extreme, ParetoFront, ReportOptions, Sample, SampleSet, SeedRun,
};
use crate::reward::{
    load_benchmark, MetricSource, Metrics, RewardMode, RewardOracle, SyntheticOracle,
};
use crate::seed::{stream_rng, Stream};
use crate::space::{sample_uniform, SpaceKind, SpaceSpec};
use crate::training::{filter_dataset, finetune, pretrain, read_history, write_history, Phase};

const BOOTSTRAP_BATCH: usize = 15;
const BOOTSTRAP_RESAMPLES: usize = 10_000;

#[derive(Debug, Parser)]
#[command(name = "dagpo", version, about = "Reward-steered diffusion over labeled DAGs")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub flags: Flags,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train the denoiser on an architecture dataset.
    Pretrain,
    /// Reward-weighted fine-tuning of a pretrained checkpoint.
    Finetune,
    /// Write generated graphs as JSON lines.
    Sample {
        /// Checkpoint to sample from (default `<out>/finetuned.ckpt`).
        checkpoint: Option<PathBuf>,
    },
    /// Keep the architectures scoring below `--threshold`.
    Filter {
        /// Benchmark table (default: the `benchmark` config key).
        table: Option<PathBuf>,
    },
    /// Summarize a sample file or a directory of run histories.
    Evaluate {
        input: PathBuf,
    },
}

#[derive(Debug, Args, Default)]
pub struct Flags {
    /// TOML run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// nb101, nb201 or synthetic.
    #[arg(long, global = true)]
    pub space: Option<String>,
    /// Steer toward low reward.
    #[arg(long, global = true)]
    pub inverse: bool,
    /// Comma-separated metric weights, e.g. `1,1,1`.
    #[arg(long, global = true, value_delimiter = ',')]
    pub weights: Option<Vec<f64>>,
    #[arg(long, global = true)]
    pub threshold: Option<f64>,
    /// Number of samples to generate.
    #[arg(long, global = true)]
    pub n: Option<usize>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
}

/// A failed command, classified by exit code.
#[derive(Debug)]
pub enum Failure {
    Config(Error),
    Data(Error),
    Checkpoint(Error),
}

impl Failure {
    pub fn exit_code(&self) -> u8 {
        match self {
            Failure::Config(_) => 2,
            Failure::Data(_) => 3,
            Failure::Checkpoint(_) => 4,
        }
    }

    fn error(&self) -> &Error {
        match self {
            Failure::Config(e) | Failure::Data(e) | Failure::Checkpoint(e) => e,
        }
    }
}

type CmdResult<T = ()> = Result<T, Failure>;

/// `println!` that treats a closed stdout pipe as a normal end of output.
macro_rules! say {
    ($($arg:tt)*) => {{
        let _ = writeln!(std::io::stdout().lock(), $($arg)*);
    }};
}

/// Parses `std::env::args` and runs the command.
pub fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.error());
            ExitCode::from(f.exit_code())
        }
    }
}

pub fn run(cli: Cli) -> CmdResult {
    let cfg = resolve_config(&cli.flags)?;
    match cli.command {
        Command::Pretrain => cmd_pretrain(&cfg),
        Command::Finetune => cmd_finetune(&cfg),
        Command::Sample { checkpoint } => cmd_sample(&cfg, checkpoint),
        Command::Filter { table } => cmd_filter(&cfg, table),
        Command::Evaluate { input } => cmd_evaluate(&cfg, &input, cli.flags.out.is_some()),
    }
}

/// Config file (if any), then flags on top.
pub fn resolve_config(flags: &Flags) -> CmdResult<RunConfig> {
    let mut cfg = match &flags.config {
        Some(path) => RunConfig::load(path).map_err(Failure::Config)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = flags.seed {
        cfg.seed = seed;
    }
    if let Some(space) = &flags.space {
        cfg.space = space.parse().map_err(Failure::Config)?;
    }
    if flags.inverse {
        cfg.inverse = true;
    }
    if let Some(w) = &flags.weights {
        cfg.weights = w.clone();
    }
    if let Some(t) = flags.threshold {
        cfg.threshold = Some(t);
    }
    if let Some(n) = flags.n {
        cfg.n = n;
    }
    if let Some(out) = &flags.out {
        cfg.out = out.clone();
    }
    cfg.validate().map_err(Failure::Config)?;
    cfg.threads = cfg.effective_threads().map_err(Failure::Config)?;
    Ok(cfg)
}

fn data<T>(r: crate::Result<T>) -> CmdResult<T> {
    r.map_err(Failure::Data)
}

fn ensure_out(cfg: &RunConfig) -> CmdResult {
    fs::create_dir_all(&cfg.out).map_err(|e| Failure::Data(Error::io(&cfg.out, e)))
}

/// Line-delimited JSON graphs, brought into the space's tensor form.
pub fn read_graphs(path: &Path, space: &SpaceSpec) -> crate::Result<Vec<OrderedDag>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let parse_err = |msg: String| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            msg,
        };
        let g: Dag = serde_json::from_str(&line).map_err(|e| parse_err(e.to_string()))?;
        out.push(space.to_tensor_form(&g).map_err(|e| parse_err(e.to_string()))?);
    }
    Ok(out)
}

pub fn write_jsonl<T: Serialize>(path: &Path, items: impl IntoIterator<Item = T>) -> crate::Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for item in items {
        serde_json::to_writer(&mut w, &item).expect("records serialize");
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn uniform_pool(cfg: &RunConfig, space: &SpaceSpec) -> CmdResult<Vec<OrderedDag>> {
    let mut rng = stream_rng(cfg.seed, Stream::Dataset, &[]);
    (0..cfg.dataset_size)
        .map(|_| data(space.to_tensor_form(&sample_uniform(space, &mut rng))))
        .collect()
}

fn table_graphs(path: &Path, space: &SpaceSpec) -> CmdResult<(Vec<OrderedDag>, Arc<dyn MetricSource>)> {
    let table = data(load_benchmark(path, space))?;
    let graphs = table
        .entries()
        .into_iter()
        .map(|(key, _)| data(key.decode(space).and_then(|g| space.to_tensor_form(&g))))
        .collect::<CmdResult<_>>()?;
    Ok((graphs, Arc::new(table)))
}

fn pretrain_dataset(cfg: &RunConfig, space: &SpaceSpec) -> CmdResult<Vec<OrderedDag>> {
    if let Some(path) = &cfg.dataset {
        return data(read_graphs(path, space));
    }
    if let Some(path) = &cfg.benchmark {
        return Ok(table_graphs(path, space)?.0);
    }
    if space.kind == SpaceKind::Synthetic {
        return uniform_pool(cfg, space);
    }
    Err(Failure::Config(Error::Config(format!(
        "space `{}` needs a `dataset` or `benchmark` path",
        space.name
    ))))
}

struct NoMetrics;

impl MetricSource for NoMetrics {
    fn metrics(&self, _: &Dag) -> Option<Metrics> {
        None
    }
}

/// Metric source for the space: the configured table, else the synthetic
/// oracle. `required = false` falls back to a source that knows nothing.
fn metric_source(cfg: &RunConfig, space: &SpaceSpec, required: bool) -> CmdResult<Arc<dyn MetricSource>> {
    if let Some(path) = &cfg.benchmark {
        return Ok(Arc::new(data(load_benchmark(path, space))?));
    }
    if space.kind == SpaceKind::Synthetic {
        return Ok(Arc::new(SyntheticOracle));
    }
    if required {
        return Err(Failure::Config(Error::Config(format!(
            "space `{}` needs a `benchmark` table for rewards",
            space.name
        ))));
    }
    Ok(Arc::new(NoMetrics))
}

fn load_checkpoint(path: &Path, cfg: &RunConfig) -> CmdResult<Checkpoint> {
    let ckpt = Checkpoint::load(path).map_err(Failure::Checkpoint)?;
    if ckpt.space.kind != cfg.space {
        return Err(Failure::Config(Error::Config(format!(
            "checkpoint {} is for space `{}`, config selects `{}`",
            path.display(),
            ckpt.space.name,
            cfg.space
        ))));
    }
    Ok(ckpt)
}

fn save_checkpoint(ckpt: &Checkpoint, path: &Path) -> CmdResult {
    ckpt.save(path).map_err(Failure::Checkpoint)
}

fn cmd_pretrain(cfg: &RunConfig) -> CmdResult {
    let space = cfg.space_spec();
    let dataset = pretrain_dataset(cfg, &space)?;
    let mut ckpt = Checkpoint::fresh(
        space,
        cfg.schedule(),
        cfg.hidden,
        cfg.layers,
        cfg.pe_dim,
        cfg.seed,
    )
    .map_err(Failure::Config)?;
    ensure_out(cfg)?;
    data(cfg.archive("pretrain_config.toml"))?;
    let records = pretrain(&mut ckpt, &dataset, &cfg.train_config(Phase::Pretrain)).map_err(|e| match e {
        Error::Config(_) => Failure::Config(e),
        other => Failure::Data(other),
    })?;
    data(write_jsonl(&cfg.out.join("pretrain_history.jsonl"), &records))?;
    let path = cfg.out.join("pretrained.ckpt");
    save_checkpoint(&ckpt, &path)?;
    let last = records.last().map_or(f64::NAN, |r| r.loss);
    say!(
        "pretrained on {} graphs for {} epochs, final loss {last:.4}, wrote {}",
        dataset.len(),
        records.len(),
        path.display()
    );
    Ok(())
}

fn cmd_finetune(cfg: &RunConfig) -> CmdResult {
    let input = cfg
        .checkpoint
        .clone()
        .unwrap_or_else(|| cfg.out.join("pretrained.ckpt"));
    let ckpt = load_checkpoint(&input, cfg)?;
    let spec = cfg.reward_spec().map_err(Failure::Config)?;
    let source = metric_source(cfg, &ckpt.space, true)?;
    let oracle = RewardOracle::new(source, spec.clone()).map_err(Failure::Config)?;
    let tc = cfg.train_config(Phase::Finetune);
    ensure_out(cfg)?;
    data(cfg.archive("finetune_config.toml"))?;
    let run = finetune(ckpt, &oracle, &tc).map_err(|e| match e {
        Error::Config(_) => Failure::Config(e),
        other => Failure::Data(other),
    })?;
    save_checkpoint(&run.checkpoint, &cfg.out.join("finetuned.ckpt"))?;
    data(write_history(&cfg.out.join("history.jsonl"), &run.history))?;

    let metric = tc
        .eval_metric
        .clone()
        .unwrap_or_else(|| spec.weights[0].0.clone());
    let pareto = (spec.mode == RewardMode::MultiObjective)
        .then(|| run.evaluations.last())
        .flatten()
        .map(|set| {
            let ids: Vec<&str> = spec.weights.iter().map(|(m, _)| m.as_str()).collect();
            pareto_extract(set, &ids)
        });
    let opts = ReportOptions {
        dataset: metric,
        threshold: cfg.threshold,
        pareto,
    };
    let runs = [SeedRun {
        seed: cfg.seed,
        history: run.history.clone(),
        samples: run.evaluations,
    }];
    let summary = data(export_report(&cfg.out, &runs, &opts))?;
    if let (Some(first), Some(last)) = (run.history.first(), run.history.last()) {
        say!(
            "fine-tuned {} epochs ({} reward): mean reward {:.4} -> {:.4}",
            last.epoch, spec.mode, first.mean_reward, last.mean_reward
        );
    }
    if let Some(hv) = summary.hypervolume {
        say!("pareto hypervolume {hv:.4}");
    }
    Ok(())
}

fn cmd_sample(cfg: &RunConfig, checkpoint: Option<PathBuf>) -> CmdResult {
    let path = checkpoint
        .or_else(|| cfg.checkpoint.clone())
        .unwrap_or_else(|| cfg.out.join("finetuned.ckpt"));
    let ckpt = load_checkpoint(&path, cfg)?;
    let source = metric_source(cfg, &ckpt.space, false)?;
    let spec = cfg.reward_spec().map_err(Failure::Config)?;
    let oracle = RewardOracle::new(source, spec).map_err(Failure::Config)?;
    let set = data(sample_model(
        &ckpt.params,
        &ckpt.schedule,
        &ckpt.space,
        &oracle,
        cfg.n,
        cfg.seed,
        ckpt.epoch,
        cfg.threads,
    ))?;
    ensure_out(cfg)?;
    data(cfg.archive("sample_config.toml"))?;
    let out = cfg.out.join("samples.jsonl");
    data(write_jsonl(&out, &set.samples))?;
    say!("wrote {} samples to {}", set.len(), out.display());
    Ok(())
}

fn cmd_filter(cfg: &RunConfig, table: Option<PathBuf>) -> CmdResult {
    let threshold = cfg.threshold.ok_or_else(|| {
        Failure::Config(Error::Config("filter needs `--threshold`".into()))
    })?;
    let space = cfg.space_spec();
    let (graphs, source): (Vec<OrderedDag>, Arc<dyn MetricSource>) =
        match table.or_else(|| cfg.benchmark.clone()) {
            Some(path) => table_graphs(&path, &space)?,
            None if space.kind == SpaceKind::Synthetic => {
                (uniform_pool(cfg, &space)?, Arc::new(SyntheticOracle))
            }
            None => {
                return Err(Failure::Config(Error::Config(
                    "filter needs a benchmark table".into(),
                )))
            }
        };
    let metric = cfg
        .eval_metric
        .clone()
        .unwrap_or_else(|| cfg.metric_ids()[0].clone());
    let (kept, fraction) = data(filter_dataset(&graphs, source.as_ref(), threshold, &metric))?;
    ensure_out(cfg)?;
    data(cfg.archive("filter_config.toml"))?;
    let out = cfg.out.join("filtered.jsonl");
    let stripped = kept
        .iter()
        .map(|g| space.strip_padding(g.dag()).unwrap_or_else(|| g.dag().clone()));
    data(write_jsonl(&out, stripped))?;
    say!(
        "retained {} of {} graphs with {metric} < {threshold}: fraction {fraction:.4}",
        kept.len(),
        graphs.len()
    );
    Ok(())
}

pub fn read_samples(path: &Path) -> crate::Result<Vec<Sample>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            msg: e.to_string(),
        })?);
    }
    Ok(out)
}

#[derive(Serialize)]
struct MetricReport {
    mean: f64,
    max: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    crossing_rate: Option<f64>,
    best_of_15: f64,
    worst_of_15: f64,
}

#[derive(Serialize)]
struct SampleReport {
    samples: usize,
    mean_reward: f64,
    metrics: BTreeMap<String, MetricReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pareto: Option<ParetoFront>,
    #[serde(skip_serializing_if = "Option::is_none")]
    hypervolume: Option<f64>,
}

fn evaluate_samples(cfg: &RunConfig, path: &Path) -> CmdResult<SampleReport> {
    let set = SampleSet {
        epoch: 0,
        seed: cfg.seed,
        samples: data(read_samples(path))?,
    };
    let mut ids: Vec<String> = set
        .samples
        .iter()
        .filter_map(|s| s.metrics.as_ref())
        .flat_map(|m| m.keys().cloned())
        .collect();
    ids.sort();
    ids.dedup();
    let mut metrics = BTreeMap::new();
    for id in &ids {
        let acc = set.accuracies(id);
        let mut rng = stream_rng(cfg.seed, Stream::Bootstrap, &[]);
        let mut boot = |mode| bootstrap_extreme(&acc, BOOTSTRAP_BATCH, BOOTSTRAP_RESAMPLES, mode, &mut rng);
        metrics.insert(
            id.clone(),
            MetricReport {
                mean: mean(&acc),
                max: acc.iter().copied().fold(0.0, f64::max),
                crossing_rate: cfg.threshold.map(|pi| crossing_rate(&set, pi, id)),
                best_of_15: data(boot(Extreme::Max))?,
                worst_of_15: data(boot(Extreme::Min))?,
            },
        );
    }
    let objectives: Vec<String> = if cfg.metrics.is_empty() {
        ids.clone()
    } else {
        cfg.metrics.clone()
    };
    let pareto = (2..=3)
        .contains(&objectives.len())
        .then(|| pareto_extract(&set, &objectives.iter().map(String::as_str).collect::<Vec<_>>()))
        .filter(|f| !f.points.is_empty());
    let hypervolume = pareto.as_ref().map(hypervolume).transpose().map_err(Failure::Data)?;
    Ok(SampleReport {
        samples: set.len(),
        mean_reward: set.mean_reward(),
        metrics,
        pareto,
        hypervolume,
    })
}

/// `history.jsonl` in `dir` itself or in its immediate subdirectories.
fn collect_runs(dir: &Path) -> CmdResult<Vec<SeedRun>> {
    let mut files = Vec::new();
    let direct = dir.join("history.jsonl");
    if direct.is_file() {
        files.push(direct);
    }
    let mut subdirs: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Failure::Data(Error::io(dir, e)))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_dir())
        .collect();
    subdirs.sort();
    files.extend(
        subdirs
            .into_iter()
            .map(|d| d.join("history.jsonl"))
            .filter(|p| p.is_file()),
    );
    files
        .into_iter()
        .enumerate()
        .map(|(i, file)| {
            let history = data(read_history(&file))?;
            let archived = file.with_file_name("finetune_config.toml");
            let seed = RunConfig::load(&archived).map_or(i as u64, |c| c.seed);
            Ok(SeedRun {
                seed,
                history,
                samples: Vec::new(),
            })
        })
        .collect()
}

fn cmd_evaluate(cfg: &RunConfig, input: &Path, out_given: bool) -> CmdResult {
    if input.is_dir() {
        let runs = collect_runs(input)?;
        if runs.is_empty() {
            return Err(Failure::Data(Error::MissingEntry(format!(
                "no history.jsonl under {}",
                input.display()
            ))));
        }
        let out = if out_given { cfg.out.clone() } else { input.to_path_buf() };
        let opts = ReportOptions {
            dataset: cfg
                .eval_metric
                .clone()
                .unwrap_or_else(|| cfg.metric_ids()[0].clone()),
            threshold: cfg.threshold,
            pareto: None,
        };
        let summary = data(export_report(&out, &runs, &opts))?;
        say!("{}", serde_json::to_string_pretty(&summary).expect("summary serializes"));
        return Ok(());
    }
    let report = evaluate_samples(cfg, input)?;
    let json = serde_json::to_string_pretty(&report).expect("report serializes");
    if out_given {
        ensure_out(cfg)?;
        let path = cfg.out.join("evaluation.json");
        fs::write(&path, format!("{json}\n")).map_err(|e| Failure::Data(Error::io(&path, e)))?;
    }
    say!("{json}");
    Ok(())
}
