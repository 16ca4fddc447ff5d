//! Sample-set statistics and report exports: threshold crossing rate,
//! bootstrap best/worst-of-batch baselines, OOD lift, Pareto fronts and
//! hypervolume.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dag::Dag;
use crate::diffusion::{generate_parallel, Denoiser, NoiseSchedule};
use crate::error::{Error, Result};
use crate::reward::{Metrics, RewardOracle};
use crate::seed::{stream_rng, Stream};
use crate::space::SpaceSpec;
use crate::training::HistoryRecord;

/// Bumped whenever the layout of `summary.json` changes.
pub const SUMMARY_SCHEMA_VERSION: u32 = 1;
pub const DEFAULT_TOP_FRACTION: f64 = 0.1;

/// One generated architecture with its metrics and reward.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub graph: Dag,
    /// `None` when the metric source does not know the architecture.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metrics: Option<Metrics>,
    pub reward: f64,
}

impl Sample {
    /// Accuracy on `dataset`; unknown architectures count as 0.
    pub fn accuracy(&self, dataset: &str) -> f64 {
        self.metrics
            .as_ref()
            .and_then(|m| m.get(dataset))
            .copied()
            .unwrap_or(0.0)
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SampleSet {
    pub epoch: u64,
    pub seed: u64,
    pub samples: Vec<Sample>,
}

impl SampleSet {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn accuracies(&self, dataset: &str) -> Vec<f64> {
        self.samples.iter().map(|s| s.accuracy(dataset)).collect()
    }

    pub fn rewards(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.reward).collect()
    }

    pub fn mean_reward(&self) -> f64 {
        mean(&self.rewards())
    }
}

pub(crate) fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        0.0
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

/// Draws `n` fresh samples and scores them. Sample `i` uses its own rng stream
/// keyed by `(epoch, i)`, so the set does not depend on `threads`.
#[allow(clippy::too_many_arguments)]
pub fn sample_model<D: Denoiser + Sync + ?Sized>(
    denoiser: &D,
    schedule: &NoiseSchedule,
    space: &SpaceSpec,
    oracle: &RewardOracle,
    n: usize,
    seed: u64,
    epoch: u64,
    threads: usize,
) -> Result<SampleSet> {
    let mut rngs: Vec<_> = (0..n as u64)
        .map(|i| stream_rng(seed, Stream::Evaluation, &[epoch, i]))
        .collect();
    let trajectories = generate_parallel(denoiser, schedule, space, &mut rngs, false, threads)?;
    let samples = trajectories
        .into_iter()
        .map(|tr| {
            let (metrics, reward) = oracle.evaluate(tr.final_graph.dag());
            let graph = space
                .strip_padding(tr.final_graph.dag())
                .unwrap_or_else(|| tr.final_graph.into_dag());
            Sample {
                graph,
                metrics,
                reward,
            }
        })
        .collect();
    Ok(SampleSet {
        epoch,
        seed,
        samples,
    })
}

/// Fraction of samples whose accuracy on `dataset` is at least `threshold`.
pub fn crossing_rate(set: &SampleSet, threshold: f64, dataset: &str) -> f64 {
    if set.is_empty() {
        return 0.0;
    }
    let hits = set
        .samples
        .iter()
        .filter(|s| s.accuracy(dataset) >= threshold)
        .count();
    hits as f64 / set.len() as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Extreme {
    Max,
    Min,
}

/// Mean over `resamples` bootstrap batches of the extreme of `batch` draws
/// (with replacement) from `pool`.
pub fn bootstrap_extreme<R: Rng + ?Sized>(
    pool: &[f64],
    batch: usize,
    resamples: usize,
    mode: Extreme,
    rng: &mut R,
) -> Result<f64> {
    if pool.is_empty() {
        return Err(Error::EmptyPool);
    }
    if batch == 0 || resamples == 0 {
        return Err(Error::Config(
            "bootstrap batch size and resample count must be positive".into(),
        ));
    }
    // Running mean, so a constant pool returns its value exactly.
    let mut avg = 0.0;
    for r in 0..resamples {
        let draws = (0..batch).map(|_| pool[rng.random_range(0..pool.len())]);
        let extreme = match mode {
            Extreme::Max => draws.fold(f64::NEG_INFINITY, f64::max),
            Extreme::Min => draws.fold(f64::INFINITY, f64::min),
        };
        avg += (extreme - avg) / (r + 1) as f64;
    }
    Ok(avg)
}

/// Relative enrichment of above-threshold samples in the top `top_fraction`
/// by accuracy: `P(acc >= pi | top) / P(acc >= pi) - 1`, or 0 when no sample
/// reaches the threshold.
pub fn ood_lift(set: &SampleSet, threshold: f64, dataset: &str, top_fraction: f64) -> f64 {
    let mut acc = set.accuracies(dataset);
    if acc.is_empty() {
        return 0.0;
    }
    let rate = |v: &[f64]| v.iter().filter(|&&a| a >= threshold).count() as f64 / v.len() as f64;
    let overall = rate(&acc);
    if overall == 0.0 {
        return 0.0;
    }
    acc.sort_by(|a, b| b.total_cmp(a));
    let fraction = top_fraction.clamp(f64::MIN_POSITIVE, 1.0);
    let top = ((fraction * acc.len() as f64).ceil() as usize).clamp(1, acc.len());
    rate(&acc[..top]) / overall - 1.0
}

/// Objective vectors under the maximization convention, plus a reference point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParetoFront {
    pub objectives: Vec<String>,
    pub points: Vec<Vec<f64>>,
    pub reference: Vec<f64>,
}

/// `a` dominates `b`: no worse anywhere, strictly better somewhere.
pub fn dominates(a: &[f64], b: &[f64]) -> bool {
    a.iter().zip(b).all(|(x, y)| x >= y) && a.iter().zip(b).any(|(x, y)| x > y)
}

/// Non-dominated subset of `points`, with exact duplicates kept once.
pub fn non_dominated(points: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let mut front: Vec<Vec<f64>> = Vec::new();
    for (i, p) in points.iter().enumerate() {
        let beaten = points.iter().any(|q| dominates(q, p));
        let repeated = points[..i].contains(p);
        if !beaten && !repeated {
            front.push(p.clone());
        }
    }
    front
}

/// Pareto front over `datasets` of the samples that report all of them.
/// The reference point is the origin.
pub fn pareto_extract(set: &SampleSet, datasets: &[&str]) -> ParetoFront {
    let points: Vec<Vec<f64>> = set
        .samples
        .iter()
        .filter_map(|s| {
            let m = s.metrics.as_ref()?;
            datasets.iter().map(|d| m.get(*d).copied()).collect()
        })
        .collect();
    ParetoFront {
        objectives: datasets.iter().map(|d| d.to_string()).collect(),
        points: non_dominated(&points),
        reference: vec![0.0; datasets.len()],
    }
}

/// Volume of the union of boxes `[reference, p]` over front points, for up to
/// three objectives. Coordinates below the reference contribute nothing.
pub fn hypervolume(front: &ParetoFront) -> Result<f64> {
    let d = front.reference.len();
    if d > 3 {
        return Err(Error::DimensionUnsupported(d));
    }
    if let Some(p) = front.points.iter().find(|p| p.len() != d) {
        return Err(Error::DimensionMismatch(format!(
            "point of dimension {} against a {d}-dimensional reference",
            p.len()
        )));
    }
    if d == 0 || front.points.is_empty() {
        return Ok(0.0);
    }
    let shifted: Vec<Vec<f64>> = front
        .points
        .iter()
        .map(|p| {
            p.iter()
                .zip(&front.reference)
                .map(|(x, r)| (x - r).max(0.0))
                .collect()
        })
        .collect();
    let pts = non_dominated(&shifted);
    Ok(match d {
        1 => pts.iter().map(|p| p[0]).fold(0.0, f64::max),
        2 => hv2(pts.iter().map(|p| (p[0], p[1])).collect()),
        _ => hv3(&pts),
    })
}

/// Sweep over x descending; each point adds the strip above the best y so far.
fn hv2(mut pts: Vec<(f64, f64)>) -> f64 {
    pts.sort_by(|a, b| b.0.total_cmp(&a.0).then(b.1.total_cmp(&a.1)));
    let mut area = 0.0;
    let mut best_y = 0.0;
    for (x, y) in pts {
        if y > best_y {
            area += x * (y - best_y);
            best_y = y;
        }
    }
    area
}

/// Slices along z: between consecutive z levels the cross-section is the 2-D
/// union of every point reaching that level.
fn hv3(pts: &[Vec<f64>]) -> f64 {
    let mut levels: Vec<f64> = pts.iter().map(|p| p[2]).collect();
    levels.sort_by(|a, b| b.total_cmp(a));
    levels.dedup();
    let mut volume = 0.0;
    for (i, &z) in levels.iter().enumerate() {
        let below = levels.get(i + 1).copied().unwrap_or(0.0);
        let slice = pts
            .iter()
            .filter(|p| p[2] >= z)
            .map(|p| (p[0], p[1]))
            .collect();
        volume += (z - below) * hv2(slice);
    }
    volume
}

/// History and evaluation sample sets of one seed's run.
#[derive(Debug, Clone, Default)]
pub struct SeedRun {
    pub seed: u64,
    pub history: Vec<HistoryRecord>,
    pub samples: Vec<SampleSet>,
}

#[derive(Debug, Clone)]
pub struct ReportOptions {
    /// Accuracy metric used for the distribution and crossing exports.
    pub dataset: String,
    pub threshold: Option<f64>,
    pub pareto: Option<ParetoFront>,
}

#[derive(Serialize)]
struct DynamicsRow {
    seed: u64,
    epoch: u64,
    mean_reward: f64,
    max_reward: f64,
    mean_advantage: f64,
    loss: f64,
    mean_acc: Option<f64>,
    max_acc: Option<f64>,
}

#[derive(Serialize)]
struct DistributionRow {
    seed: u64,
    index: usize,
    accuracy: f64,
    reward: f64,
}

#[derive(Serialize)]
struct CrossingRow {
    seed: u64,
    epoch: u64,
    threshold: f64,
    crossing_rate: f64,
}

/// Across-seed mean and population standard deviation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
    pub n: usize,
}

impl MeanStd {
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let m = mean(values);
        let var = values.iter().map(|v| (v - m).powi(2)).sum::<f64>() / values.len() as f64;
        Some(Self {
            mean: m,
            std: var.sqrt(),
            n: values.len(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochSummary {
    pub epoch: u64,
    pub mean_reward: MeanStd,
    pub max_reward: MeanStd,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mean_acc: Option<MeanStd>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_acc: Option<MeanStd>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub crossing_rate: Option<MeanStd>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportSummary {
    pub schema_version: u32,
    pub seeds: Vec<u64>,
    pub epochs: Vec<EpochSummary>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hypervolume: Option<f64>,
}

/// Per-epoch across-seed aggregates of the history records.
pub fn summarize(runs: &[SeedRun], pareto: Option<&ParetoFront>) -> Result<ReportSummary> {
    let mut by_epoch: BTreeMap<u64, Vec<&HistoryRecord>> = BTreeMap::new();
    for run in runs {
        for rec in &run.history {
            by_epoch.entry(rec.epoch).or_default().push(rec);
        }
    }
    let epochs = by_epoch
        .into_iter()
        .map(|(epoch, recs)| {
            let col = |f: &dyn Fn(&HistoryRecord) -> Option<f64>| -> Vec<f64> {
                recs.iter().filter_map(|r| f(r)).collect()
            };
            EpochSummary {
                epoch,
                mean_reward: MeanStd::of(&col(&|r| Some(r.mean_reward))).expect("nonempty"),
                max_reward: MeanStd::of(&col(&|r| Some(r.max_reward))).expect("nonempty"),
                mean_acc: MeanStd::of(&col(&|r| r.eval.as_ref().map(|e| e.mean_acc))),
                max_acc: MeanStd::of(&col(&|r| r.eval.as_ref().map(|e| e.max_acc))),
                crossing_rate: MeanStd::of(&col(&|r| r.eval.as_ref()?.crossing_rate)),
            }
        })
        .collect();
    Ok(ReportSummary {
        schema_version: SUMMARY_SCHEMA_VERSION,
        seeds: runs.iter().map(|r| r.seed).collect(),
        epochs,
        hypervolume: pareto.map(hypervolume).transpose()?,
    })
}

fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    csv::Writer::from_path(path).map_err(|e| csv_error(path, e))
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::io(path, std::io::Error::other(format!("{other:?}"))),
    }
}

fn write_rows<T: Serialize>(path: &Path, header: &[&str], rows: &[T]) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_path(path)
        .map_err(|e| csv_error(path, e))?;
    w.write_record(header).map_err(|e| csv_error(path, e))?;
    for row in rows {
        w.serialize(row).map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Writes `dynamics.csv`, `distribution_ep{N}.csv` per evaluated epoch,
/// `crossing.csv`, `pareto.csv` and `summary.json` into `dir`. Output depends
/// only on the inputs.
pub fn export_report(dir: &Path, runs: &[SeedRun], opts: &ReportOptions) -> Result<ReportSummary> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;

    let dynamics: Vec<DynamicsRow> = runs
        .iter()
        .flat_map(|run| {
            run.history.iter().map(move |r| DynamicsRow {
                seed: run.seed,
                epoch: r.epoch,
                mean_reward: r.mean_reward,
                max_reward: r.max_reward,
                mean_advantage: r.mean_advantage,
                loss: r.loss,
                mean_acc: r.eval.as_ref().map(|e| e.mean_acc),
                max_acc: r.eval.as_ref().map(|e| e.max_acc),
            })
        })
        .collect();
    write_rows(
        &dir.join("dynamics.csv"),
        &[
            "seed",
            "epoch",
            "mean_reward",
            "max_reward",
            "mean_advantage",
            "loss",
            "mean_acc",
            "max_acc",
        ],
        &dynamics,
    )?;

    let mut distributions: BTreeMap<u64, Vec<DistributionRow>> = BTreeMap::new();
    let mut crossing = Vec::new();
    for run in runs {
        for set in &run.samples {
            let rows = distributions.entry(set.epoch).or_default();
            rows.extend(set.samples.iter().enumerate().map(|(index, s)| DistributionRow {
                seed: run.seed,
                index,
                accuracy: s.accuracy(&opts.dataset),
                reward: s.reward,
            }));
            if let Some(pi) = opts.threshold {
                crossing.push(CrossingRow {
                    seed: run.seed,
                    epoch: set.epoch,
                    threshold: pi,
                    crossing_rate: crossing_rate(set, pi, &opts.dataset),
                });
            }
        }
    }
    for (epoch, rows) in &distributions {
        write_rows(
            &dir.join(format!("distribution_ep{epoch}.csv")),
            &["seed", "index", "accuracy", "reward"],
            rows,
        )?;
    }
    write_rows(
        &dir.join("crossing.csv"),
        &["seed", "epoch", "threshold", "crossing_rate"],
        &crossing,
    )?;

    let pareto_path = dir.join("pareto.csv");
    let mut w = csv_writer(&pareto_path)?;
    if let Some(front) = &opts.pareto {
        w.write_record(&front.objectives)
            .map_err(|e| csv_error(&pareto_path, e))?;
        for p in &front.points {
            w.write_record(p.iter().map(|x| x.to_string()))
                .map_err(|e| csv_error(&pareto_path, e))?;
        }
    } else {
        w.write_record(["objective"])
            .map_err(|e| csv_error(&pareto_path, e))?;
    }
    w.flush().map_err(|e| Error::io(&pareto_path, e))?;

    let summary = summarize(runs, opts.pareto.as_ref())?;
    let path = dir.join("summary.json");
    let json = serde_json::to_string_pretty(&summary).expect("summary serializes");
    fs::write(&path, json + "\n").map_err(|e| Error::io(&path, e))?;
    Ok(summary)
}
