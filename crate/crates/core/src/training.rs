//! Phase 1 cross-entropy pretraining and phase 2 reward-weighted fine-tuning
//! over sampled reverse trajectories.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::seq::{index, SliceRandom};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::checkpoint::Checkpoint;
use crate::dag::OrderedDag;
use crate::denoiser::LossItem;
use crate::diffusion::{forward_sample, generate_parallel, NoisyGraph, Trajectory};
use crate::error::{Error, Result};
use crate::eval::{crossing_rate, mean, sample_model, SampleSet};
use crate::optim::{apply_update, AdamState, AdamW, GradAccumulator};
use crate::reward::{advantage, MetricSource, RewardOracle, RewardStats, DEFAULT_STATS_DECAY};
use crate::seed::{stream_rng, Stream};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Pretrain,
    Finetune,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub phase: Phase,
    pub epochs: u64,
    /// Minibatch size when pretraining, rollouts per epoch (K) when fine-tuning.
    pub batch_size: usize,
    pub lr: f64,
    pub weight_decay: f64,
    /// Edge term weight of the cross-entropy.
    pub lambda: f64,
    /// Timesteps sampled per trajectory for the policy gradient.
    pub subset_size: usize,
    pub freeze_fraction: f64,
    /// Micro-batches whose gradients are averaged into one step.
    pub accumulation: usize,
    pub stats_decay: f64,
    /// Evaluate every this many epochs (0 disables periodic evaluation; the
    /// first and last epochs are always evaluated when fine-tuning).
    pub eval_every: u64,
    pub eval_samples: usize,
    /// Metric reported as accuracy; defaults to the first reward metric.
    pub eval_metric: Option<String>,
    /// Crossing-rate threshold for evaluations.
    pub threshold: Option<f64>,
    pub seed: u64,
    pub threads: usize,
}

impl TrainConfig {
    pub fn pretrain() -> Self {
        Self {
            phase: Phase::Pretrain,
            epochs: 200,
            batch_size: 64,
            lr: 3e-4,
            weight_decay: 0.01,
            lambda: 5.0,
            subset_size: 40,
            freeze_fraction: 0.0,
            accumulation: 1,
            stats_decay: DEFAULT_STATS_DECAY,
            eval_every: 5,
            eval_samples: 300,
            eval_metric: None,
            threshold: None,
            seed: 42,
            threads: 1,
        }
    }

    pub fn finetune() -> Self {
        Self {
            phase: Phase::Finetune,
            epochs: 60,
            batch_size: 15,
            lr: 7e-7,
            freeze_fraction: 0.75,
            ..Self::pretrain()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.batch_size == 0 {
            return bad("batch_size must be positive".into());
        }
        if self.subset_size == 0 {
            return bad("subset_size must be positive".into());
        }
        if self.accumulation == 0 {
            return bad("accumulation must be positive".into());
        }
        if !(self.lr.is_finite() && self.lr >= 0.0) {
            return bad(format!("lr must be a finite non-negative number, got {}", self.lr));
        }
        if !(0.0..=1.0).contains(&self.freeze_fraction) {
            return bad(format!(
                "freeze_fraction must lie in [0, 1], got {}",
                self.freeze_fraction
            ));
        }
        if !(0.0..1.0).contains(&self.stats_decay) {
            return bad(format!("stats_decay must lie in [0, 1), got {}", self.stats_decay));
        }
        if self.lambda < 0.0 {
            return bad(format!("lambda must be non-negative, got {}", self.lambda));
        }
        Ok(())
    }

    fn optimizer(&self) -> AdamW {
        AdamW::new(self.lr).with_weight_decay(self.weight_decay)
    }
}

/// Mean per-graph loss of one pretraining epoch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PretrainRecord {
    pub epoch: u64,
    pub loss: f64,
}

/// Phase 1: cross-entropy on forward-noised dataset graphs. Each graph gets
/// its own timestep and noise stream keyed by `(epoch, position)`.
pub fn pretrain(
    ckpt: &mut Checkpoint,
    dataset: &[OrderedDag],
    cfg: &TrainConfig,
) -> Result<Vec<PretrainRecord>> {
    cfg.validate()?;
    if dataset.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let dims = ckpt.space.dims();
    if let Some(g) = dataset.iter().find(|g| g.n() != dims.nodes) {
        return Err(Error::DimensionMismatch(format!(
            "dataset graph has {} nodes, space `{}` expects {}",
            g.n(),
            ckpt.space.name,
            dims.nodes
        )));
    }
    let steps = ckpt.schedule.steps();
    let optimizer = cfg.optimizer();
    let mut records = Vec::with_capacity(cfg.epochs as usize);
    for _ in 0..cfg.epochs {
        let epoch = ckpt.epoch;
        let mut order: Vec<usize> = (0..dataset.len()).collect();
        order.shuffle(&mut stream_rng(cfg.seed, Stream::DataShuffle, &[epoch]));
        let mut total = 0.0;
        for (b, batch) in order.chunks(cfg.batch_size).enumerate() {
            let noisy: Vec<NoisyGraph> = batch
                .iter()
                .enumerate()
                .map(|(i, &d)| {
                    let pos = (b * cfg.batch_size + i) as u64;
                    let mut rng = stream_rng(cfg.seed, Stream::ForwardNoise, &[epoch, pos]);
                    let t = rng.random_range(1..=steps);
                    forward_sample(&dataset[d], t, &ckpt.schedule, &dims, &mut rng)
                })
                .collect();
            let items: Vec<LossItem<'_>> = batch
                .iter()
                .zip(&noisy)
                .map(|(&d, g)| LossItem {
                    noisy: g,
                    target: &dataset[d],
                    scale: 1.0,
                })
                .collect();
            let micro = items.len().div_ceil(cfg.accumulation);
            let parts = items.chunks(micro).len() as f64;
            let mut acc = GradAccumulator::new(&ckpt.params);
            for chunk in items.chunks(micro) {
                let (loss, mut grad) = ckpt.params.loss_and_grad(chunk, cfg.lambda)?;
                total += loss;
                // The accumulator averages over micro-batches; this weighting
                // makes that average the minibatch mean.
                grad.scale(parts / items.len() as f64);
                acc.add(&grad);
            }
            apply_update(&mut ckpt.params, acc, &mut ckpt.optimizer, &optimizer);
        }
        ckpt.epoch += 1;
        records.push(PretrainRecord {
            epoch: ckpt.epoch,
            loss: total / dataset.len() as f64,
        });
    }
    Ok(records)
}

/// Keeps the graphs whose `metric` lies strictly below `threshold`; returns
/// them with the retained fraction.
pub fn filter_dataset(
    dataset: &[OrderedDag],
    source: &dyn MetricSource,
    threshold: f64,
    metric: &str,
) -> Result<(Vec<OrderedDag>, f64)> {
    let mut kept = Vec::new();
    for g in dataset {
        let value = source
            .metrics(g.dag())
            .and_then(|m| m.get(metric).copied())
            .ok_or_else(|| {
                Error::MissingEntry(format!(
                    "no `{metric}` entry for graph with labels {:?}",
                    g.node_labels()
                ))
            })?;
        if value < threshold {
            kept.push(g.clone());
        }
    }
    let fraction = if dataset.is_empty() {
        0.0
    } else {
        kept.len() as f64 / dataset.len() as f64
    };
    Ok((kept, fraction))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub mean_acc: f64,
    pub max_acc: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub crossing_rate: Option<f64>,
}

/// One line of the fine-tuning history. Epoch 0 describes the starting model:
/// its reward fields come from the evaluation samples and it has no update.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HistoryRecord {
    pub epoch: u64,
    pub mean_reward: f64,
    pub max_reward: f64,
    pub mean_advantage: f64,
    pub loss: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eval: Option<EvalSummary>,
}

pub fn write_history(path: &Path, records: &[HistoryRecord]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for r in records {
        serde_json::to_writer(&mut w, r).expect("history records serialize");
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_history(path: &Path) -> Result<Vec<HistoryRecord>> {
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

/// What one policy-gradient epoch did.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochReport {
    pub epoch: u64,
    pub mean_reward: f64,
    pub max_reward: f64,
    pub mean_advantage: f64,
    /// Value of the reward-weighted surrogate loss.
    pub loss: f64,
    pub trajectories: Vec<Trajectory>,
}

/// Timesteps for trajectory `k`: a uniform subset of `1..=steps` drawn
/// without replacement, sorted.
pub fn timestep_subset(seed: u64, epoch: u64, k: u64, steps: usize, size: usize) -> Vec<usize> {
    let mut rng = stream_rng(seed, Stream::Subset, &[epoch, k]);
    let mut v: Vec<usize> = index::sample(&mut rng, steps, size.min(steps))
        .into_iter()
        .map(|i| i + 1)
        .collect();
    v.sort_unstable();
    v
}

/// Loss items of the reward-weighted objective for scored trajectories: every
/// sampled timestep of trajectory `k` targets its own final graph with weight
/// `A_k * T / |subset| / K`. Zero-weight items are dropped.
pub fn policy_items<'a>(
    trajectories: &'a [Trajectory],
    subsets: &[Vec<usize>],
    steps: usize,
) -> Vec<LossItem<'a>> {
    let k = trajectories.len() as f64;
    trajectories
        .iter()
        .zip(subsets)
        .flat_map(|(tr, subset)| {
            let scale = tr.advantage * steps as f64 / subset.len() as f64 / k;
            subset.iter().filter(move |_| scale != 0.0).map(move |&t| LossItem {
                noisy: tr.at(t),
                target: &tr.final_graph,
                scale,
            })
        })
        .collect()
}

/// One policy-gradient epoch: K rollouts, rewards, advantages against the
/// freshly updated running statistics, then a single optimizer step on the
/// reward-weighted cross-entropy.
pub fn dgpo_epoch(
    ckpt: &mut Checkpoint,
    oracle: &RewardOracle,
    stats: &mut RewardStats,
    cfg: &TrainConfig,
    optimizer: &AdamW,
) -> Result<EpochReport> {
    let epoch = ckpt.epoch;
    let steps = ckpt.schedule.steps();
    let mut rngs: Vec<_> = (0..cfg.batch_size as u64)
        .map(|k| stream_rng(cfg.seed, Stream::Rollout, &[epoch, k]))
        .collect();
    let mut trajectories = generate_parallel(
        &ckpt.params,
        &ckpt.schedule,
        &ckpt.space,
        &mut rngs,
        true,
        cfg.threads,
    )?;
    let rewards: Vec<f64> = trajectories
        .iter()
        .map(|tr| oracle.score(tr.final_graph.dag()))
        .collect();
    stats.update(&rewards);
    for (tr, &r) in trajectories.iter_mut().zip(&rewards) {
        tr.reward = r;
        tr.advantage = advantage(r, stats);
    }
    let subsets: Vec<Vec<usize>> = (0..trajectories.len() as u64)
        .map(|k| timestep_subset(cfg.seed, epoch, k, steps, cfg.subset_size))
        .collect();

    let items = policy_items(&trajectories, &subsets, steps);
    let mut acc = GradAccumulator::new(&ckpt.params);
    let mut loss = 0.0;
    if !items.is_empty() {
        let micro = items.len().div_ceil(cfg.accumulation);
        let parts = items.chunks(micro).len() as f64;
        for chunk in items.chunks(micro) {
            let (l, mut grad) = ckpt.params.loss_and_grad(chunk, cfg.lambda)?;
            loss += l;
            grad.scale(parts);
            acc.add(&grad);
        }
    }
    apply_update(&mut ckpt.params, acc, &mut ckpt.optimizer, optimizer);
    ckpt.epoch += 1;

    let advantages: Vec<f64> = trajectories.iter().map(|t| t.advantage).collect();
    Ok(EpochReport {
        epoch: ckpt.epoch,
        mean_reward: mean(&rewards),
        max_reward: rewards.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        mean_advantage: mean(&advantages),
        loss,
        trajectories,
    })
}

/// Fine-tuning output: final model, per-epoch history and every evaluation.
#[derive(Debug, Clone)]
pub struct FinetuneRun {
    pub checkpoint: Checkpoint,
    pub history: Vec<HistoryRecord>,
    pub evaluations: Vec<SampleSet>,
}

fn eval_metric(cfg: &TrainConfig, oracle: &RewardOracle) -> String {
    cfg.eval_metric
        .clone()
        .or_else(|| oracle.spec().weights.first().map(|(m, _)| m.clone()))
        .unwrap_or_default()
}

fn summarize_eval(set: &SampleSet, metric: &str, threshold: Option<f64>) -> EvalSummary {
    let acc = set.accuracies(metric);
    EvalSummary {
        mean_acc: mean(&acc),
        max_acc: acc.iter().copied().fold(0.0, f64::max),
        crossing_rate: threshold.map(|pi| crossing_rate(set, pi, metric)),
    }
}

/// Phase 2. Freezes the configured parameter fraction, resets the optimizer
/// and epoch counter, then runs `cfg.epochs` policy-gradient epochs with fresh
/// evaluations at the start, every `eval_every` epochs and at the end. Zero
/// epochs return the input unchanged.
pub fn finetune(
    mut ckpt: Checkpoint,
    oracle: &RewardOracle,
    cfg: &TrainConfig,
) -> Result<FinetuneRun> {
    cfg.validate()?;
    if cfg.epochs == 0 {
        return Ok(FinetuneRun {
            checkpoint: ckpt,
            history: Vec::new(),
            evaluations: Vec::new(),
        });
    }
    ckpt.params.unfreeze_all();
    ckpt.params.freeze_fraction(cfg.freeze_fraction);
    ckpt.optimizer = AdamState::new(&ckpt.params);
    ckpt.epoch = 0;
    let optimizer = cfg.optimizer();
    let metric = eval_metric(cfg, oracle);
    let evaluate = |ckpt: &Checkpoint| {
        sample_model(
            &ckpt.params,
            &ckpt.schedule,
            &ckpt.space,
            oracle,
            cfg.eval_samples,
            cfg.seed,
            ckpt.epoch,
            cfg.threads,
        )
    };

    let initial = evaluate(&ckpt)?;
    let rewards = initial.rewards();
    let mut history = vec![HistoryRecord {
        epoch: 0,
        mean_reward: mean(&rewards),
        max_reward: rewards.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        mean_advantage: 0.0,
        loss: 0.0,
        eval: Some(summarize_eval(&initial, &metric, cfg.threshold)),
    }];
    let mut evaluations = vec![initial];

    let mut stats = RewardStats::new(cfg.stats_decay);
    for _ in 0..cfg.epochs {
        let report = dgpo_epoch(&mut ckpt, oracle, &mut stats, cfg, &optimizer)?;
        let due = report.epoch == cfg.epochs
            || (cfg.eval_every > 0 && report.epoch % cfg.eval_every == 0);
        let eval = if due {
            let set = evaluate(&ckpt)?;
            let summary = summarize_eval(&set, &metric, cfg.threshold);
            evaluations.push(set);
            Some(summary)
        } else {
            None
        };
        history.push(HistoryRecord {
            epoch: report.epoch,
            mean_reward: report.mean_reward,
            max_reward: report.max_reward,
            mean_advantage: report.mean_advantage,
            loss: report.loss,
            eval,
        });
    }
    if !ckpt.params.is_finite() {
        return Err(Error::Config(
            "fine-tuning diverged to non-finite weights; lower the learning rate".into(),
        ));
    }
    Ok(FinetuneRun {
        checkpoint: ckpt,
        history,
        evaluations,
    })
}
