//! Flat key-value run configuration (TOML), with every key optional.
//!
//! ```toml
//! space = "synthetic"
//! seed = 42
//! finetune_lr = 1e-3
//! metrics = ["depth", "edge_pref"]
//! weights = [1.0, 1.0]
//! ```
//!
//! Unknown keys are rejected so that typos surface as configuration errors.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::diffusion::{NoiseSchedule, COSINE_OFFSET};
use crate::error::{Error, Result};
use crate::reward::{RewardMode, RewardSpec, SYNTHETIC, SYNTHETIC_DEPTH, SYNTHETIC_EDGE_PREF};
use crate::space::{SpaceKind, SpaceSpec};
use crate::training::{Phase, TrainConfig};

/// Environment variable capping rollout parallelism.
pub const THREADS_ENV: &str = "DAGPO_THREADS";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub space: SpaceKind,
    pub synthetic_nodes: usize,
    pub synthetic_node_categories: usize,
    /// Includes the no-edge category.
    pub synthetic_edge_categories: usize,

    pub steps: usize,
    pub hidden: usize,
    pub layers: usize,
    pub pe_dim: usize,
    pub seed: u64,
    /// Rollout workers; `DAGPO_THREADS` caps it. 0 means all available cores.
    pub threads: usize,

    /// Line-delimited JSON graphs used for pretraining.
    pub dataset: Option<PathBuf>,
    /// Uniform pool size when the synthetic space has no dataset file.
    pub dataset_size: usize,
    /// Benchmark table; the synthetic oracle is used when absent.
    pub benchmark: Option<PathBuf>,
    /// Input checkpoint for `finetune` (defaults to `<out>/pretrained.ckpt`).
    pub checkpoint: Option<PathBuf>,
    pub out: PathBuf,

    pub pretrain_epochs: u64,
    pub pretrain_batch_size: usize,
    pub pretrain_lr: f64,

    pub finetune_epochs: u64,
    pub rollouts: usize,
    pub finetune_lr: f64,
    pub freeze_fraction: f64,
    pub subset_size: usize,

    pub lambda: f64,
    pub weight_decay: f64,
    pub accumulation: usize,
    pub stats_decay: f64,
    pub eval_every: u64,
    pub eval_samples: usize,

    pub inverse: bool,
    /// Dataset ids the reward reads; defaults depend on the space and mode.
    pub metrics: Vec<String>,
    /// One weight per metric; two or more nonzero weights select the
    /// multi-objective mode.
    pub weights: Vec<f64>,
    /// Normalization bounds `[lo, hi]`, one pair per metric when given.
    pub bounds: Vec<[f64; 2]>,
    /// Crossing-rate and filter threshold.
    pub threshold: Option<f64>,
    /// Metric reported as accuracy; defaults to the first reward metric.
    pub eval_metric: Option<String>,
    /// Samples written by `sample`.
    pub n: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        let pre = TrainConfig::pretrain();
        let fine = TrainConfig::finetune();
        Self {
            space: SpaceKind::Synthetic,
            synthetic_nodes: 5,
            synthetic_node_categories: 2,
            synthetic_edge_categories: 3,
            steps: 800,
            hidden: 256,
            layers: 4,
            pe_dim: 8,
            seed: 42,
            threads: 0,
            dataset: None,
            dataset_size: 2000,
            benchmark: None,
            checkpoint: None,
            out: PathBuf::from("runs"),
            pretrain_epochs: pre.epochs,
            pretrain_batch_size: pre.batch_size,
            pretrain_lr: pre.lr,
            finetune_epochs: fine.epochs,
            rollouts: fine.batch_size,
            finetune_lr: fine.lr,
            freeze_fraction: fine.freeze_fraction,
            subset_size: fine.subset_size,
            lambda: fine.lambda,
            weight_decay: fine.weight_decay,
            accumulation: fine.accumulation,
            stats_decay: fine.stats_decay,
            eval_every: fine.eval_every,
            eval_samples: fine.eval_samples,
            inverse: false,
            metrics: Vec::new(),
            weights: Vec::new(),
            bounds: Vec::new(),
            threshold: None,
            eval_metric: None,
            n: 300,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn parse(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run config serializes")
    }

    /// Writes the effective configuration to `<out>/<name>`.
    pub fn archive(&self, name: &str) -> Result<PathBuf> {
        fs::create_dir_all(&self.out).map_err(|e| Error::io(&self.out, e))?;
        let path = self.out.join(name);
        fs::write(&path, self.to_toml()).map_err(|e| Error::io(&path, e))?;
        Ok(path)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.steps == 0 {
            return bad("`steps` must be positive".into());
        }
        if self.hidden == 0 || self.layers == 0 {
            return bad("`hidden` and `layers` must be positive".into());
        }
        if self.pe_dim == 0 || self.pe_dim % 2 == 1 {
            return bad(format!("`pe_dim` must be even and positive, got {}", self.pe_dim));
        }
        if self.space == SpaceKind::Synthetic
            && (self.synthetic_nodes == 0
                || self.synthetic_node_categories == 0
                || self.synthetic_edge_categories < 2)
        {
            return bad("synthetic space needs nodes >= 1, node categories >= 1 and edge categories >= 2".into());
        }
        if !self.weights.is_empty() && self.weights.len() != self.metric_ids().len() {
            return bad(format!(
                "`weights` has {} entries but {} metrics are configured ({})",
                self.weights.len(),
                self.metric_ids().len(),
                self.metric_ids().join(", ")
            ));
        }
        if !self.bounds.is_empty() && self.bounds.len() != self.metric_ids().len() {
            return bad("`bounds` needs one [lo, hi] pair per metric".into());
        }
        self.reward_spec()?;
        self.train_config(Phase::Pretrain).validate()?;
        self.train_config(Phase::Finetune).validate()
    }

    pub fn space_spec(&self) -> SpaceSpec {
        match self.space {
            SpaceKind::Nb101 => SpaceSpec::nb101(),
            SpaceKind::Nb201 => SpaceSpec::nb201(),
            SpaceKind::Synthetic => SpaceSpec::synthetic(
                self.synthetic_nodes,
                self.synthetic_node_categories,
                self.synthetic_edge_categories,
            ),
        }
    }

    pub fn schedule(&self) -> NoiseSchedule {
        NoiseSchedule::cosine(self.steps, COSINE_OFFSET)
    }

    fn multi_objective(&self) -> bool {
        self.weights.iter().filter(|w| **w != 0.0).count() >= 2
    }

    /// Reward metric ids after defaults.
    pub fn metric_ids(&self) -> Vec<String> {
        if !self.metrics.is_empty() {
            return self.metrics.clone();
        }
        let ids: &[&str] = match (self.space, self.weights.len() >= 2) {
            (SpaceKind::Synthetic, false) => &[SYNTHETIC],
            (SpaceKind::Synthetic, true) => &[SYNTHETIC_DEPTH, SYNTHETIC_EDGE_PREF],
            (_, false) => &["c10"],
            (_, true) => &["c10", "c100", "in16"],
        };
        ids.iter().map(|s| s.to_string()).collect()
    }

    pub fn reward_spec(&self) -> Result<RewardSpec> {
        let metrics = self.metric_ids();
        let weights = if self.weights.is_empty() {
            vec![1.0; metrics.len()]
        } else {
            self.weights.clone()
        };
        let mode = if self.inverse {
            RewardMode::Inverse
        } else if self.multi_objective() {
            RewardMode::MultiObjective
        } else {
            RewardMode::Forward
        };
        let spec = RewardSpec {
            mode,
            bounds: metrics
                .iter()
                .zip(&self.bounds)
                .map(|(m, b)| (m.clone(), (b[0], b[1])))
                .collect(),
            weights: metrics.into_iter().zip(weights).collect(),
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Effective worker count: the configured value (0 = all cores), capped by
    /// `DAGPO_THREADS` when set.
    pub fn effective_threads(&self) -> Result<usize> {
        let cores = std::thread::available_parallelism().map_or(1, |n| n.get());
        let wanted = if self.threads == 0 { cores } else { self.threads };
        match std::env::var(THREADS_ENV) {
            Ok(v) => {
                let cap: usize = v.trim().parse().ok().filter(|&c| c > 0).ok_or_else(|| {
                    Error::Config(format!("{THREADS_ENV} must be a positive integer, got `{v}`"))
                })?;
                Ok(wanted.min(cap))
            }
            Err(_) => Ok(wanted),
        }
    }

    pub fn train_config(&self, phase: Phase) -> TrainConfig {
        let (epochs, batch_size, lr, freeze_fraction) = match phase {
            Phase::Pretrain => (
                self.pretrain_epochs,
                self.pretrain_batch_size,
                self.pretrain_lr,
                0.0,
            ),
            Phase::Finetune => (
                self.finetune_epochs,
                self.rollouts,
                self.finetune_lr,
                self.freeze_fraction,
            ),
        };
        TrainConfig {
            phase,
            epochs,
            batch_size,
            lr,
            weight_decay: self.weight_decay,
            lambda: self.lambda,
            subset_size: self.subset_size,
            freeze_fraction,
            accumulation: self.accumulation,
            stats_decay: self.stats_decay,
            eval_every: self.eval_every,
            eval_samples: self.eval_samples,
            eval_metric: self.eval_metric.clone(),
            threshold: self.threshold,
            seed: self.seed,
            threads: self.threads.max(1),
        }
    }
}
