//! Reward oracles: tabular benchmark lookup, a self-contained synthetic
//! structural score, inverse and weighted multi-objective combinations, and
//! running reward statistics for advantage normalization.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::dag::{topological_order, Dag, NO_EDGE};
use crate::error::{Error, Result};
use crate::space::{arch_key, ArchKey, SpaceSpec};

/// Per-dataset metric values (accuracies in `[0, 1]`), keyed by dataset id.
pub type Metrics = BTreeMap<String, f64>;

/// Advantages are clipped to `[-ADVANTAGE_CLIP, ADVANTAGE_CLIP]`.
pub const ADVANTAGE_CLIP: f64 = 5.0;
pub const STD_FLOOR: f64 = 1e-6;
pub const DEFAULT_STATS_DECAY: f64 = 0.99;

/// Metric ids produced by [`SyntheticOracle`].
pub const SYNTHETIC: &str = "synthetic";
pub const SYNTHETIC_DEPTH: &str = "depth";
pub const SYNTHETIC_EDGE_PREF: &str = "edge_pref";

/// Anything that can attach metrics to a generated architecture.
pub trait MetricSource: Send + Sync {
    /// `None` when the architecture is unknown or invalid.
    fn metrics(&self, g: &Dag) -> Option<Metrics>;
}

#[derive(Debug, Clone)]
pub struct BenchmarkTable {
    space: SpaceSpec,
    entries: HashMap<ArchKey, Metrics>,
}

#[derive(Serialize, Deserialize)]
struct TableLine {
    key: String,
    metrics: Metrics,
}

impl BenchmarkTable {
    pub fn new(space: SpaceSpec) -> Self {
        Self {
            space,
            entries: HashMap::new(),
        }
    }

    /// Adds or replaces an entry keyed by the canonical key of `g`.
    pub fn insert(&mut self, g: &Dag, metrics: Metrics) -> Result<ArchKey> {
        let key = arch_key(g, &self.space)?;
        self.entries.insert(key.clone(), metrics);
        Ok(key)
    }

    pub fn space(&self) -> &SpaceSpec {
        &self.space
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, key: &ArchKey) -> Option<&Metrics> {
        self.entries.get(key)
    }

    pub fn lookup(&self, g: &Dag) -> Option<&Metrics> {
        let key = arch_key(g, &self.space).ok()?;
        self.entries.get(&key)
    }

    /// Entries sorted by key.
    pub fn entries(&self) -> Vec<(&ArchKey, &Metrics)> {
        let mut v: Vec<_> = self.entries.iter().collect();
        v.sort_by(|a, b| a.0.cmp(b.0));
        v
    }

    /// Writes the table as line-delimited JSON, sorted by key.
    pub fn write(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        for (key, metrics) in self.entries() {
            let line = TableLine {
                key: key.as_str().to_string(),
                metrics: metrics.clone(),
            };
            serde_json::to_writer(&mut w, &line).expect("table lines serialize");
            w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

impl MetricSource for BenchmarkTable {
    fn metrics(&self, g: &Dag) -> Option<Metrics> {
        self.lookup(g).cloned()
    }
}

/// Loads a line-delimited benchmark table, checking every key and metric.
pub fn load_benchmark(path: &Path, space: &SpaceSpec) -> Result<BenchmarkTable> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut table = BenchmarkTable::new(space.clone());
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: TableLine = serde_json::from_str(&line).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: line_no,
            msg: e.to_string(),
        })?;
        for (metric, &value) in &parsed.metrics {
            if !(0.0..=1.0).contains(&value) {
                return Err(Error::Range {
                    path: path.to_path_buf(),
                    line: line_no,
                    metric: metric.clone(),
                    value,
                });
            }
        }
        let key = ArchKey::from(parsed.key);
        key.decode(space).map_err(|e| Error::Key {
            path: path.to_path_buf(),
            line: line_no,
            key: key.to_string(),
            msg: e.to_string(),
        })?;
        table.entries.insert(key, parsed.metrics);
    }
    Ok(table)
}

/// Longest path (in edges) through the present edges of an acyclic graph.
pub fn longest_path(g: &Dag) -> Option<usize> {
    let ordered = topological_order(g).ok()?;
    let n = ordered.n();
    let mut depth = vec![0usize; n];
    for j in 0..n {
        for i in 0..j {
            if ordered.edge(i, j) != NO_EDGE {
                depth[j] = depth[j].max(depth[i] + 1);
            }
        }
    }
    depth.into_iter().max()
}

fn synthetic_parts(g: &Dag) -> (f64, f64) {
    let n = g.n();
    if n < 2 {
        return (0.0, 0.0);
    }
    let Some(lp) = longest_path(g) else {
        return (0.0, 0.0);
    };
    let max_edges = (n * (n - 1) / 2) as f64;
    let preferred = g.edges().iter().filter(|&&e| e == 1).count() as f64;
    (lp as f64 / (n - 1) as f64, preferred / max_edges)
}

/// Structural score in `[0, 1]`: half normalized longest-path depth, half the
/// fraction of possible edges that carry category 1.
pub fn synthetic_reward(g: &Dag) -> f64 {
    let (depth, pref) = synthetic_parts(g);
    0.5 * depth + 0.5 * pref
}

/// Self-contained oracle reporting `synthetic`, `depth` and `edge_pref`.
#[derive(Debug, Clone, Copy, Default)]
pub struct SyntheticOracle;

impl MetricSource for SyntheticOracle {
    fn metrics(&self, g: &Dag) -> Option<Metrics> {
        if g.n() >= 2 && longest_path(g).is_none() {
            return None;
        }
        let (depth, pref) = synthetic_parts(g);
        Some(Metrics::from([
            (SYNTHETIC.to_string(), 0.5 * depth + 0.5 * pref),
            (SYNTHETIC_DEPTH.to_string(), depth),
            (SYNTHETIC_EDGE_PREF.to_string(), pref),
        ]))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RewardMode {
    Forward,
    Inverse,
    MultiObjective,
}

impl fmt::Display for RewardMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RewardMode::Forward => "forward",
            RewardMode::Inverse => "inverse",
            RewardMode::MultiObjective => "multi_objective",
        })
    }
}

impl FromStr for RewardMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "forward" => Ok(RewardMode::Forward),
            "inverse" => Ok(RewardMode::Inverse),
            "multi_objective" => Ok(RewardMode::MultiObjective),
            other => Err(Error::Config(format!("unknown reward mode `{other}`"))),
        }
    }
}

/// How metrics combine into a scalar reward.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardSpec {
    pub mode: RewardMode,
    /// `(dataset id, weight)` pairs.
    pub weights: Vec<(String, f64)>,
    /// Per-dataset `(lo, hi)` normalization bounds; `(0, 1)` when absent.
    pub bounds: BTreeMap<String, (f64, f64)>,
}

impl RewardSpec {
    pub fn forward(metric: &str) -> Self {
        Self {
            mode: RewardMode::Forward,
            weights: vec![(metric.to_string(), 1.0)],
            bounds: BTreeMap::new(),
        }
    }

    pub fn inverse(metric: &str) -> Self {
        Self {
            mode: RewardMode::Inverse,
            ..Self::forward(metric)
        }
    }

    pub fn multi_objective(weights: Vec<(String, f64)>) -> Result<Self> {
        let spec = Self {
            mode: RewardMode::MultiObjective,
            weights,
            bounds: BTreeMap::new(),
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.weights.is_empty() {
            return Err(Error::Config("reward spec needs at least one weight".into()));
        }
        if self.mode == RewardMode::MultiObjective
            && self.weights.iter().filter(|(_, w)| *w != 0.0).count() < 2
        {
            return Err(Error::Config(
                "multi-objective reward needs at least two nonzero weights".into(),
            ));
        }
        for (metric, &(lo, hi)) in &self.bounds {
            if hi.is_nan() || lo.is_nan() || hi <= lo {
                return Err(Error::Config(format!(
                    "normalization bounds for `{metric}` need hi > lo"
                )));
            }
        }
        Ok(())
    }

    pub fn normalize(&self, metric: &str, value: f64) -> f64 {
        let (lo, hi) = self.bounds.get(metric).copied().unwrap_or((0.0, 1.0));
        ((value - lo) / (hi - lo)).clamp(0.0, 1.0)
    }

    /// Scalar reward for a metrics record; `0` when any weighted metric is
    /// missing.
    pub fn combine(&self, metrics: Option<&Metrics>) -> f64 {
        let Some(metrics) = metrics else {
            return 0.0;
        };
        let mut total = 0.0;
        for (metric, w) in &self.weights {
            let Some(&v) = metrics.get(metric) else {
                return 0.0;
            };
            total += w * self.normalize(metric, v);
        }
        match self.mode {
            RewardMode::Inverse => -total,
            RewardMode::Forward | RewardMode::MultiObjective => total,
        }
    }
}

/// Reward for `g` from a benchmark table; unknown architectures score 0.
pub fn tabular_reward(table: &BenchmarkTable, g: &Dag, spec: &RewardSpec) -> f64 {
    spec.combine(table.lookup(g))
}

/// A metric source paired with the rule that turns its metrics into reward.
#[derive(Clone)]
pub struct RewardOracle {
    source: Arc<dyn MetricSource>,
    spec: RewardSpec,
}

impl fmt::Debug for RewardOracle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("RewardOracle").field("spec", &self.spec).finish()
    }
}

impl RewardOracle {
    pub fn new(source: Arc<dyn MetricSource>, spec: RewardSpec) -> Result<Self> {
        spec.validate()?;
        Ok(Self { source, spec })
    }

    pub fn synthetic(spec: RewardSpec) -> Result<Self> {
        Self::new(Arc::new(SyntheticOracle), spec)
    }

    pub fn spec(&self) -> &RewardSpec {
        &self.spec
    }

    pub fn source(&self) -> &Arc<dyn MetricSource> {
        &self.source
    }

    /// Metrics and scalar reward of one architecture.
    pub fn evaluate(&self, g: &Dag) -> (Option<Metrics>, f64) {
        let metrics = self.source.metrics(g);
        let reward = self.spec.combine(metrics.as_ref());
        (metrics, reward)
    }

    pub fn score(&self, g: &Dag) -> f64 {
        self.evaluate(g).1
    }
}

/// Exponential moving mean and variance of rewards.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardStats {
    pub mean: f64,
    pub var: f64,
    pub count: u64,
    pub decay: f64,
}

impl Default for RewardStats {
    fn default() -> Self {
        Self::new(DEFAULT_STATS_DECAY)
    }
}

impl RewardStats {
    pub fn new(decay: f64) -> Self {
        assert!((0.0..1.0).contains(&decay));
        Self {
            mean: 0.0,
            var: 0.0,
            count: 0,
            decay,
        }
    }

    pub fn std(&self) -> f64 {
        self.var.sqrt().max(STD_FLOOR)
    }

    /// Folds a batch in. The first batch seeds the statistics with its mean and
    /// population variance; later batches are mixed in with weight `1 - decay`.
    pub fn update(&mut self, batch: &[f64]) {
        if batch.is_empty() {
            return;
        }
        let (mean, var) = population_mean_var(batch);
        if self.count == 0 {
            self.mean = mean;
            self.var = var;
        } else {
            let w = 1.0 - self.decay;
            let delta = mean - self.mean;
            // Written as an increment so an unchanged batch mean leaves the
            // running mean bit-identical.
            self.mean += w * delta;
            self.var = (1.0 - w) * (self.var + w * delta * delta) + w * var;
        }
        self.count += batch.len() as u64;
    }
}

pub fn population_mean_var(values: &[f64]) -> (f64, f64) {
    if values.iter().all(|&v| v == values[0]) {
        return (values[0], 0.0);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var)
}

/// `clip((r - mean) / std, -5, 5)`.
pub fn advantage(reward: f64, stats: &RewardStats) -> f64 {
    let a = (reward - stats.mean) / stats.std();
    if a.is_nan() {
        return 0.0;
    }
    a.clamp(-ADVANTAGE_CLIP, ADVANTAGE_CLIP)
}

#[cfg(test)]
mod tests {
    use std::io::Write as _;

    use super::*;
    use crate::space::{enumerate_space, DEFAULT_ENUMERATION_CAP};

    fn chain(n: usize, cat: usize) -> Dag {
        let mut g = Dag::empty(vec![0; n]);
        for i in 0..n {
            for j in (i + 1)..n {
                g.set_edge(i, j, cat);
            }
        }
        g
    }

    #[test]
    fn synthetic_reward_values() {
        assert_eq!(synthetic_reward(&Dag::empty(vec![0; 4])), 0.0);
        assert!((synthetic_reward(&chain(4, 1)) - 1.0).abs() < 1e-15);
        let mut g = Dag::empty(vec![0; 4]);
        g.set_edge(0, 1, 1);
        assert!((synthetic_reward(&g) - 0.25).abs() < 1e-15);
        assert_eq!(synthetic_reward(&Dag::empty(vec![0])), 0.0);
    }

    #[test]
    fn synthetic_reward_survives_reordering() {
        let mut g = Dag::empty(vec![0, 1, 0, 1]);
        g.set_edge(3, 1, 1);
        g.set_edge(1, 0, 2);
        g.set_edge(3, 2, 1);
        let ordered = topological_order(&g).unwrap();
        assert_eq!(synthetic_reward(&g), synthetic_reward(ordered.dag()));
    }

    fn nb201_table() -> (BenchmarkTable, Dag) {
        let spec = SpaceSpec::nb201();
        let mut table = BenchmarkTable::new(spec.clone());
        // Optimum cell on CIFAR-10 validation.
        let mut best = Dag::empty(vec![0; 4]);
        for (i, j, op) in [(0, 1, 3), (0, 2, 3), (1, 2, 3), (0, 3, 1), (1, 3, 3), (2, 3, 3)] {
            best.set_edge(i, j, op);
        }
        table
            .insert(&best, Metrics::from([("c10".to_string(), 0.9161)]))
            .unwrap();
        (table, best)
    }

    #[test]
    fn tabular_reward_modes() {
        let (table, best) = nb201_table();
        let fwd = RewardSpec::forward("c10");
        assert!((tabular_reward(&table, &best, &fwd) - 0.9161).abs() < 1e-12);
        assert_eq!(
            tabular_reward(&table, &best, &RewardSpec::inverse("c10")),
            -tabular_reward(&table, &best, &fwd)
        );
        let missing = Dag::empty(vec![0; 4]);
        assert_eq!(tabular_reward(&table, &missing, &fwd), 0.0);
    }

    #[test]
    fn normalization_bounds_clip() {
        let mut spec = RewardSpec::forward("c10");
        spec.bounds.insert("c10".into(), (0.5, 0.9));
        assert!((spec.normalize("c10", 0.7) - 0.5).abs() < 1e-12);
        assert_eq!(spec.normalize("c10", 0.95), 1.0);
        assert_eq!(spec.normalize("c10", 0.1), 0.0);
    }

    #[test]
    fn multi_objective_needs_two_weights() {
        assert!(RewardSpec::multi_objective(vec![("a".into(), 1.0), ("b".into(), 0.0)]).is_err());
        let spec =
            RewardSpec::multi_objective(vec![("a".into(), 1.0), ("b".into(), 0.5)]).unwrap();
        let m = Metrics::from([("a".to_string(), 0.4), ("b".to_string(), 0.8)]);
        assert!((spec.combine(Some(&m)) - 0.8).abs() < 1e-12);
    }

    #[test]
    fn advantage_examples() {
        let mut stats = RewardStats::default();
        stats.update(&[1.0, 2.0, 3.0]);
        let a: Vec<f64> = [1.0, 2.0, 3.0].iter().map(|&r| advantage(r, &stats)).collect();
        let expected = (1.5f64).sqrt();
        assert!((a[0] + expected).abs() < 1e-12);
        assert_eq!(a[1], 0.0);
        assert!((a[2] - expected).abs() < 1e-12);

        let unit = RewardStats {
            mean: 0.0,
            var: 1.0,
            count: 1,
            decay: 0.99,
        };
        assert_eq!(advantage(100.0, &unit), 5.0);
        assert_eq!(advantage(-100.0, &unit), -5.0);
    }

    #[test]
    fn identical_batches_keep_zero_advantage() {
        let mut stats = RewardStats::default();
        for _ in 0..100 {
            stats.update(&[0.3; 15]);
            assert_eq!(advantage(0.3, &stats), 0.0);
        }
        assert!(stats.std() >= STD_FLOOR);
    }

    #[test]
    fn ema_mixes_batches() {
        let mut stats = RewardStats::new(0.5);
        stats.update(&[0.0, 2.0]);
        stats.update(&[4.0, 4.0]);
        // Mixture of N(1, 1) and a point mass at 4 with equal weight.
        assert!((stats.mean - 2.5).abs() < 1e-12);
        assert!((stats.var - (0.5 * (1.0 + 2.25) + 0.5 * 2.25)).abs() < 1e-12);
    }

    fn write_lines(lines: &[&str]) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        for l in lines {
            writeln!(f, "{l}").unwrap();
        }
        f
    }

    #[test]
    fn load_benchmark_checks_lines() {
        let spec = SpaceSpec::nb201();
        let ok = write_lines(&[
            r#"{"key": "nb201:0,0,0,0/1,2,3,4,0,1", "metrics": {"c10": 0.9}}"#,
            r#"{"key": "nb201:0,0,0,0/0,0,0,0,0,0", "metrics": {"c10": 0.1, "c100": 0.01}}"#,
            r#"{"key": "nb201:0,0,0,0/3,3,3,3,3,3", "metrics": {"in16": 0.4}}"#,
        ]);
        assert_eq!(load_benchmark(ok.path(), &spec).unwrap().len(), 3);

        let range = write_lines(&[
            r#"{"key": "nb201:0,0,0,0/1,2,3,4,0,1", "metrics": {"c10": 0.9}}"#,
            r#"{"key": "nb201:0,0,0,0/1,2,3,4,0,2", "metrics": {"c10": 1.5}}"#,
        ]);
        assert!(matches!(
            load_benchmark(range.path(), &spec),
            Err(Error::Range { line: 2, .. })
        ));

        let parse = write_lines(&[r#"{"key": "nb201:0,0,0,0/1,2,3,4,0,1""#]);
        assert!(matches!(
            load_benchmark(parse.path(), &spec),
            Err(Error::Parse { line: 1, .. })
        ));

        let key = write_lines(&[r#"{"key": "nb201:0,0,0,0/9,2,3,4,0,1", "metrics": {}}"#]);
        assert!(matches!(
            load_benchmark(key.path(), &spec),
            Err(Error::Key { line: 1, .. })
        ));
    }

    #[test]
    fn table_write_load_round_trip() {
        let spec = SpaceSpec::synthetic(3, 1, 2);
        let mut table = BenchmarkTable::new(spec.clone());
        for g in enumerate_space(&spec, DEFAULT_ENUMERATION_CAP).unwrap() {
            let m = SyntheticOracle.metrics(&g).unwrap();
            table.insert(&g, m).unwrap();
        }
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.jsonl");
        table.write(&path).unwrap();
        let back = load_benchmark(&path, &spec).unwrap();
        assert_eq!(back.len(), 8);
        for (k, m) in table.entries() {
            assert_eq!(back.get(k), Some(m));
        }
    }
}
