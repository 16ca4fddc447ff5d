//! Discrete forward corruption and reverse generation over fixed-size graph
//! tensors.
//!
//! Both nodes and edges use the uniform kernel
//! `Q_t = alpha_t * I + (1 - alpha_t) / K * 11^T`, whose `t`-step product is
//! the same form with `alpha_bar_t`. Diagonal and lower-triangle edge cells are
//! never noised: only the `n(n-1)/2` upper cells are part of the state.

use std::f64::consts::FRAC_PI_2;

use rand::Rng;
use rayon::prelude::*;

use crate::dag::{OrderedDag, NO_EDGE};
use crate::error::{Error, Result};
use crate::space::{upper_cells, GraphDims, SpaceSpec};

/// Offset of the cosine schedule.
pub const COSINE_OFFSET: f64 = 0.008;

/// Probabilities below this are lifted before sampling.
pub const PROB_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSchedule {
    steps: usize,
    offset: f64,
    alpha_bar: Vec<f64>,
}

impl NoiseSchedule {
    /// `alpha_bar[t] = f(t) / f(0)` with `f(t) = cos^2(((t/T + s) / (1 + s)) * pi/2)`.
    pub fn cosine(steps: usize, offset: f64) -> Self {
        assert!(steps >= 1, "schedule needs at least one step");
        let f = |t: usize| {
            let x = ((t as f64 / steps as f64 + offset) / (1.0 + offset)) * FRAC_PI_2;
            x.cos().powi(2)
        };
        let f0 = f(0);
        let mut alpha_bar: Vec<f64> = (0..=steps).map(|t| (f(t) / f0).clamp(0.0, 1.0)).collect();
        alpha_bar[0] = 1.0;
        // Keep the sequence non-increasing under rounding.
        for t in 1..=steps {
            alpha_bar[t] = alpha_bar[t].min(alpha_bar[t - 1]);
        }
        Self {
            steps,
            offset,
            alpha_bar,
        }
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn offset(&self) -> f64 {
        self.offset
    }

    pub fn alpha_bar(&self, t: usize) -> f64 {
        self.alpha_bar[t]
    }

    pub fn alpha_bars(&self) -> &[f64] {
        &self.alpha_bar
    }

    /// One-step retention `alpha_t = alpha_bar[t] / alpha_bar[t-1]`.
    pub fn alpha(&self, t: usize) -> f64 {
        assert!(t >= 1 && t <= self.steps);
        let prev = self.alpha_bar[t - 1];
        if prev <= 0.0 {
            0.0
        } else {
            (self.alpha_bar[t] / prev).clamp(0.0, 1.0)
        }
    }

    pub fn step_kernel(&self, t: usize, categories: usize) -> TransitionKernel {
        TransitionKernel::new(categories, self.alpha(t))
    }

    pub fn cumulative_kernel(&self, t: usize, categories: usize) -> TransitionKernel {
        TransitionKernel::new(categories, self.alpha_bar(t))
    }

    /// Marginal probability that a cell still shows its clean category at `t`.
    pub fn keep_probability(&self, t: usize, categories: usize) -> f64 {
        let ab = self.alpha_bar(t);
        ab + (1.0 - ab) / categories as f64
    }
}

/// Uniform categorical transition kernel with retention `alpha`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransitionKernel {
    pub categories: usize,
    pub alpha: f64,
}

impl TransitionKernel {
    pub fn new(categories: usize, alpha: f64) -> Self {
        assert!(categories >= 1);
        Self { categories, alpha }
    }

    /// `Q[from][to]`.
    pub fn prob(&self, from: usize, to: usize) -> f64 {
        let uniform = (1.0 - self.alpha) / self.categories as f64;
        if from == to {
            self.alpha + uniform
        } else {
            uniform
        }
    }

    pub fn matrix(&self) -> Vec<Vec<f64>> {
        (0..self.categories)
            .map(|i| (0..self.categories).map(|j| self.prob(i, j)).collect())
            .collect()
    }
}

/// A graph tensor at diffusion step `t`, stored as category indices.
///
/// Node `i` has category `nodes[i]`; upper cell `k` (row-major over `i < j`)
/// has category `edges[k]`. This is equivalent to the one-hot tensors, with
/// diagonal and lower-triangle cells implicitly "no edge".
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NoisyGraph {
    pub nodes: Vec<usize>,
    pub edges: Vec<usize>,
    pub t: usize,
}

impl NoisyGraph {
    /// The clean tensor of an ordered graph, tagged with step `t`.
    pub fn from_ordered(g: &OrderedDag, t: usize) -> Self {
        let n = g.n();
        Self {
            nodes: g.node_labels().to_vec(),
            edges: upper_cells(n).map(|(i, j)| g.edge(i, j)).collect(),
            t,
        }
    }

    pub fn n(&self) -> usize {
        self.nodes.len()
    }

    /// Edge category at `(i, j)`; always [`NO_EDGE`] unless `i < j`.
    pub fn edge(&self, i: usize, j: usize) -> usize {
        if i >= j {
            return NO_EDGE;
        }
        self.edges[crate::space::upper_cell_index(self.n(), i, j)]
    }

    pub fn node_one_hot(&self, categories: usize) -> Vec<Vec<f64>> {
        self.nodes.iter().map(|&c| one_hot(c, categories)).collect()
    }

    /// Full `n x n x categories` one-hot edge tensor.
    pub fn edge_one_hot(&self, categories: usize) -> Vec<Vec<Vec<f64>>> {
        let n = self.n();
        (0..n)
            .map(|i| (0..n).map(|j| one_hot(self.edge(i, j), categories)).collect())
            .collect()
    }

    /// Full row-major edge matrix.
    pub fn edge_matrix(&self) -> Vec<usize> {
        let n = self.n();
        let mut m = vec![NO_EDGE; n * n];
        for ((i, j), &c) in upper_cells(n).zip(&self.edges) {
            m[i * n + j] = c;
        }
        m
    }

    pub fn check_dims(&self, dims: &GraphDims) -> Result<()> {
        if self.nodes.len() != dims.nodes || self.edges.len() != dims.edge_cells() {
            return Err(Error::DimensionMismatch(format!(
                "noisy graph has {} nodes / {} cells, expected {} / {}",
                self.nodes.len(),
                self.edges.len(),
                dims.nodes,
                dims.edge_cells()
            )));
        }
        if self.nodes.iter().any(|&c| c >= dims.node_categories)
            || self.edges.iter().any(|&c| c >= dims.edge_categories)
        {
            return Err(Error::DimensionMismatch("category index out of range".into()));
        }
        Ok(())
    }
}

fn one_hot(c: usize, k: usize) -> Vec<f64> {
    let mut v = vec![0.0; k];
    v[c] = 1.0;
    v
}

fn corrupt<R: Rng + ?Sized>(clean: usize, alpha_bar: f64, k: usize, rng: &mut R) -> usize {
    // Keep with probability alpha_bar, otherwise resample uniformly over all K;
    // this is exactly the marginal of the uniform cumulative kernel.
    if rng.random::<f64>() < alpha_bar {
        clean
    } else {
        rng.random_range(0..k)
    }
}

/// Samples `G_t ~ q(G_t | G_0)`.
pub fn forward_sample<R: Rng + ?Sized>(
    g0: &OrderedDag,
    t: usize,
    schedule: &NoiseSchedule,
    dims: &GraphDims,
    rng: &mut R,
) -> NoisyGraph {
    assert!(t >= 1 && t <= schedule.steps(), "timestep {t} out of range");
    let ab = schedule.alpha_bar(t);
    let clean = NoisyGraph::from_ordered(g0, t);
    NoisyGraph {
        nodes: clean
            .nodes
            .iter()
            .map(|&c| corrupt(c, ab, dims.node_categories, rng))
            .collect(),
        edges: clean
            .edges
            .iter()
            .map(|&c| corrupt(c, ab, dims.edge_categories, rng))
            .collect(),
        t,
    }
}

/// Writes `p(x_{t-1} | x_t) = sum_x0 x0_probs[x0] * q(x_{t-1} | x_t, x0)` into
/// `out`, where `q(x_{t-1}=j | x_t, x0) = Q_t[j, x_t] * Qbar_{t-1}[x0, j] /
/// Qbar_t[x0, x_t]`. Clean categories that cannot produce `x_t` carry no weight.
pub fn posterior_into(
    x_t: usize,
    x0_probs: &[f64],
    t: usize,
    schedule: &NoiseSchedule,
    out: &mut [f64],
) -> Result<()> {
    let k = x0_probs.len();
    debug_assert_eq!(out.len(), k);
    let kf = k as f64;
    let alpha = schedule.alpha(t);
    let (ab, ab_prev) = (schedule.alpha_bar(t), schedule.alpha_bar(t - 1));
    let (step_u, u, u_prev) = ((1.0 - alpha) / kf, (1.0 - ab) / kf, (1.0 - ab_prev) / kf);
    // With uniform kernels Qbar_{t-1}[x0, j] = ab_prev * [x0 = j] + u_prev, so
    // the sum over x0 splits into a diagonal term and a shared term.
    let reach = |x0: usize| if x0 == x_t { ab + u } else { u };
    let mut shared = 0.0;
    for (x0, &p) in x0_probs.iter().enumerate() {
        let r = reach(x0);
        if r > 0.0 {
            shared += p / r;
        }
    }
    let mut total = 0.0;
    for (j, (o, &p)) in out.iter_mut().zip(x0_probs).enumerate() {
        let step = if j == x_t { alpha + step_u } else { step_u };
        let r = reach(j);
        let diagonal = if r > 0.0 { ab_prev * p / r } else { 0.0 };
        *o = step * (diagonal + u_prev * shared);
        total += *o;
    }
    if !(total.is_finite() && total > f64::MIN_POSITIVE) {
        return Err(Error::DegenerateDistribution { t });
    }
    for o in out.iter_mut() {
        *o /= total;
    }
    Ok(())
}

pub fn posterior_step_distribution(
    x_t: usize,
    x0_probs: &[f64],
    t: usize,
    schedule: &NoiseSchedule,
) -> Result<Vec<f64>> {
    assert!(t >= 1 && t <= schedule.steps(), "timestep {t} out of range");
    assert!(x_t < x0_probs.len());
    let mut out = vec![0.0; x0_probs.len()];
    posterior_into(x_t, x0_probs, t, schedule, &mut out)?;
    Ok(out)
}

pub fn sample_categorical<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let total: f64 = probs.iter().map(|&p| p.max(PROB_FLOOR)).sum();
    let mut u = rng.random::<f64>() * total;
    for (i, &p) in probs.iter().enumerate() {
        u -= p.max(PROB_FLOOR);
        if u < 0.0 {
            return i;
        }
    }
    probs.len() - 1
}

/// Predicted clean-graph distributions: one row per node and per upper cell,
/// stored flat.
#[derive(Debug, Clone, PartialEq)]
pub struct DenoiserOutput {
    pub node_categories: usize,
    pub edge_categories: usize,
    pub node_probs: Vec<f64>,
    pub edge_probs: Vec<f64>,
}

impl DenoiserOutput {
    pub fn node_row(&self, i: usize) -> &[f64] {
        let a = self.node_categories;
        &self.node_probs[i * a..(i + 1) * a]
    }

    pub fn edge_row(&self, cell: usize) -> &[f64] {
        let b = self.edge_categories;
        &self.edge_probs[cell * b..(cell + 1) * b]
    }

    pub fn node_rows(&self) -> impl Iterator<Item = &[f64]> {
        self.node_probs.chunks(self.node_categories)
    }

    pub fn edge_rows(&self) -> impl Iterator<Item = &[f64]> {
        self.edge_probs.chunks(self.edge_categories)
    }
}

/// Anything that maps noisy graphs to clean-graph distributions.
pub trait Denoiser {
    fn dims(&self) -> GraphDims;

    fn predict(&self, graphs: &[NoisyGraph]) -> Result<Vec<DenoiserOutput>>;
}

/// A denoiser with a constant prediction; useful as an oracle in tests and
/// as a no-information baseline.
#[derive(Debug, Clone)]
pub struct FixedDenoiser {
    dims: GraphDims,
    output: DenoiserOutput,
}

impl FixedDenoiser {
    pub fn uniform(dims: GraphDims) -> Self {
        let a = dims.node_categories;
        let b = dims.edge_categories;
        Self {
            dims,
            output: DenoiserOutput {
                node_categories: a,
                edge_categories: b,
                node_probs: vec![1.0 / a as f64; dims.nodes * a],
                edge_probs: vec![1.0 / b as f64; dims.edge_cells() * b],
            },
        }
    }

    /// Always predicts a point mass on `target`.
    pub fn point_mass(dims: GraphDims, target: &OrderedDag) -> Self {
        let clean = NoisyGraph::from_ordered(target, 0);
        let output = DenoiserOutput {
            node_categories: dims.node_categories,
            edge_categories: dims.edge_categories,
            node_probs: clean
                .nodes
                .iter()
                .flat_map(|&c| one_hot(c, dims.node_categories))
                .collect(),
            edge_probs: clean
                .edges
                .iter()
                .flat_map(|&c| one_hot(c, dims.edge_categories))
                .collect(),
        };
        Self { dims, output }
    }
}

impl Denoiser for FixedDenoiser {
    fn dims(&self) -> GraphDims {
        self.dims
    }

    fn predict(&self, graphs: &[NoisyGraph]) -> Result<Vec<DenoiserOutput>> {
        graphs
            .iter()
            .map(|g| g.check_dims(&self.dims).map(|()| self.output.clone()))
            .collect()
    }
}

/// One reverse-diffusion rollout.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    /// `G_T, G_{T-1}, ..., G_1`; empty when intermediates were not kept.
    pub intermediates: Vec<NoisyGraph>,
    /// Recovered `G_0` in tensor form (padding included).
    pub final_graph: OrderedDag,
    pub reward: f64,
    pub advantage: f64,
}

impl Trajectory {
    /// The intermediate graph at step `t` (`1 <= t <= T`).
    pub fn at(&self, t: usize) -> &NoisyGraph {
        let steps = self.intermediates.len();
        &self.intermediates[steps - t]
    }
}

fn uniform_prior<R: Rng + ?Sized>(dims: &GraphDims, steps: usize, rng: &mut R) -> NoisyGraph {
    NoisyGraph {
        nodes: (0..dims.nodes)
            .map(|_| rng.random_range(0..dims.node_categories))
            .collect(),
        edges: (0..dims.edge_cells())
            .map(|_| rng.random_range(0..dims.edge_categories))
            .collect(),
        t: steps,
    }
}

/// Generates one graph: sample `G_T` uniformly, denoise down to `G_0`, then
/// recover a valid DAG.
pub fn reverse_generate<D, R>(
    denoiser: &D,
    schedule: &NoiseSchedule,
    spec: &SpaceSpec,
    rng: &mut R,
) -> Result<Trajectory>
where
    D: Denoiser + ?Sized,
    R: Rng,
{
    let mut out = generate_batch(denoiser, schedule, spec, std::slice::from_mut(rng), true)?;
    Ok(out.pop().expect("one trajectory per rng"))
}

/// Runs one rollout per rng, batching the denoiser calls. Every rollout draws
/// only from its own rng, so results do not depend on how rollouts are grouped.
pub fn generate_batch<D, R>(
    denoiser: &D,
    schedule: &NoiseSchedule,
    spec: &SpaceSpec,
    rngs: &mut [R],
    keep_intermediates: bool,
) -> Result<Vec<Trajectory>>
where
    D: Denoiser + ?Sized,
    R: Rng,
{
    let dims = spec.dims();
    if denoiser.dims() != dims {
        return Err(Error::DimensionMismatch(format!(
            "denoiser dims {:?} do not match space `{}` dims {:?}",
            denoiser.dims(),
            spec.name,
            dims
        )));
    }
    let steps = schedule.steps();
    let mut current: Vec<NoisyGraph> = rngs
        .iter_mut()
        .map(|rng| uniform_prior(&dims, steps, rng))
        .collect();
    let mut history: Vec<Vec<NoisyGraph>> = rngs
        .iter()
        .map(|_| Vec::with_capacity(if keep_intermediates { steps } else { 0 }))
        .collect();
    let mut node_buf = vec![0.0; dims.node_categories];
    let mut edge_buf = vec![0.0; dims.edge_categories];
    for t in (1..=steps).rev() {
        let predictions = denoiser.predict(&current)?;
        for (((g, pred), rng), hist) in current
            .iter_mut()
            .zip(&predictions)
            .zip(rngs.iter_mut())
            .zip(history.iter_mut())
        {
            if keep_intermediates {
                hist.push(g.clone());
            }
            for (i, x) in g.nodes.iter_mut().enumerate() {
                posterior_into(*x, pred.node_row(i), t, schedule, &mut node_buf)?;
                *x = sample_categorical(&node_buf, rng);
            }
            for (c, x) in g.edges.iter_mut().enumerate() {
                posterior_into(*x, pred.edge_row(c), t, schedule, &mut edge_buf)?;
                *x = sample_categorical(&edge_buf, rng);
            }
            g.t = t - 1;
        }
    }
    current
        .into_iter()
        .zip(history)
        .map(|(g0, intermediates)| {
            let final_graph = spec.project(&g0.edge_matrix(), &g0.nodes)?;
            Ok(Trajectory {
                intermediates,
                final_graph,
                reward: 0.0,
                advantage: 0.0,
            })
        })
        .collect()
}

/// [`generate_batch`] split over at most `threads` workers.
pub fn generate_parallel<D, R>(
    denoiser: &D,
    schedule: &NoiseSchedule,
    spec: &SpaceSpec,
    rngs: &mut [R],
    keep_intermediates: bool,
    threads: usize,
) -> Result<Vec<Trajectory>>
where
    D: Denoiser + Sync + ?Sized,
    R: Rng + Send,
{
    let threads = threads.max(1);
    if threads == 1 || rngs.len() < 2 {
        return generate_batch(denoiser, schedule, spec, rngs, keep_intermediates);
    }
    let chunk = rngs.len().div_ceil(threads);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    let parts: Vec<Result<Vec<Trajectory>>> = pool.install(|| {
        rngs.par_chunks_mut(chunk)
            .map(|part| generate_batch(denoiser, schedule, spec, part, keep_intermediates))
            .collect()
    });
    let mut out = Vec::with_capacity(rngs.len());
    for part in parts {
        out.extend(part?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::dag::{is_acyclic, Dag};

    /// For every clean category, the explicit joint table over `(x_{t-1}, x_t)`
    /// conditioned on the observed `x_t`, mixed by `x0_probs`.
    fn bayes_oracle(x_t: usize, x0_probs: &[f64], t: usize, s: &NoiseSchedule) -> Vec<f64> {
        let k = x0_probs.len();
        let q = s.step_kernel(t, k).matrix();
        let qbar = s.cumulative_kernel(t - 1, k).matrix();
        let mut out = vec![0.0; k];
        for (x0, &p0) in x0_probs.iter().enumerate() {
            let joint: Vec<f64> = (0..k).map(|prev| qbar[x0][prev] * q[prev][x_t]).collect();
            let evidence: f64 = joint.iter().sum();
            if evidence > 0.0 {
                for (o, j) in out.iter_mut().zip(&joint) {
                    *o += p0 * j / evidence;
                }
            }
        }
        let total: f64 = out.iter().sum();
        out.iter().map(|o| o / total).collect()
    }

    #[test]
    fn cosine_schedule_invariants() {
        let s = NoiseSchedule::cosine(800, COSINE_OFFSET);
        assert_eq!(s.alpha_bar(0), 1.0);
        assert!(s.alpha_bar(800) < 0.01);
        for t in 0..800 {
            assert!(s.alpha_bar(t + 1) <= s.alpha_bar(t));
        }
    }

    #[test]
    fn kernels_are_row_stochastic() {
        let s = NoiseSchedule::cosine(800, COSINE_OFFSET);
        for t in 1..=800 {
            for k in 1..=6 {
                for kern in [s.step_kernel(t, k), s.cumulative_kernel(t, k)] {
                    for row in kern.matrix() {
                        assert!((row.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
                    }
                }
            }
        }
    }

    #[test]
    fn posterior_matches_bayes_enumeration() {
        let s = NoiseSchedule::cosine(50, COSINE_OFFSET);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for k in 2..=5 {
            let mut prior: Vec<f64> = (0..k).map(|_| rng.random::<f64>()).collect();
            let z: f64 = prior.iter().sum();
            prior.iter_mut().for_each(|p| *p /= z);
            for t in [1, 10, 25, 50] {
                for x_t in 0..k {
                    let got = posterior_step_distribution(x_t, &prior, t, &s).unwrap();
                    let want = bayes_oracle(x_t, &prior, t, &s);
                    for (g, w) in got.iter().zip(&want) {
                        assert!((g - w).abs() <= 1e-10);
                    }
                }
            }
        }
    }

    #[test]
    fn noiseless_posterior_is_point_mass() {
        // A schedule with alpha = 1 at every step.
        let s = NoiseSchedule {
            steps: 2,
            offset: 0.0,
            alpha_bar: vec![1.0, 1.0, 1.0],
        };
        let p = posterior_step_distribution(2, &[0.0, 0.0, 1.0], 2, &s).unwrap();
        assert_eq!(p, vec![0.0, 0.0, 1.0]);
    }

    #[test]
    fn degenerate_posterior_is_reported() {
        let s = NoiseSchedule {
            steps: 1,
            offset: 0.0,
            alpha_bar: vec![1.0, 1.0],
        };
        // x_t = 0 is impossible under a noiseless chain from x0 = 1.
        assert!(matches!(
            posterior_step_distribution(0, &[0.0, 1.0], 1, &s),
            Err(Error::DegenerateDistribution { t: 1 })
        ));
    }

    #[test]
    fn forward_sample_at_zero_noise_is_identity() {
        let s = NoiseSchedule {
            steps: 1,
            offset: 0.0,
            alpha_bar: vec![1.0, 1.0],
        };
        let spec = SpaceSpec::synthetic(4, 3, 3);
        let mut g = Dag::empty(vec![0, 1, 2, 1]);
        g.set_edge(0, 3, 2);
        g.set_edge(1, 2, 1);
        let g = OrderedDag::from_upper_triangular(g).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let noisy = forward_sample(&g, 1, &s, &spec.dims(), &mut rng);
        assert_eq!(noisy, NoisyGraph::from_ordered(&g, 1));
        assert_eq!(noisy.node_one_hot(3)[1], vec![0.0, 1.0, 0.0]);
        assert_eq!(noisy.edge_one_hot(3)[0][3], vec![0.0, 0.0, 1.0]);
        assert_eq!(noisy.edge_one_hot(3)[3][0], vec![1.0, 0.0, 0.0]);
    }

    #[test]
    fn forward_sample_at_full_noise_is_uniform() {
        let s = NoiseSchedule::cosine(800, COSINE_OFFSET);
        let spec = SpaceSpec::synthetic(2, 4, 2);
        let g = OrderedDag::from_upper_triangular(Dag::empty(vec![0, 0])).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut counts = [0usize; 4];
        let draws = 10_000;
        for _ in 0..draws {
            counts[forward_sample(&g, 800, &s, &spec.dims(), &mut rng).nodes[0]] += 1;
        }
        for c in counts {
            assert!((c as f64 / draws as f64 - 0.25).abs() <= 0.02);
        }
    }

    #[test]
    fn point_mass_denoiser_reproduces_target() {
        let spec = SpaceSpec::synthetic(4, 3, 3);
        let s = NoiseSchedule::cosine(100, COSINE_OFFSET);
        let mut g = Dag::empty(vec![2, 0, 1, 1]);
        g.set_edge(0, 1, 1);
        g.set_edge(1, 3, 2);
        g.set_edge(0, 2, 1);
        let target = OrderedDag::from_upper_triangular(g).unwrap();
        let oracle = FixedDenoiser::point_mass(spec.dims(), &target);
        for seed in 0..20 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let traj = reverse_generate(&oracle, &s, &spec, &mut rng).unwrap();
            assert_eq!(traj.final_graph, target);
            assert_eq!(traj.intermediates.len(), 100);
            assert_eq!(traj.at(100).t, 100);
            assert_eq!(traj.at(1).t, 1);
        }
    }

    #[test]
    fn uniform_denoiser_generates_uniform_labels() {
        let spec = SpaceSpec::synthetic(3, 4, 3);
        let s = NoiseSchedule::cosine(20, COSINE_OFFSET);
        let den = FixedDenoiser::uniform(spec.dims());
        let mut rngs: Vec<ChaCha8Rng> = (0..1000).map(ChaCha8Rng::seed_from_u64).collect();
        let trajs = generate_batch(&den, &s, &spec, &mut rngs, false).unwrap();
        let mut counts = [0usize; 4];
        for t in &trajs {
            assert!(is_acyclic(t.final_graph.dag()));
            counts[t.final_graph.node_labels()[0]] += 1;
        }
        for c in counts {
            assert!((c as f64 / 1000.0 - 0.25).abs() <= 0.05, "{counts:?}");
        }
    }

    #[test]
    fn batching_and_threads_do_not_change_results() {
        let spec = SpaceSpec::synthetic(3, 2, 3);
        let s = NoiseSchedule::cosine(30, COSINE_OFFSET);
        let den = FixedDenoiser::uniform(spec.dims());
        let mk = || (0..6).map(ChaCha8Rng::seed_from_u64).collect::<Vec<_>>();
        let batched = generate_batch(&den, &s, &spec, &mut mk(), true).unwrap();
        let threaded = generate_parallel(&den, &s, &spec, &mut mk(), true, 3).unwrap();
        let single: Vec<_> = mk()
            .iter_mut()
            .map(|rng| reverse_generate(&den, &s, &spec, rng).unwrap())
            .collect();
        assert_eq!(batched, single);
        assert_eq!(batched, threaded);
    }
}
