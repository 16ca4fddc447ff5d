//! Dense denoising network.
//!
//! Input per graph is `[node one-hots | positional encodings | upper-cell edge
//! one-hots | t / T]`, followed by `L` ReLU layers of width `h` and two linear
//! heads producing per-node and per-cell logits. Gradients are derived by hand.

use ndarray::{linalg::general_mat_mul, s, Array1, Array2, ArrayView2, Axis, Zip};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dag::{OrderedDag, PositionalEncoding};
use crate::diffusion::{Denoiser, DenoiserOutput, NoisyGraph, PROB_FLOOR};
use crate::error::{Error, Result};
use crate::space::{upper_cells, GraphDims};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DenoiserDims {
    pub graph: GraphDims,
    /// Diffusion steps `T`, used to normalize the timestep input.
    pub steps: usize,
    pub pe_dim: usize,
    pub hidden: usize,
    pub layers: usize,
}

impl DenoiserDims {
    pub fn input_width(&self) -> usize {
        let g = &self.graph;
        g.nodes * g.node_categories + g.nodes * self.pe_dim + g.edge_cells() * g.edge_categories + 1
    }

    pub fn node_logits(&self) -> usize {
        self.graph.nodes * self.graph.node_categories
    }

    pub fn edge_logits(&self) -> usize {
        self.graph.edge_cells() * self.graph.edge_categories
    }

    /// `(fan_in, fan_out)` of every layer: hidden layers, node head, edge head.
    pub fn layer_shapes(&self) -> Vec<(usize, usize)> {
        let mut shapes = Vec::with_capacity(self.layers + 2);
        let mut width = self.input_width();
        for _ in 0..self.layers {
            shapes.push((width, self.hidden));
            width = self.hidden;
        }
        shapes.push((width, self.node_logits()));
        shapes.push((width, self.edge_logits()));
        shapes
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    /// `fan_in x fan_out`.
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
    pub frozen: bool,
}

impl Dense {
    fn zeros(fan_in: usize, fan_out: usize) -> Self {
        Self {
            weight: Array2::zeros((fan_in, fan_out)),
            bias: Array1::zeros(fan_out),
            frozen: false,
        }
    }

    pub fn param_count(&self) -> usize {
        self.weight.len() + self.bias.len()
    }
}

/// All trainable weights plus per-layer freeze flags.
#[derive(Debug, Clone, PartialEq)]
pub struct DenoiserParams {
    dims: DenoiserDims,
    pe: PositionalEncoding,
    pub layers: Vec<Dense>,
}

impl DenoiserParams {
    /// Kaiming-uniform hidden layers, zero biases, zero heads (so predictions
    /// start uniform).
    pub fn init<R: Rng + ?Sized>(dims: DenoiserDims, rng: &mut R) -> Result<Self> {
        let mut params = Self::zeros(dims)?;
        let hidden = dims.layers;
        for layer in params.layers.iter_mut().take(hidden) {
            let bound = (6.0 / layer.weight.nrows() as f64).sqrt();
            layer.weight.mapv_inplace(|_| rng.random_range(-bound..bound));
        }
        Ok(params)
    }

    pub fn zeros(dims: DenoiserDims) -> Result<Self> {
        if dims.graph.nodes < 2 {
            return Err(Error::DimensionMismatch(
                "denoiser needs at least two nodes".into(),
            ));
        }
        let pe = PositionalEncoding::new(dims.graph.nodes, dims.pe_dim)?;
        let layers = dims
            .layer_shapes()
            .into_iter()
            .map(|(i, o)| Dense::zeros(i, o))
            .collect();
        Ok(Self { dims, pe, layers })
    }

    pub fn dims(&self) -> &DenoiserDims {
        &self.dims
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(Dense::param_count).sum()
    }

    pub fn frozen_param_count(&self) -> usize {
        self.layers
            .iter()
            .filter(|l| l.frozen)
            .map(Dense::param_count)
            .sum()
    }

    pub fn frozen_fraction(&self) -> f64 {
        self.frozen_param_count() as f64 / self.param_count() as f64
    }

    /// Freezes the shortest prefix of layers (input side first) holding at
    /// least `fraction` of all parameters; later layers are unfrozen. Returns
    /// the achieved fraction.
    pub fn freeze_fraction(&mut self, fraction: f64) -> f64 {
        assert!((0.0..=1.0).contains(&fraction), "fraction must be in [0, 1]");
        let total = self.param_count() as f64;
        let mut frozen = 0usize;
        for layer in &mut self.layers {
            layer.frozen = (frozen as f64) < fraction * total;
            if layer.frozen {
                frozen += layer.param_count();
            }
        }
        self.frozen_fraction()
    }

    pub fn unfreeze_all(&mut self) {
        for layer in &mut self.layers {
            layer.frozen = false;
        }
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weight.iter().chain(l.bias.iter()).all(|w| w.is_finite()))
    }

    fn encode(&self, graphs: &[NoisyGraph]) -> Result<Array2<f64>> {
        let d = &self.dims;
        let g = &d.graph;
        let mut x = Array2::zeros((graphs.len(), d.input_width()));
        let pe_off = g.nodes * g.node_categories;
        let edge_off = pe_off + g.nodes * d.pe_dim;
        let t_col = d.input_width() - 1;
        for (mut row, graph) in x.axis_iter_mut(Axis(0)).zip(graphs) {
            graph.check_dims(g)?;
            for (i, &c) in graph.nodes.iter().enumerate() {
                row[i * g.node_categories + c] = 1.0;
            }
            for i in 0..g.nodes {
                for (k, &v) in self.pe.row(i).iter().enumerate() {
                    row[pe_off + i * d.pe_dim + k] = v;
                }
            }
            for (cell, &c) in graph.edges.iter().enumerate() {
                row[edge_off + cell * g.edge_categories + c] = 1.0;
            }
            row[t_col] = graph.t as f64 / d.steps as f64;
        }
        Ok(x)
    }

    /// Runs the network, keeping every activation for backprop.
    fn run(&self, graphs: &[NoisyGraph]) -> Result<Activations> {
        let input = self.encode(graphs)?;
        let hidden = self.dims.layers;
        let mut pre = Vec::with_capacity(hidden);
        let mut post = Vec::with_capacity(hidden + 1);
        post.push(input);
        for layer in &self.layers[..hidden] {
            let z = affine(post.last().unwrap().view(), layer);
            post.push(z.mapv(|v| v.max(0.0)));
            pre.push(z);
        }
        let last = post.last().unwrap().view();
        let node_logits = affine(last, &self.layers[hidden]);
        let edge_logits = affine(last, &self.layers[hidden + 1]);
        Ok(Activations {
            pre,
            post,
            node_logits,
            edge_logits,
        })
    }

    /// Predicted clean-graph distributions for each graph.
    pub fn forward(&self, graphs: &[NoisyGraph]) -> Result<Vec<DenoiserOutput>> {
        let acts = self.run(graphs)?;
        let g = &self.dims.graph;
        Ok(acts
            .node_logits
            .axis_iter(Axis(0))
            .zip(acts.edge_logits.axis_iter(Axis(0)))
            .map(|(nl, el)| DenoiserOutput {
                node_categories: g.node_categories,
                edge_categories: g.edge_categories,
                node_probs: softmax_rows(nl.as_slice().unwrap(), g.node_categories),
                edge_probs: softmax_rows(el.as_slice().unwrap(), g.edge_categories),
            })
            .collect())
    }

    /// Pre-ReLU activations of each hidden layer, one row per graph.
    pub fn hidden_preactivations(&self, graphs: &[NoisyGraph]) -> Result<Vec<Array2<f64>>> {
        Ok(self.run(graphs)?.pre)
    }

    /// Summed loss over `items` and its gradient:
    /// `sum_k scale_k * (sum_i CE(x_i) + lambda * sum_{i<j} CE(e_ij))`.
    ///
    /// Frozen layers receive an exactly-zero gradient.
    pub fn loss_and_grad(&self, items: &[LossItem<'_>], lambda: f64) -> Result<(f64, Gradients)> {
        let mut grads = Gradients::zeros_like(self);
        if items.is_empty() {
            return Ok((0.0, grads));
        }
        let g = &self.dims.graph;
        let graphs: Vec<NoisyGraph> = items.iter().map(|it| it.noisy.clone()).collect();
        let acts = self.run(&graphs)?;
        let mut d_node = Array2::zeros(acts.node_logits.raw_dim());
        let mut d_edge = Array2::zeros(acts.edge_logits.raw_dim());
        let mut loss = 0.0;
        for (b, item) in items.iter().enumerate() {
            let target = item.target;
            if target.n() != g.nodes {
                return Err(Error::DimensionMismatch(format!(
                    "target has {} nodes, expected {}",
                    target.n(),
                    g.nodes
                )));
            }
            let nl = acts.node_logits.row(b);
            let mut dn = d_node.row_mut(b);
            let mut item_loss = 0.0;
            for (i, &y) in target.node_labels().iter().enumerate() {
                let range = i * g.node_categories..(i + 1) * g.node_categories;
                item_loss += ce_row(
                    &nl.as_slice().unwrap()[range.clone()],
                    y,
                    item.scale,
                    &mut dn.as_slice_mut().unwrap()[range],
                );
            }
            let el = acts.edge_logits.row(b);
            let mut de = d_edge.row_mut(b);
            let mut edge_loss = 0.0;
            if lambda != 0.0 {
                for (cell, (i, j)) in upper_cells(g.nodes).enumerate() {
                    let y = target.edge(i, j);
                    let range = cell * g.edge_categories..(cell + 1) * g.edge_categories;
                    edge_loss += ce_row(
                        &el.as_slice().unwrap()[range.clone()],
                        y,
                        item.scale * lambda,
                        &mut de.as_slice_mut().unwrap()[range],
                    );
                }
            }
            loss += item.scale * (item_loss + lambda * edge_loss);
        }
        self.backward(&acts, d_node, d_edge, &mut grads);
        Ok((loss, grads))
    }

    fn backward(&self, acts: &Activations, d_node: Array2<f64>, d_edge: Array2<f64>, grads: &mut Gradients) {
        let hidden = self.dims.layers;
        let last = acts.post[hidden].view();
        for (idx, delta) in [(hidden, &d_node), (hidden + 1, &d_edge)] {
            if !self.layers[idx].frozen {
                let gl = &mut grads.layers[idx];
                general_mat_mul(1.0, &last.t(), delta, 0.0, &mut gl.weight);
                gl.bias = delta.sum_axis(Axis(0));
            }
        }
        // Backprop stops at the lowest trainable hidden layer.
        let Some(lowest_trainable) = (0..hidden).find(|&l| !self.layers[l].frozen) else {
            return;
        };
        let mut d_act = d_node.dot(&self.layers[hidden].weight.t());
        general_mat_mul(1.0, &d_edge, &self.layers[hidden + 1].weight.t(), 1.0, &mut d_act);
        for l in (lowest_trainable..hidden).rev() {
            Zip::from(&mut d_act)
                .and(&acts.pre[l])
                .for_each(|d, &z| {
                    if z <= 0.0 {
                        *d = 0.0;
                    }
                });
            if !self.layers[l].frozen {
                let gl = &mut grads.layers[l];
                general_mat_mul(1.0, &acts.post[l].t(), &d_act, 0.0, &mut gl.weight);
                gl.bias = d_act.sum_axis(Axis(0));
            }
            if l > lowest_trainable {
                d_act = d_act.dot(&self.layers[l].weight.t());
            }
        }
    }

    /// Total loss only (no gradient); handy for finite differences.
    pub fn loss(&self, items: &[LossItem<'_>], lambda: f64) -> Result<f64> {
        let graphs: Vec<NoisyGraph> = items.iter().map(|it| it.noisy.clone()).collect();
        let acts = self.run(&graphs)?;
        let g = &self.dims.graph;
        let mut loss = 0.0;
        for (b, item) in items.iter().enumerate() {
            let nl = acts.node_logits.row(b);
            let el = acts.edge_logits.row(b);
            let mut node = 0.0;
            for (i, &y) in item.target.node_labels().iter().enumerate() {
                let row = nl.slice(s![i * g.node_categories..(i + 1) * g.node_categories]);
                node += log_sum_exp(row.as_slice().unwrap()) - row[y];
            }
            let mut edge = 0.0;
            for (cell, (i, j)) in upper_cells(g.nodes).enumerate() {
                let row = el.slice(s![cell * g.edge_categories..(cell + 1) * g.edge_categories]);
                edge += log_sum_exp(row.as_slice().unwrap()) - row[item.target.edge(i, j)];
            }
            loss += item.scale * (node + lambda * edge);
        }
        Ok(loss)
    }
}

impl Denoiser for DenoiserParams {
    fn dims(&self) -> GraphDims {
        self.dims.graph
    }

    fn predict(&self, graphs: &[NoisyGraph]) -> Result<Vec<DenoiserOutput>> {
        self.forward(graphs)
    }
}

/// One term of the training loss: a noisy graph, the clean target it should
/// be denoised to, and a multiplier (1 for pretraining, the scaled advantage
/// for fine-tuning).
#[derive(Debug, Clone, Copy)]
pub struct LossItem<'a> {
    pub noisy: &'a NoisyGraph,
    pub target: &'a OrderedDag,
    pub scale: f64,
}

struct Activations {
    pre: Vec<Array2<f64>>,
    post: Vec<Array2<f64>>,
    node_logits: Array2<f64>,
    edge_logits: Array2<f64>,
}

fn affine(x: ArrayView2<'_, f64>, layer: &Dense) -> Array2<f64> {
    let mut z = Array2::zeros((x.nrows(), layer.weight.ncols()));
    general_mat_mul(1.0, &x, &layer.weight, 0.0, &mut z);
    z += &layer.bias;
    z
}

fn log_sum_exp(row: &[f64]) -> f64 {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    max + row.iter().map(|&v| (v - max).exp()).sum::<f64>().ln()
}

/// Cross-entropy of one logit row against class `y`; writes
/// `scale * (softmax - onehot)` into `grad`.
fn ce_row(logits: &[f64], y: usize, scale: f64, grad: &mut [f64]) -> f64 {
    let lse = log_sum_exp(logits);
    for (k, (g, &z)) in grad.iter_mut().zip(logits).enumerate() {
        let p = (z - lse).exp();
        *g = scale * (p - if k == y { 1.0 } else { 0.0 });
    }
    lse - logits[y]
}

fn softmax_rows(logits: &[f64], width: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(logits.len());
    for row in logits.chunks(width) {
        let lse = log_sum_exp(row);
        out.extend(row.iter().map(|&z| (z - lse).exp().max(PROB_FLOOR)));
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerGrad {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

/// Gradient (or optimizer moment) tensors shaped like [`DenoiserParams`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<LayerGrad>,
}

impl Gradients {
    pub fn zeros_like(params: &DenoiserParams) -> Self {
        Self {
            layers: params
                .layers
                .iter()
                .map(|l| LayerGrad {
                    weight: Array2::zeros(l.weight.raw_dim()),
                    bias: Array1::zeros(l.bias.raw_dim()),
                })
                .collect(),
        }
    }

    pub fn add_assign(&mut self, other: &Gradients) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            a.weight += &b.weight;
            a.bias += &b.bias;
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for l in &mut self.layers {
            l.weight *= factor;
            l.bias *= factor;
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.layers
            .iter()
            .flat_map(|l| l.weight.iter().chain(l.bias.iter()))
            .fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn is_zero(&self) -> bool {
        self.max_abs() == 0.0
    }

    /// Flat view of every value, layer by layer (weights then bias).
    pub fn values(&self) -> impl Iterator<Item = f64> + '_ {
        self.layers
            .iter()
            .flat_map(|l| l.weight.iter().chain(l.bias.iter()).copied())
    }
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::dag::Dag;

    fn dims(hidden: usize, layers: usize) -> DenoiserDims {
        DenoiserDims {
            graph: GraphDims {
                nodes: 3,
                node_categories: 5,
                edge_categories: 3,
            },
            steps: 10,
            pe_dim: 4,
            hidden,
            layers,
        }
    }

    fn target() -> OrderedDag {
        let mut g = Dag::empty(vec![1, 4, 0]);
        g.set_edge(0, 1, 2);
        g.set_edge(1, 2, 1);
        OrderedDag::from_upper_triangular(g).unwrap()
    }

    fn noisy() -> NoisyGraph {
        NoisyGraph {
            nodes: vec![2, 4, 0],
            edges: vec![1, 0, 2],
            t: 3,
        }
    }

    #[test]
    fn zero_heads_predict_uniform() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let p = DenoiserParams::init(dims(16, 2), &mut rng).unwrap();
        let out = p.forward(&[noisy()]).unwrap().remove(0);
        for row in out.node_rows() {
            for &v in row {
                assert!((v - 0.2).abs() < 1e-15);
            }
        }
        for row in out.edge_rows() {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn uniform_loss_without_edges_is_n_ln_a() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let p = DenoiserParams::init(dims(16, 2), &mut rng).unwrap();
        let t = target();
        let g = noisy();
        let item = LossItem {
            noisy: &g,
            target: &t,
            scale: 1.0,
        };
        let (loss, _) = p.loss_and_grad(&[item], 0.0).unwrap();
        assert!((loss - 3.0 * 5f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let p = DenoiserParams::init(dims(8, 1), &mut rng).unwrap();
        let bad = NoisyGraph {
            nodes: vec![0, 0],
            edges: vec![0],
            t: 1,
        };
        assert!(matches!(p.forward(&[bad]), Err(Error::DimensionMismatch(_))));
    }

    #[test]
    fn forward_is_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut p = DenoiserParams::init(dims(16, 2), &mut rng).unwrap();
        for l in &mut p.layers {
            l.weight.mapv_inplace(|_| rng.random_range(-0.5..0.5));
        }
        let a = p.forward(&[noisy()]).unwrap();
        let b = p.forward(&[noisy()]).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn freeze_fraction_takes_minimal_prefix() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut p = DenoiserParams::init(dims(32, 4), &mut rng).unwrap();
        assert_eq!(p.freeze_fraction(0.0), 0.0);
        assert!(p.layers.iter().all(|l| !l.frozen));
        assert_eq!(p.freeze_fraction(1.0), 1.0);
        assert!(p.layers.iter().all(|l| l.frozen));

        let counts: Vec<usize> = p.layers.iter().map(Dense::param_count).collect();
        let total: usize = counts.iter().sum();
        let achieved = p.freeze_fraction(0.75);
        let mut prefix = 0;
        let mut expected = None;
        for (k, c) in counts.iter().enumerate() {
            prefix += c;
            if prefix as f64 >= 0.75 * total as f64 {
                expected = Some((k + 1, prefix as f64 / total as f64));
                break;
            }
        }
        let (layers, fraction) = expected.unwrap();
        assert!(achieved >= 0.75);
        assert_eq!(achieved, fraction);
        assert_eq!(p.layers.iter().filter(|l| l.frozen).count(), layers);
        assert!(p.layers[..layers].iter().all(|l| l.frozen));
    }

    #[test]
    fn frozen_layers_get_zero_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut p = DenoiserParams::init(dims(16, 3), &mut rng).unwrap();
        for l in &mut p.layers {
            l.weight.mapv_inplace(|_| rng.random_range(-0.5..0.5));
        }
        p.layers[0].frozen = true;
        p.layers[1].frozen = true;
        let (t, g) = (target(), noisy());
        let item = LossItem {
            noisy: &g,
            target: &t,
            scale: 1.3,
        };
        let (_, grads) = p.loss_and_grad(&[item], 2.0).unwrap();
        assert_eq!(grads.layers[0].weight.iter().fold(0.0f64, |m, v| m.max(v.abs())), 0.0);
        assert_eq!(grads.layers[1].bias.iter().fold(0.0f64, |m, v| m.max(v.abs())), 0.0);
        assert!(grads.layers[2].weight.iter().any(|&v| v != 0.0));
    }
}
