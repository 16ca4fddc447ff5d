//! Labeled directed acyclic graphs, canonical topological ordering, positional
//! encodings and the upper-triangular recovery projection.
//!
//! Edge category `0` always means "no edge". A [`Dag`] stores its edge matrix
//! row-major, so `edges[i * n + j]` is the category of the edge `i -> j`.

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Category index meaning "no edge".
pub const NO_EDGE: usize = 0;

/// A node-labeled, edge-labeled directed graph.
///
/// Construction only checks shape (square matrix, empty diagonal). Acyclicity
/// is a property checked by [`is_acyclic`] / [`topological_order`], so that
/// raw, possibly cyclic generator output can still be represented.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Dag {
    node_labels: Vec<usize>,
    edges: Vec<usize>,
}

impl Dag {
    /// Builds a graph from node labels and a row-major `n x n` edge matrix.
    pub fn new(node_labels: Vec<usize>, edges: Vec<usize>) -> Result<Self> {
        let n = node_labels.len();
        if n == 0 {
            return Err(Error::MalformedGraph("graph has no nodes".into()));
        }
        if edges.len() != n * n {
            return Err(Error::MalformedGraph(format!(
                "edge matrix has {} cells, expected {}",
                edges.len(),
                n * n
            )));
        }
        if let Some(i) = (0..n).find(|&i| edges[i * n + i] != NO_EDGE) {
            return Err(Error::MalformedGraph(format!("self-loop on node {i}")));
        }
        Ok(Self { node_labels, edges })
    }

    pub fn from_rows(node_labels: Vec<usize>, rows: &[Vec<usize>]) -> Result<Self> {
        let n = node_labels.len();
        if rows.len() != n || rows.iter().any(|r| r.len() != n) {
            return Err(Error::MalformedGraph(format!(
                "edge matrix must be {n}x{n}"
            )));
        }
        Self::new(node_labels, rows.concat())
    }

    /// `n` nodes with the given labels and no edges.
    pub fn empty(node_labels: Vec<usize>) -> Self {
        let n = node_labels.len();
        assert!(n > 0, "graph needs at least one node");
        Self {
            node_labels,
            edges: vec![NO_EDGE; n * n],
        }
    }

    pub fn n(&self) -> usize {
        self.node_labels.len()
    }

    pub fn node_labels(&self) -> &[usize] {
        &self.node_labels
    }

    pub fn edges(&self) -> &[usize] {
        &self.edges
    }

    pub fn edge(&self, from: usize, to: usize) -> usize {
        self.edges[from * self.n() + to]
    }

    pub fn set_edge(&mut self, from: usize, to: usize, category: usize) {
        assert_ne!(from, to, "self-loops are not representable");
        let n = self.n();
        self.edges[from * n + to] = category;
    }

    pub fn set_node_label(&mut self, node: usize, label: usize) {
        self.node_labels[node] = label;
    }

    pub fn rows(&self) -> Vec<Vec<usize>> {
        self.edges.chunks(self.n()).map(<[usize]>::to_vec).collect()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.iter().filter(|&&e| e != NO_EDGE).count()
    }

    /// `(source label, edge label, target label)` for every present edge, sorted.
    pub fn labeled_edge_triples(&self) -> Vec<(usize, usize, usize)> {
        let n = self.n();
        let mut triples: Vec<_> = (0..n)
            .flat_map(|i| (0..n).map(move |j| (i, j)))
            .filter(|&(i, j)| self.edge(i, j) != NO_EDGE)
            .map(|(i, j)| (self.node_labels[i], self.edge(i, j), self.node_labels[j]))
            .collect();
        triples.sort_unstable();
        triples
    }

    /// Checks label ranges: node labels `< node_categories`, edge labels
    /// `< edge_categories` (the latter counts the no-edge category).
    pub fn check_ranges(&self, node_categories: usize, edge_categories: usize) -> Result<()> {
        if let Some(&l) = self.node_labels.iter().find(|&&l| l >= node_categories) {
            return Err(Error::MalformedGraph(format!(
                "node label {l} out of range 0..{node_categories}"
            )));
        }
        if let Some(&e) = self.edges.iter().find(|&&e| e >= edge_categories) {
            return Err(Error::MalformedGraph(format!(
                "edge label {e} out of range 0..{edge_categories}"
            )));
        }
        Ok(())
    }

    pub fn is_strictly_upper_triangular(&self) -> bool {
        let n = self.n();
        (0..n).all(|i| (0..=i).all(|j| self.edge(i, j) == NO_EDGE))
    }

    /// Renumbers nodes so that new node `k` is old node `order[k]`.
    pub fn permuted(&self, order: &[usize]) -> Dag {
        let n = self.n();
        debug_assert_eq!(order.len(), n);
        let node_labels = order.iter().map(|&o| self.node_labels[o]).collect();
        let mut edges = vec![NO_EDGE; n * n];
        for (i, &oi) in order.iter().enumerate() {
            for (j, &oj) in order.iter().enumerate() {
                edges[i * n + j] = self.edge(oi, oj);
            }
        }
        Dag { node_labels, edges }
    }
}

#[derive(Serialize, Deserialize)]
struct DagRepr {
    n: usize,
    node_labels: Vec<usize>,
    edges: Vec<Vec<usize>>,
}

impl Serialize for Dag {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        DagRepr {
            n: self.n(),
            node_labels: self.node_labels.clone(),
            edges: self.rows(),
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for Dag {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let repr = DagRepr::deserialize(deserializer)?;
        if repr.n != repr.node_labels.len() {
            return Err(serde::de::Error::custom(format!(
                "n = {} but {} node labels given",
                repr.n,
                repr.node_labels.len()
            )));
        }
        Dag::from_rows(repr.node_labels, &repr.edges).map_err(serde::de::Error::custom)
    }
}

/// A graph in canonical topological order: its edge matrix is strictly
/// upper-triangular.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct OrderedDag {
    dag: Dag,
    /// `order[k]` is the original index of the node now at position `k`.
    order: Vec<usize>,
}

impl OrderedDag {
    /// Wraps a graph that is already strictly upper-triangular, with the
    /// identity order.
    pub fn from_upper_triangular(dag: Dag) -> Result<Self> {
        if !dag.is_strictly_upper_triangular() {
            return Err(Error::MalformedGraph(
                "edge matrix is not strictly upper-triangular".into(),
            ));
        }
        let order = (0..dag.n()).collect();
        Ok(Self { dag, order })
    }

    pub fn dag(&self) -> &Dag {
        &self.dag
    }

    pub fn into_dag(self) -> Dag {
        self.dag
    }

    pub fn order(&self) -> &[usize] {
        &self.order
    }

    pub fn n(&self) -> usize {
        self.dag.n()
    }

    pub fn node_labels(&self) -> &[usize] {
        self.dag.node_labels()
    }

    pub fn edge(&self, from: usize, to: usize) -> usize {
        self.dag.edge(from, to)
    }
}

impl Serialize for OrderedDag {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        self.dag.serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for OrderedDag {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let dag = Dag::deserialize(deserializer)?;
        topological_order(&dag).map_err(serde::de::Error::custom)
    }
}

/// Canonical topological order via Kahn's algorithm, always taking the lowest
/// original index among ready nodes.
pub fn topological_order(g: &Dag) -> Result<OrderedDag> {
    let n = g.n();
    let mut in_degree = vec![0usize; n];
    for i in 0..n {
        for (j, deg) in in_degree.iter_mut().enumerate() {
            if g.edge(i, j) != NO_EDGE {
                *deg += 1;
            }
        }
    }
    let mut ready: BinaryHeap<Reverse<usize>> = in_degree
        .iter()
        .enumerate()
        .filter(|(_, &d)| d == 0)
        .map(|(i, _)| Reverse(i))
        .collect();
    let mut order = Vec::with_capacity(n);
    while let Some(Reverse(u)) = ready.pop() {
        order.push(u);
        for (v, degree) in in_degree.iter_mut().enumerate() {
            if g.edge(u, v) != NO_EDGE {
                *degree -= 1;
                if *degree == 0 {
                    ready.push(Reverse(v));
                }
            }
        }
    }
    if order.len() != n {
        return Err(Error::CycleDetected);
    }
    Ok(OrderedDag {
        dag: g.permuted(&order),
        order,
    })
}

pub fn is_acyclic(g: &Dag) -> bool {
    topological_order(g).is_ok()
}

/// Projects a raw generated edge matrix onto its strict upper triangle.
///
/// Entries above the diagonal are kept verbatim, everything else becomes
/// [`NO_EDGE`], so the result is acyclic regardless of the input.
pub fn recover_dag(raw_edges: &[usize], node_labels: &[usize]) -> Result<OrderedDag> {
    let n = node_labels.len();
    if n == 0 || raw_edges.len() != n * n {
        return Err(Error::DimensionMismatch(format!(
            "raw edge matrix has {} cells for {n} nodes",
            raw_edges.len()
        )));
    }
    let mut edges = vec![NO_EDGE; n * n];
    for i in 0..n {
        for j in (i + 1)..n {
            edges[i * n + j] = raw_edges[i * n + j];
        }
    }
    Ok(OrderedDag {
        dag: Dag {
            node_labels: node_labels.to_vec(),
            edges,
        },
        order: (0..n).collect(),
    })
}

/// Sinusoidal encoding of a topological position.
///
/// Component `2k` is `sin(index / 10000^(2k/dim))`, component `2k+1` the
/// matching cosine.
pub fn positional_encoding(index: usize, dim: usize) -> Result<Vec<f64>> {
    if dim == 0 || !dim.is_multiple_of(2) {
        return Err(Error::InvalidDim(dim));
    }
    let pos = index as f64;
    let mut out = Vec::with_capacity(dim);
    for k in 0..dim / 2 {
        let freq = 10000f64.powf((2 * k) as f64 / dim as f64);
        out.push((pos / freq).sin());
        out.push((pos / freq).cos());
    }
    Ok(out)
}

/// Precomputed positional encodings for positions `0..max_nodes`.
#[derive(Debug, Clone, PartialEq)]
pub struct PositionalEncoding {
    dim: usize,
    table: Vec<Vec<f64>>,
}

impl PositionalEncoding {
    pub fn new(max_nodes: usize, dim: usize) -> Result<Self> {
        let table = (0..max_nodes)
            .map(|i| positional_encoding(i, dim))
            .collect::<Result<_>>()?;
        Ok(Self { dim, table })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, index: usize) -> &[f64] {
        &self.table[index]
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.table
    }
}
