//! Search spaces: NB101-style node-labeled cells, NB201-style edge-labeled
//! cells and a fixed-size synthetic space.
//!
//! Every space has a fixed tensor shape for diffusion. NB101 cells smaller than
//! seven nodes are padded with a dedicated "absent" node category; absent nodes
//! never carry edges.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dag::{recover_dag, topological_order, Dag, OrderedDag, NO_EDGE};
use crate::error::{Error, Result};

pub mod nb101 {
    pub const INPUT: usize = 0;
    pub const OUTPUT: usize = 1;
    pub const CONV1X1: usize = 2;
    pub const CONV3X3: usize = 3;
    pub const MAXPOOL3X3: usize = 4;
    pub const ABSENT: usize = 5;
    pub const MAX_NODES: usize = 7;
    pub const MAX_EDGES: usize = 9;
}

pub mod nb201 {
    pub const NONE: usize = 0;
    pub const SKIP_CONNECT: usize = 1;
    pub const CONV1X1: usize = 2;
    pub const CONV3X3: usize = 3;
    pub const AVG_POOL3X3: usize = 4;
    pub const NODES: usize = 4;
    pub const OPS: usize = 5;
}

/// Default ceiling on the number of architectures [`enumerate_space`] will walk.
pub const DEFAULT_ENUMERATION_CAP: u64 = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SpaceKind {
    Nb101,
    Nb201,
    Synthetic,
}

impl fmt::Display for SpaceKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SpaceKind::Nb101 => "nb101",
            SpaceKind::Nb201 => "nb201",
            SpaceKind::Synthetic => "synthetic",
        })
    }
}

impl FromStr for SpaceKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "nb101" => Ok(SpaceKind::Nb101),
            "nb201" => Ok(SpaceKind::Nb201),
            "synthetic" => Ok(SpaceKind::Synthetic),
            other => Err(Error::Config(format!(
                "unknown space `{other}` (expected nb101, nb201 or synthetic)"
            ))),
        }
    }
}

/// Fixed tensor shape shared by the diffusion process and the denoiser.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphDims {
    pub nodes: usize,
    pub node_categories: usize,
    /// Includes the no-edge category.
    pub edge_categories: usize,
}

impl GraphDims {
    /// Number of strictly upper-triangular edge cells.
    pub fn edge_cells(&self) -> usize {
        self.nodes * (self.nodes - 1) / 2
    }
}

/// Index of cell `(i, j)`, `i < j`, in row-major strict-upper-triangle order.
pub fn upper_cell_index(n: usize, i: usize, j: usize) -> usize {
    debug_assert!(i < j && j < n);
    i * (2 * n - i - 1) / 2 + (j - i - 1)
}

/// `(i, j)` pairs in row-major strict-upper-triangle order.
pub fn upper_cells(n: usize) -> impl Iterator<Item = (usize, usize)> {
    (0..n).flat_map(move |i| ((i + 1)..n).map(move |j| (i, j)))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpaceSpec {
    pub name: String,
    pub kind: SpaceKind,
    pub max_nodes: usize,
    pub node_categories: usize,
    /// Includes the no-edge category.
    pub edge_categories: usize,
}

impl SpaceSpec {
    pub fn nb101() -> Self {
        Self {
            name: "nb101".into(),
            kind: SpaceKind::Nb101,
            max_nodes: nb101::MAX_NODES,
            node_categories: nb101::ABSENT + 1,
            edge_categories: 2,
        }
    }

    pub fn nb201() -> Self {
        Self {
            name: "nb201".into(),
            kind: SpaceKind::Nb201,
            max_nodes: nb201::NODES,
            node_categories: 1,
            edge_categories: nb201::OPS,
        }
    }

    /// Fixed-size space of `nodes`-node DAGs; any acyclic labeling is valid.
    pub fn synthetic(nodes: usize, node_categories: usize, edge_categories: usize) -> Self {
        assert!(nodes >= 1 && node_categories >= 1 && edge_categories >= 2);
        Self {
            name: "synthetic".into(),
            kind: SpaceKind::Synthetic,
            max_nodes: nodes,
            node_categories,
            edge_categories,
        }
    }

    pub fn dims(&self) -> GraphDims {
        GraphDims {
            nodes: self.max_nodes,
            node_categories: self.node_categories,
            edge_categories: self.edge_categories,
        }
    }

    pub fn absent_category(&self) -> Option<usize> {
        (self.kind == SpaceKind::Nb101).then_some(nb101::ABSENT)
    }

    /// Drops absent padding nodes. Returns `None` when nothing is left.
    pub fn strip_padding(&self, g: &Dag) -> Option<Dag> {
        let Some(absent) = self.absent_category() else {
            return Some(g.clone());
        };
        let keep: Vec<usize> = (0..g.n())
            .filter(|&i| g.node_labels()[i] != absent)
            .collect();
        if keep.is_empty() {
            return None;
        }
        if keep.len() == g.n() {
            return Some(g.clone());
        }
        let labels = keep.iter().map(|&i| g.node_labels()[i]).collect();
        let mut out = Dag::empty(labels);
        for (a, &i) in keep.iter().enumerate() {
            for (b, &j) in keep.iter().enumerate() {
                if a != b {
                    out.set_edge(a, b, g.edge(i, j));
                }
            }
        }
        Some(out)
    }

    /// Brings an architecture into the fixed diffusion shape: canonical
    /// topological order, then absent-node padding up to `max_nodes`.
    pub fn to_tensor_form(&self, g: &Dag) -> Result<OrderedDag> {
        let stripped = self
            .strip_padding(g)
            .ok_or_else(|| Error::MalformedGraph("graph consists only of padding".into()))?;
        let ordered = topological_order(&stripped)?;
        let n = ordered.n();
        if n > self.max_nodes {
            return Err(Error::DimensionMismatch(format!(
                "{n} nodes exceed the {} allowed by `{}`",
                self.max_nodes, self.name
            )));
        }
        if n == self.max_nodes {
            return Ok(ordered);
        }
        let absent = self.absent_category().ok_or_else(|| {
            Error::DimensionMismatch(format!(
                "space `{}` needs exactly {} nodes, got {n}",
                self.name, self.max_nodes
            ))
        })?;
        let mut labels = ordered.node_labels().to_vec();
        labels.resize(self.max_nodes, absent);
        let mut padded = Dag::empty(labels);
        for (i, j) in upper_cells(n) {
            padded.set_edge(i, j, ordered.edge(i, j));
        }
        OrderedDag::from_upper_triangular(padded)
    }

    /// DAG recovery for generated tensors: upper-triangular projection, then
    /// removal of any edge touching an absent node.
    pub fn project(&self, raw_edges: &[usize], node_labels: &[usize]) -> Result<OrderedDag> {
        let recovered = recover_dag(raw_edges, node_labels)?;
        let Some(absent) = self.absent_category() else {
            return Ok(recovered);
        };
        if !node_labels.contains(&absent) {
            return Ok(recovered);
        }
        let mut g = recovered.into_dag();
        let n = g.n();
        for (i, j) in upper_cells(n) {
            if node_labels[i] == absent || node_labels[j] == absent {
                g.set_edge(i, j, NO_EDGE);
            }
        }
        OrderedDag::from_upper_triangular(g)
    }
}

/// One violated structural rule.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    LabelRange,
    Cycle,
    NodeCount,
    AbsentNodeHasEdges,
    InputNodes,
    OutputNodes,
    MaxEdges,
    DanglingNode,
    Skeleton,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Violation::LabelRange => "label out of range",
            Violation::Cycle => "contains a directed cycle",
            Violation::NodeCount => "wrong node count",
            Violation::AbsentNodeHasEdges => "absent node has incident edges",
            Violation::InputNodes => "exactly one input node with in-degree 0",
            Violation::OutputNodes => "exactly one output node with out-degree 0",
            Violation::MaxEdges => "max 9 edges",
            Violation::DanglingNode => "every node on an input->output path",
            Violation::Skeleton => "edges outside the fixed 4-node skeleton",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ValidityReport {
    pub violations: Vec<Violation>,
}

impl ValidityReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }

    fn messages(&self) -> Vec<String> {
        self.violations.iter().map(ToString::to_string).collect()
    }
}

pub fn validate(g: &Dag, spec: &SpaceSpec) -> ValidityReport {
    let mut violations = Vec::new();
    if g.check_ranges(spec.node_categories, spec.edge_categories).is_err() {
        violations.push(Violation::LabelRange);
    }
    match spec.kind {
        SpaceKind::Synthetic => {
            if g.n() != spec.max_nodes {
                violations.push(Violation::NodeCount);
            }
            if topological_order(g).is_err() {
                violations.push(Violation::Cycle);
            }
        }
        SpaceKind::Nb201 => {
            if g.n() != nb201::NODES {
                violations.push(Violation::NodeCount);
            } else if !g.is_strictly_upper_triangular() {
                violations.push(Violation::Skeleton);
            }
        }
        SpaceKind::Nb101 => validate_nb101(g, &mut violations),
    }
    ValidityReport { violations }
}

fn validate_nb101(g: &Dag, violations: &mut Vec<Violation>) {
    let absent = nb101::ABSENT;
    let labels = g.node_labels();
    let n = g.n();
    let touches_absent = (0..n).any(|i| {
        labels[i] == absent && (0..n).any(|j| g.edge(i, j) != NO_EDGE || g.edge(j, i) != NO_EDGE)
    });
    if touches_absent {
        violations.push(Violation::AbsentNodeHasEdges);
    }
    if n > nb101::MAX_NODES {
        violations.push(Violation::NodeCount);
    }
    let spec = SpaceSpec::nb101();
    let Some(cell) = spec.strip_padding(g) else {
        violations.push(Violation::InputNodes);
        violations.push(Violation::OutputNodes);
        return;
    };
    let n = cell.n();
    let labels = cell.node_labels();
    if topological_order(&cell).is_err() {
        violations.push(Violation::Cycle);
        return;
    }
    let in_deg = |j: usize| (0..n).filter(|&i| cell.edge(i, j) != NO_EDGE).count();
    let out_deg = |i: usize| (0..n).filter(|&j| cell.edge(i, j) != NO_EDGE).count();

    let inputs: Vec<usize> = (0..n).filter(|&i| labels[i] == nb101::INPUT).collect();
    let outputs: Vec<usize> = (0..n).filter(|&i| labels[i] == nb101::OUTPUT).collect();
    if inputs.len() != 1 || in_deg(inputs[0]) != 0 {
        violations.push(Violation::InputNodes);
    }
    if outputs.len() != 1 || out_deg(outputs[0]) != 0 {
        violations.push(Violation::OutputNodes);
    }
    if cell.edge_count() > nb101::MAX_EDGES {
        violations.push(Violation::MaxEdges);
    }
    if inputs.len() == 1 && outputs.len() == 1 {
        let from_input = reachable(&cell, inputs[0], false);
        let to_output = reachable(&cell, outputs[0], true);
        if (0..n).any(|i| !(from_input[i] && to_output[i])) {
            violations.push(Violation::DanglingNode);
        }
    }
}

fn reachable(g: &Dag, start: usize, reverse: bool) -> Vec<bool> {
    let n = g.n();
    let mut seen = vec![false; n];
    let mut stack = vec![start];
    seen[start] = true;
    while let Some(u) = stack.pop() {
        for (v, visited) in seen.iter_mut().enumerate() {
            let e = if reverse { g.edge(v, u) } else { g.edge(u, v) };
            if e != NO_EDGE && !*visited {
                *visited = true;
                stack.push(v);
            }
        }
    }
    seen
}

/// Canonical architecture identifier: `<space>:<labels>/<upper cells>`, where
/// both lists are comma-separated and the upper cells of the canonically
/// ordered (and, for NB101, unpadded) graph are listed row-major.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ArchKey(String);

impl ArchKey {
    pub fn as_str(&self) -> &str {
        &self.0
    }

    /// Parses a key back into an architecture, checking it against `spec`.
    pub fn decode(&self, spec: &SpaceSpec) -> Result<Dag> {
        let bad = |msg: &str| Error::MalformedGraph(format!("key `{}`: {msg}", self.0));
        let (space, body) = self.0.split_once(':').ok_or_else(|| bad("missing space prefix"))?;
        if space != spec.name {
            return Err(bad(&format!("belongs to `{space}`, not `{}`", spec.name)));
        }
        let (labels, cells) = body.split_once('/').ok_or_else(|| bad("missing `/`"))?;
        let parse = |s: &str| -> Result<Vec<usize>> {
            if s.is_empty() {
                return Ok(Vec::new());
            }
            s.split(',')
                .map(|t| t.parse::<usize>().map_err(|_| bad(&format!("bad integer `{t}`"))))
                .collect()
        };
        let labels = parse(labels)?;
        let cells = parse(cells)?;
        let n = labels.len();
        if n == 0 || cells.len() != n * (n - 1) / 2 {
            return Err(bad("cell count does not match node count"));
        }
        let mut g = Dag::empty(labels);
        for ((i, j), c) in upper_cells(n).zip(cells) {
            g.set_edge(i, j, c);
        }
        let report = validate(&g, spec);
        if !report.is_valid() {
            return Err(Error::InvalidArchitecture {
                space: spec.name.clone(),
                violations: report.messages(),
            });
        }
        Ok(g)
    }
}

impl fmt::Display for ArchKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<String> for ArchKey {
    fn from(s: String) -> Self {
        ArchKey(s)
    }
}

pub fn arch_key(g: &Dag, spec: &SpaceSpec) -> Result<ArchKey> {
    let report = validate(g, spec);
    if !report.is_valid() {
        return Err(Error::InvalidArchitecture {
            space: spec.name.clone(),
            violations: report.messages(),
        });
    }
    // Validation guarantees at least one real node and acyclicity.
    let stripped = spec.strip_padding(g).expect("validated cell has nodes");
    let ordered = topological_order(&stripped)?;
    let join = |v: &mut dyn Iterator<Item = usize>| {
        v.map(|x| x.to_string()).collect::<Vec<_>>().join(",")
    };
    let labels = join(&mut ordered.node_labels().iter().copied());
    let cells = join(&mut upper_cells(ordered.n()).map(|(i, j)| ordered.edge(i, j)));
    Ok(ArchKey(format!("{}:{labels}/{cells}", spec.name)))
}

/// Number of raw fixed-shape encodings of a space.
pub fn encoding_count(spec: &SpaceSpec) -> f64 {
    let dims = spec.dims();
    (dims.node_categories as f64).powi(dims.nodes as i32)
        * (dims.edge_categories as f64).powi(dims.edge_cells() as i32)
}

/// Walks every architecture of an NB201 or synthetic space exactly once.
pub fn enumerate_space(spec: &SpaceSpec, cap: u64) -> Result<SpaceIter> {
    let estimate = match spec.kind {
        SpaceKind::Nb201 => (nb201::OPS as f64).powi(6),
        SpaceKind::Synthetic => encoding_count(spec),
        // No isomorphism deduplication: the raw encoding count is the bound.
        SpaceKind::Nb101 => encoding_count(spec),
    };
    if estimate > cap as f64 || spec.kind == SpaceKind::Nb101 {
        return Err(Error::SpaceTooLarge {
            space: spec.name.clone(),
            estimate,
            cap,
        });
    }
    Ok(SpaceIter::new(spec.clone()))
}

/// Mixed-radix counter over node labels and upper-triangle edge cells.
#[derive(Debug, Clone)]
pub struct SpaceIter {
    spec: SpaceSpec,
    digits: Vec<usize>,
    done: bool,
}

impl SpaceIter {
    fn new(spec: SpaceSpec) -> Self {
        let dims = spec.dims();
        Self {
            digits: vec![0; dims.nodes + dims.edge_cells()],
            spec,
            done: false,
        }
    }

    fn radix(&self, pos: usize) -> usize {
        if pos < self.spec.max_nodes {
            self.spec.node_categories
        } else {
            self.spec.edge_categories
        }
    }
}

impl Iterator for SpaceIter {
    type Item = Dag;

    fn next(&mut self) -> Option<Dag> {
        if self.done {
            return None;
        }
        let n = self.spec.max_nodes;
        let mut g = Dag::empty(self.digits[..n].to_vec());
        for ((i, j), &c) in upper_cells(n).zip(&self.digits[n..]) {
            g.set_edge(i, j, c);
        }
        // Advance, least significant digit last.
        let mut pos = self.digits.len();
        loop {
            if pos == 0 {
                self.done = true;
                break;
            }
            pos -= 1;
            self.digits[pos] += 1;
            if self.digits[pos] < self.radix(pos) {
                break;
            }
            self.digits[pos] = 0;
        }
        Some(g)
    }
}

/// Draws an architecture uniformly at random from the space (rejection
/// sampling over cell sizes and encodings for NB101).
pub fn sample_uniform<R: Rng + ?Sized>(spec: &SpaceSpec, rng: &mut R) -> Dag {
    match spec.kind {
        SpaceKind::Synthetic | SpaceKind::Nb201 => {
            let n = spec.max_nodes;
            let labels = (0..n).map(|_| rng.random_range(0..spec.node_categories)).collect();
            let mut g = Dag::empty(labels);
            for (i, j) in upper_cells(n) {
                g.set_edge(i, j, rng.random_range(0..spec.edge_categories));
            }
            g
        }
        SpaceKind::Nb101 => loop {
            let n = rng.random_range(2..=nb101::MAX_NODES);
            let mut labels = vec![nb101::INPUT; n];
            labels[n - 1] = nb101::OUTPUT;
            for l in labels.iter_mut().take(n - 1).skip(1) {
                *l = rng.random_range(nb101::CONV1X1..=nb101::MAXPOOL3X3);
            }
            let mut g = Dag::empty(labels);
            for (i, j) in upper_cells(n) {
                if rng.random_bool(0.5) {
                    g.set_edge(i, j, 1);
                }
            }
            if validate(&g, spec).is_valid() {
                break g;
            }
        },
    }
}

#[cfg(test)]
mod tests {
    use std::collections::HashSet;

    use super::*;

    fn nb101_cell(labels: &[usize], edges: &[(usize, usize)]) -> Dag {
        let mut g = Dag::empty(labels.to_vec());
        for &(i, j) in edges {
            g.set_edge(i, j, 1);
        }
        g
    }

    #[test]
    fn upper_cell_indexing_is_row_major() {
        let cells: Vec<_> = upper_cells(4).collect();
        for (k, &(i, j)) in cells.iter().enumerate() {
            assert_eq!(upper_cell_index(4, i, j), k);
        }
        assert_eq!(cells.len(), 6);
    }

    #[test]
    fn nb201_shape() {
        let s = SpaceSpec::nb201();
        assert_eq!(s.dims().edge_cells(), 6);
        assert_eq!(s.edge_categories, 5);
        assert_eq!(encoding_count(&s), 15_625.0);
    }

    #[test]
    fn nb101_shape() {
        let s = SpaceSpec::nb101();
        assert_eq!(s.max_nodes, 7);
        assert_eq!(s.dims().edge_cells(), 21);
    }

    #[test]
    fn minimal_nb101_cell_is_valid() {
        let g = nb101_cell(&[nb101::INPUT, nb101::OUTPUT], &[(0, 1)]);
        assert!(validate(&g, &SpaceSpec::nb101()).is_valid());
    }

    #[test]
    fn nb101_rejects_ten_edges() {
        // input -> {1..5} and a chain through the interior gives 10 edges.
        let labels = [0, 2, 3, 4, 2, 3, 1];
        let mut edges = vec![(0, 1), (0, 2), (0, 3), (0, 4), (0, 5)];
        edges.extend([(1, 6), (2, 6), (3, 6), (4, 6), (5, 6)]);
        let g = nb101_cell(&labels, &edges);
        assert_eq!(g.edge_count(), 10);
        let report = validate(&g, &SpaceSpec::nb101());
        assert_eq!(report.violations, vec![Violation::MaxEdges]);
        assert_eq!(report.violations[0].to_string(), "max 9 edges");
    }

    #[test]
    fn nb101_structural_rules() {
        let spec = SpaceSpec::nb101();
        // Interior node not connected to the output.
        let g = nb101_cell(&[0, 2, 1], &[(0, 1), (0, 2)]);
        assert_eq!(validate(&g, &spec).violations, vec![Violation::DanglingNode]);
        // Two inputs.
        let g = nb101_cell(&[0, 0, 1], &[(0, 2), (1, 2)]);
        assert!(validate(&g, &spec).violations.contains(&Violation::InputNodes));
        // Absent node with an edge.
        let g = nb101_cell(&[0, nb101::ABSENT, 1], &[(0, 1), (0, 2)]);
        assert!(validate(&g, &spec).violations.contains(&Violation::AbsentNodeHasEdges));
        // Padded cell is fine.
        let g = nb101_cell(&[0, nb101::ABSENT, 1, nb101::ABSENT], &[(0, 2)]);
        assert!(validate(&g, &spec).is_valid());
    }

    #[test]
    fn padding_round_trip_keeps_key() {
        let spec = SpaceSpec::nb101();
        let g = nb101_cell(&[0, 3, 1], &[(0, 1), (1, 2), (0, 2)]);
        let padded = spec.to_tensor_form(&g).unwrap();
        assert_eq!(padded.n(), 7);
        assert_eq!(&padded.node_labels()[3..], &[nb101::ABSENT; 4]);
        assert_eq!(
            arch_key(&g, &spec).unwrap(),
            arch_key(padded.dag(), &spec).unwrap()
        );
    }

    #[test]
    fn project_clears_absent_edges() {
        let spec = SpaceSpec::nb101();
        let mut labels = vec![nb101::ABSENT; 7];
        labels[0] = nb101::INPUT;
        labels[1] = nb101::OUTPUT;
        let raw = vec![1; 49];
        let g = spec.project(&raw, &labels).unwrap();
        assert_eq!(g.dag().edge_count(), 1);
        assert_eq!(g.edge(0, 1), 1);
    }

    #[test]
    fn keys_are_deterministic_and_canonical() {
        let spec = SpaceSpec::synthetic(3, 2, 2);
        let mut g = Dag::empty(vec![1, 0, 1]);
        g.set_edge(2, 0, 1);
        g.set_edge(0, 1, 1);
        let k1 = arch_key(&g, &spec).unwrap();
        assert_eq!(k1, arch_key(&g.clone(), &spec).unwrap());
        let canonical = topological_order(&g).unwrap();
        assert_eq!(k1, arch_key(canonical.dag(), &spec).unwrap());
        assert_eq!(k1.as_str(), "synthetic:1,1,0/1,0,1");
        let decoded = k1.decode(&spec).unwrap();
        assert_eq!(&decoded, canonical.dag());
    }

    #[test]
    fn key_decoding_errors() {
        let spec = SpaceSpec::nb201();
        assert!(ArchKey::from("nb101:0/".to_string()).decode(&spec).is_err());
        assert!(ArchKey::from("nb201:0,0,0,0/1,2".to_string()).decode(&spec).is_err());
        assert!(ArchKey::from("nb201:0,0,0,0/1,2,3,4,5,0".to_string()).decode(&spec).is_err());
        assert!(ArchKey::from("nb201:0,0,0,0/1,2,3,4,0,0".to_string()).decode(&spec).is_ok());
    }

    #[test]
    fn nb201_enumeration_is_complete_and_unique() {
        let spec = SpaceSpec::nb201();
        let mut keys = HashSet::new();
        let mut count = 0;
        for g in enumerate_space(&spec, DEFAULT_ENUMERATION_CAP).unwrap() {
            assert!(validate(&g, &spec).is_valid());
            keys.insert(arch_key(&g, &spec).unwrap());
            count += 1;
        }
        assert_eq!(count, 15_625);
        assert_eq!(keys.len(), 15_625);
    }

    /// All `n x n` matrices with an empty diagonal, filtered to acyclic ones
    /// and deduplicated by canonical key.
    fn brute_force_synthetic_keys(spec: &SpaceSpec) -> HashSet<ArchKey> {
        let n = spec.max_nodes;
        let off_diag: Vec<(usize, usize)> = (0..n)
            .flat_map(|i| (0..n).map(move |j| (i, j)))
            .filter(|(i, j)| i != j)
            .collect();
        let mut keys = HashSet::new();
        let label_count = spec.node_categories.pow(n as u32);
        let edge_count = spec.edge_categories.pow(off_diag.len() as u32);
        for lc in 0..label_count {
            let labels: Vec<usize> = (0..n)
                .map(|k| lc / spec.node_categories.pow(k as u32) % spec.node_categories)
                .collect();
            for ec in 0..edge_count {
                let mut g = Dag::empty(labels.clone());
                for (k, &(i, j)) in off_diag.iter().enumerate() {
                    g.set_edge(i, j, ec / spec.edge_categories.pow(k as u32) % spec.edge_categories);
                }
                if crate::dag::is_acyclic(&g) {
                    keys.insert(arch_key(&g, spec).unwrap());
                }
            }
        }
        keys
    }

    #[test]
    fn synthetic_enumeration_matches_brute_force() {
        let spec = SpaceSpec::synthetic(3, 2, 2);
        let oracle = brute_force_synthetic_keys(&spec);
        let enumerated: Vec<ArchKey> = enumerate_space(&spec, DEFAULT_ENUMERATION_CAP)
            .unwrap()
            .map(|g| arch_key(&g, &spec).unwrap())
            .collect();
        let unique: HashSet<_> = enumerated.iter().cloned().collect();
        assert_eq!(unique.len(), enumerated.len());
        assert_eq!(unique, oracle);
    }

    #[test]
    fn oversized_spaces_are_refused() {
        assert!(matches!(
            enumerate_space(&SpaceSpec::nb101(), DEFAULT_ENUMERATION_CAP),
            Err(Error::SpaceTooLarge { .. })
        ));
        assert!(matches!(
            enumerate_space(&SpaceSpec::synthetic(8, 3, 3), DEFAULT_ENUMERATION_CAP),
            Err(Error::SpaceTooLarge { .. })
        ));
    }

    #[test]
    fn uniform_samples_are_valid() {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for spec in [SpaceSpec::nb101(), SpaceSpec::nb201(), SpaceSpec::synthetic(5, 2, 3)] {
            for _ in 0..50 {
                let g = sample_uniform(&spec, &mut rng);
                assert!(validate(&g, &spec).is_valid(), "{spec:?}");
            }
        }
    }
}
