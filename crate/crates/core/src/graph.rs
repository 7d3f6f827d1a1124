//! Computational graphs: the DAG data model, validation, JSONL datasets,
//! train/test splitting and a seeded synthetic generator.

use std::collections::{BTreeSet, BinaryHeap, HashSet};
use std::cmp::Reverse;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Number of operator primitives. Node codes live in `1..=NUM_PRIMITIVES`.
pub const NUM_PRIMITIVES: u32 = 15;

/// Names of the four performance targets, in storage order.
pub const TARGET_NAMES: [&str; 4] = ["clean_acc", "noisy_acc", "inference_speed", "convergence_speed"];

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GraphError {
    #[error("graph has no nodes")]
    Empty,
    #[error("node_ops has {found} entries but num_nodes is {expected}")]
    OpsLengthMismatch { expected: usize, found: usize },
    #[error("node {index} has primitive code {code}, expected 1..=15")]
    InvalidNodeCode { index: usize, code: u32 },
    #[error("edge ({u}, {v}) is a self-loop or references a missing node")]
    InvalidEdge { u: usize, v: usize },
    #[error("edge ({u}, {v}) appears more than once")]
    DuplicateEdge { u: usize, v: usize },
    #[error("graph contains a cycle")]
    CycleDetected,
}

/// An unchecked graph as read from disk or built by hand.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawGraph {
    pub num_nodes: usize,
    pub node_ops: Vec<u32>,
    pub edges: Vec<(usize, usize)>,
}

impl RawGraph {
    pub fn new(num_nodes: usize, node_ops: Vec<u32>, edges: Vec<(usize, usize)>) -> Self {
        Self { num_nodes, node_ops, edges }
    }
}

/// A validated directed acyclic computational graph.
///
/// Nodes are operators identified by a primitive code, edges carry activation
/// flow. Construction goes through [`validate_graph`], so every value of this
/// type is acyclic, free of duplicate edges and self-loops, and carries a
/// cached topological order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ComputationalGraph {
    num_nodes: usize,
    node_ops: Vec<u32>,
    edges: Vec<(usize, usize)>,
    topo_order: Vec<usize>,
}

impl ComputationalGraph {
    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn node_ops(&self) -> &[u32] {
        &self.node_ops
    }

    /// Edges in the order they were supplied.
    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    /// Edges in lexicographic `(u, v)` order.
    pub fn sorted_edges(&self) -> Vec<(usize, usize)> {
        let mut edges = self.edges.clone();
        edges.sort_unstable();
        edges
    }

    /// Topological order, smallest ready index first.
    pub fn topo_order(&self) -> &[usize] {
        &self.topo_order
    }

    /// Length (in edges) of the longest directed path.
    pub fn longest_path_length(&self) -> usize {
        let mut successors = vec![Vec::new(); self.num_nodes];
        for &(u, v) in &self.edges {
            successors[u].push(v);
        }
        let mut depth = vec![0usize; self.num_nodes];
        for &u in &self.topo_order {
            for &v in &successors[u] {
                depth[v] = depth[v].max(depth[u] + 1);
            }
        }
        depth.into_iter().max().unwrap_or(0)
    }

    /// Maximum possible edge count of a DAG on `num_nodes` nodes.
    pub fn max_possible_edges(&self) -> usize {
        self.num_nodes * (self.num_nodes - 1) / 2
    }

    pub fn to_raw(&self) -> RawGraph {
        RawGraph::new(self.num_nodes, self.node_ops.clone(), self.edges.clone())
    }
}

/// Checks every structural invariant and returns the validated graph.
pub fn validate_graph(raw: RawGraph) -> Result<ComputationalGraph, GraphError> {
    let RawGraph { num_nodes, node_ops, edges } = raw;
    if num_nodes == 0 {
        return Err(GraphError::Empty);
    }
    if node_ops.len() != num_nodes {
        return Err(GraphError::OpsLengthMismatch { expected: num_nodes, found: node_ops.len() });
    }
    if let Some((index, &code)) =
        node_ops.iter().enumerate().find(|(_, &c)| c == 0 || c > NUM_PRIMITIVES)
    {
        return Err(GraphError::InvalidNodeCode { index, code });
    }

    let mut seen = HashSet::with_capacity(edges.len());
    let mut successors = vec![Vec::new(); num_nodes];
    let mut in_degree = vec![0usize; num_nodes];
    for &(u, v) in &edges {
        if u == v || u >= num_nodes || v >= num_nodes {
            return Err(GraphError::InvalidEdge { u, v });
        }
        if !seen.insert((u, v)) {
            return Err(GraphError::DuplicateEdge { u, v });
        }
        successors[u].push(v);
        in_degree[v] += 1;
    }

    // Kahn's algorithm with a min-heap keeps the order canonical.
    let mut ready: BinaryHeap<Reverse<usize>> =
        (0..num_nodes).filter(|&i| in_degree[i] == 0).map(Reverse).collect();
    let mut topo_order = Vec::with_capacity(num_nodes);
    while let Some(Reverse(u)) = ready.pop() {
        topo_order.push(u);
        for &v in &successors[u] {
            in_degree[v] -= 1;
            if in_degree[v] == 0 {
                ready.push(Reverse(v));
            }
        }
    }
    if topo_order.len() != num_nodes {
        return Err(GraphError::CycleDetected);
    }

    Ok(ComputationalGraph { num_nodes, node_ops, edges, topo_order })
}

/// Measured performance of one architecture. Higher is better for all four.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerformanceRecord {
    pub clean_acc: f64,
    pub noisy_acc: f64,
    pub inference_speed: f64,
    pub convergence_speed: f64,
}

impl PerformanceRecord {
    pub fn from_array(values: [f64; 4]) -> Self {
        Self {
            clean_acc: values[0],
            noisy_acc: values[1],
            inference_speed: values[2],
            convergence_speed: values[3],
        }
    }

    pub fn to_array(&self) -> [f64; 4] {
        [self.clean_acc, self.noisy_acc, self.inference_speed, self.convergence_speed]
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|v| v.is_finite())
    }
}

/// A graph with an identifier and, optionally, its performance labels.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledGraph {
    pub id: String,
    pub graph: ComputationalGraph,
    pub targets: Option<PerformanceRecord>,
}

impl LabeledGraph {
    /// The same record with its labels removed.
    pub fn unlabeled(&self) -> Self {
        Self { targets: None, ..self.clone() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSplit {
    pub train: Vec<LabeledGraph>,
    pub test: Vec<LabeledGraph>,
}

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("cannot access {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("record {id}: {cause}")]
    Validation { id: String, cause: GraphError },
    #[error("record {id}: targets must be finite")]
    NonFiniteTarget { id: String },
    #[error("duplicate record id {id}")]
    DuplicateId { id: String },
    #[error("requested {requested} training records but only {available} are available")]
    NotEnoughRecords { requested: usize, available: usize },
}

impl DatasetError {
    fn io(path: &Path, source: std::io::Error) -> Self {
        Self::Io { path: path.to_path_buf(), source }
    }
}

/// On-disk shape of one JSONL line.
#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RecordLine {
    id: String,
    num_nodes: usize,
    node_ops: Vec<u32>,
    edges: Vec<(usize, usize)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    targets: Option<PerformanceRecord>,
}

/// Serializes one record as a single JSON line (no trailing newline).
pub fn record_to_json_line(record: &LabeledGraph) -> String {
    let line = RecordLine {
        id: record.id.clone(),
        num_nodes: record.graph.num_nodes(),
        node_ops: record.graph.node_ops().to_vec(),
        edges: record.graph.edges().to_vec(),
        targets: record.targets,
    };
    serde_json::to_string(&line).expect("record serialization cannot fail")
}

/// Parses and validates one JSONL line. `line_no` is 1-based and only used
/// for error messages.
pub fn record_from_json_line(text: &str, line_no: usize) -> Result<LabeledGraph, DatasetError> {
    let line: RecordLine = serde_json::from_str(text)
        .map_err(|e| DatasetError::Parse { line: line_no, message: e.to_string() })?;
    let graph = validate_graph(RawGraph::new(line.num_nodes, line.node_ops, line.edges))
        .map_err(|cause| DatasetError::Validation { id: line.id.clone(), cause })?;
    if let Some(t) = &line.targets {
        if !t.is_finite() {
            return Err(DatasetError::NonFiniteTarget { id: line.id });
        }
    }
    Ok(LabeledGraph { id: line.id, graph, targets: line.targets })
}

/// Reads a JSONL dataset. Blank lines are skipped; ids must be unique.
pub fn read_dataset(path: impl AsRef<Path>) -> Result<Vec<LabeledGraph>, DatasetError> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(|e| DatasetError::io(path, e))?;
    let mut records = Vec::new();
    let mut ids = HashSet::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| DatasetError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let record = record_from_json_line(&line, idx + 1)?;
        if !ids.insert(record.id.clone()) {
            return Err(DatasetError::DuplicateId { id: record.id });
        }
        records.push(record);
    }
    Ok(records)
}

/// Writes records as UTF-8 JSONL with `\n` line endings.
pub fn write_dataset(records: &[LabeledGraph], path: impl AsRef<Path>) -> Result<(), DatasetError> {
    let path = path.as_ref();
    let mut ids = HashSet::new();
    for r in records {
        if !ids.insert(r.id.as_str()) {
            return Err(DatasetError::DuplicateId { id: r.id.clone() });
        }
        if r.targets.is_some_and(|t| !t.is_finite()) {
            return Err(DatasetError::NonFiniteTarget { id: r.id.clone() });
        }
    }
    let file = fs::File::create(path).map_err(|e| DatasetError::io(path, e))?;
    let mut out = BufWriter::new(file);
    for r in records {
        writeln!(out, "{}", record_to_json_line(r)).map_err(|e| DatasetError::io(path, e))?;
    }
    out.flush().map_err(|e| DatasetError::io(path, e))
}

/// Deterministically shuffles `records` under `seed` and cuts the first
/// `n_train` into the training split.
pub fn split_dataset(
    records: &[LabeledGraph],
    n_train: usize,
    seed: u64,
) -> Result<DatasetSplit, DatasetError> {
    if n_train > records.len() {
        return Err(DatasetError::NotEnoughRecords { requested: n_train, available: records.len() });
    }
    let mut ids = HashSet::new();
    for r in records {
        if !ids.insert(r.id.as_str()) {
            return Err(DatasetError::DuplicateId { id: r.id.clone() });
        }
    }
    let mut order: Vec<usize> = (0..records.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let (train, test) = order.split_at(n_train);
    Ok(DatasetSplit {
        train: train.iter().map(|&i| records[i].clone()).collect(),
        test: test.iter().map(|&i| records[i].clone()).collect(),
    })
}

/// Parameters of the synthetic corpus generator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub count: usize,
    pub max_nodes: usize,
    /// Upper bound of the per-graph edge probability.
    pub edge_density: f64,
    pub noise_sigma: f64,
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("invalid synthetic spec: {0}")]
pub struct InvalidSpec(pub String);

impl SyntheticSpec {
    pub fn validate(&self) -> Result<(), InvalidSpec> {
        if self.count == 0 {
            return Err(InvalidSpec("count must be at least 1".into()));
        }
        if self.max_nodes < 2 {
            return Err(InvalidSpec(format!("max_nodes must be >= 2, got {}", self.max_nodes)));
        }
        if !(self.edge_density > 0.0 && self.edge_density <= 1.0) {
            return Err(InvalidSpec(format!("edge_density must be in (0, 1], got {}", self.edge_density)));
        }
        if !(self.noise_sigma.is_finite() && self.noise_sigma >= 0.0) {
            return Err(InvalidSpec(format!("noise_sigma must be finite and >= 0, got {}", self.noise_sigma)));
        }
        Ok(())
    }
}

/// Noise draws added to the synthetic target formulas.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct TargetNoise {
    pub clean: f64,
    pub noisy: f64,
    pub inference: f64,
}

/// The synthetic labelling oracle.
///
/// `clean_acc` mixes normalised longest-path length with the share of cheap
/// primitives (codes 1..=5), `inference_speed` falls with edge count, and
/// `convergence_speed` mirrors `clean_acc`. Both connectivity terms are
/// invisible to an encoder that only reads node codes.
pub fn synthetic_targets(graph: &ComputationalGraph, noise: TargetNoise) -> PerformanceRecord {
    let n = graph.num_nodes();
    let nf = n as f64;
    let path_term = if n > 1 { graph.longest_path_length() as f64 / (nf - 1.0) } else { 0.0 };
    let low_ops = graph.node_ops().iter().filter(|&&c| c <= 5).count() as f64 / nf;
    let op_one = graph.node_ops().iter().filter(|&&c| c == 1).count() as f64 / nf;
    let clean = 0.5 * path_term + 0.5 * low_ops + noise.clean;
    let noisy = clean - 0.1 * op_one + noise.noisy;
    let max_edges = graph.max_possible_edges();
    let edge_term = if max_edges > 0 { graph.num_edges() as f64 / max_edges as f64 } else { 0.0 };
    let inference = 1.0 - edge_term + noise.inference;
    PerformanceRecord {
        clean_acc: clean,
        noisy_acc: noisy,
        inference_speed: inference,
        convergence_speed: clean,
    }
}

/// Generates `spec.count` labelled random DAGs.
///
/// Record `i` draws from its own ChaCha stream, so the output is identical
/// whether records are produced serially or in parallel. Each graph picks
/// `N` uniformly in `2..=max_nodes`, an edge probability uniformly in
/// `(0, edge_density]`, and connects pairs that are ordered in a random
/// permutation of its nodes, so edges are not biased towards low indices.
pub fn generate_synthetic(spec: &SyntheticSpec, seed: u64) -> Result<Vec<LabeledGraph>, InvalidSpec> {
    spec.validate()?;
    let width = spec.count.saturating_sub(1).to_string().len().max(4);
    Ok((0..spec.count)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            let graph = random_dag(&mut rng, spec.max_nodes, spec.edge_density);
            let normal = Normal::new(0.0, spec.noise_sigma).expect("validated sigma");
            let noise = TargetNoise {
                clean: normal.sample(&mut rng),
                noisy: normal.sample(&mut rng),
                inference: normal.sample(&mut rng),
            };
            let targets = synthetic_targets(&graph, noise);
            LabeledGraph { id: format!("g{i:0width$}"), graph, targets: Some(targets) }
        })
        .collect())
}

fn random_dag(rng: &mut ChaCha8Rng, max_nodes: usize, max_density: f64) -> ComputationalGraph {
    let n = rng.random_range(2..=max_nodes);
    let p = max_density * (1.0 - rng.random::<f64>());
    let node_ops: Vec<u32> = (0..n).map(|_| rng.random_range(1..=NUM_PRIMITIVES)).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let mut edges = BTreeSet::new();
    for a in 0..n {
        for b in (a + 1)..n {
            if rng.random::<f64>() < p {
                edges.insert((order[a], order[b]));
            }
        }
    }
    validate_graph(RawGraph::new(n, node_ops, edges.into_iter().collect()))
        .expect("edges follow a permutation order, so the graph is acyclic")
}

/// Source of graphs stored in a foreign format (e.g. an external NAS
/// benchmark). Implementations convert into the portable JSONL model.
pub trait GraphSource {
    fn load(&self) -> Result<Vec<LabeledGraph>, DatasetError>;
}

/// Code-to-name table for the operator primitives, loaded from a TOML file
/// of the form `names = ["conv", "bn", ...]` (15 entries).
#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PrimitiveTable {
    names: Vec<String>,
}

impl PrimitiveTable {
    pub fn from_toml_str(text: &str) -> Result<Self, String> {
        let table: Self = toml::from_str(text).map_err(|e| e.to_string())?;
        if table.names.len() != NUM_PRIMITIVES as usize {
            return Err(format!("expected {NUM_PRIMITIVES} primitive names, got {}", table.names.len()));
        }
        Ok(table)
    }

    pub fn name(&self, code: u32) -> Option<&str> {
        code.checked_sub(1).and_then(|i| self.names.get(i as usize)).map(String::as_str)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn chain(ops: Vec<u32>) -> ComputationalGraph {
        let n = ops.len();
        validate_graph(RawGraph::new(n, ops, (1..n).map(|i| (i - 1, i)).collect())).unwrap()
    }

    #[test]
    fn chain_is_valid_with_linear_order() {
        let g = chain(vec![1, 2, 3]);
        assert_eq!(g.topo_order(), &[0, 1, 2]);
        assert_eq!(g.longest_path_length(), 2);
    }

    #[test]
    fn two_cycle_is_rejected() {
        let err = validate_graph(RawGraph::new(2, vec![1, 1], vec![(0, 1), (1, 0)])).unwrap_err();
        assert_eq!(err, GraphError::CycleDetected);
    }

    #[test]
    fn out_of_range_code_is_rejected() {
        let err = validate_graph(RawGraph::new(2, vec![1, 16], vec![])).unwrap_err();
        assert_eq!(err, GraphError::InvalidNodeCode { index: 1, code: 16 });
        let err = validate_graph(RawGraph::new(1, vec![0], vec![])).unwrap_err();
        assert_eq!(err, GraphError::InvalidNodeCode { index: 0, code: 0 });
    }

    #[test]
    fn bad_edges_are_rejected() {
        let self_loop = validate_graph(RawGraph::new(2, vec![1, 1], vec![(1, 1)]));
        assert_eq!(self_loop.unwrap_err(), GraphError::InvalidEdge { u: 1, v: 1 });
        let dangling = validate_graph(RawGraph::new(2, vec![1, 1], vec![(0, 2)]));
        assert_eq!(dangling.unwrap_err(), GraphError::InvalidEdge { u: 0, v: 2 });
        let dup = validate_graph(RawGraph::new(2, vec![1, 1], vec![(0, 1), (0, 1)]));
        assert_eq!(dup.unwrap_err(), GraphError::DuplicateEdge { u: 0, v: 1 });
        assert_eq!(validate_graph(RawGraph::new(0, vec![], vec![])).unwrap_err(), GraphError::Empty);
    }

    #[test]
    fn oracle_on_all_cheap_chain() {
        let g = chain(vec![3, 3, 3, 3]);
        let t = synthetic_targets(&g, TargetNoise::default());
        assert_eq!(t.clean_acc, 1.0);
        assert_eq!(t.convergence_speed, 1.0);
        assert_eq!(t.noisy_acc, 1.0);
        assert_eq!(t.inference_speed, 1.0 - 3.0 / 6.0);
    }

    #[test]
    fn oracle_on_edgeless_graph() {
        let g = validate_graph(RawGraph::new(3, vec![1, 9, 9], vec![])).unwrap();
        assert_eq!(g.longest_path_length(), 0);
        let t = synthetic_targets(&g, TargetNoise::default());
        assert_eq!(t.inference_speed, 1.0);
        assert_eq!(t.clean_acc, 0.5 / 3.0);
        assert_eq!(t.noisy_acc, 0.5 / 3.0 - 0.1 / 3.0);
    }

    #[test]
    fn invalid_specs() {
        let ok = SyntheticSpec { count: 3, max_nodes: 4, edge_density: 0.5, noise_sigma: 0.0 };
        assert!(ok.validate().is_ok());
        for bad in [
            SyntheticSpec { edge_density: 0.0, ..ok },
            SyntheticSpec { edge_density: 1.5, ..ok },
            SyntheticSpec { max_nodes: 1, ..ok },
            SyntheticSpec { count: 0, ..ok },
            SyntheticSpec { noise_sigma: -1.0, ..ok },
        ] {
            assert!(generate_synthetic(&bad, 0).is_err(), "{bad:?}");
        }
    }

    #[test]
    fn split_sizes_and_errors() {
        let spec = SyntheticSpec { count: 10, max_nodes: 5, edge_density: 0.5, noise_sigma: 0.0 };
        let records = generate_synthetic(&spec, 1).unwrap();
        let split = split_dataset(&records, 4, 9).unwrap();
        assert_eq!((split.train.len(), split.test.len()), (4, 6));
        assert!(matches!(
            split_dataset(&records, 11, 9),
            Err(DatasetError::NotEnoughRecords { requested: 11, available: 10 })
        ));
    }

    #[test]
    fn primitive_table_lookup() {
        let names: Vec<String> = (1..=15).map(|i| format!("\"op{i}\"")).collect();
        let table = PrimitiveTable::from_toml_str(&format!("names = [{}]", names.join(","))).unwrap();
        assert_eq!(table.name(1), Some("op1"));
        assert_eq!(table.name(15), Some("op15"));
        assert_eq!(table.name(0), None);
        assert!(PrimitiveTable::from_toml_str("names = [\"a\"]").is_err());
    }
}
