//! Graphs, parameter vectors and the group norms of the pairwise
//! exponential-series family.
//!
//! Nodes are numbered `0..d`. Edges are stored as `(i, j)` with `i < j`,
//! sorted lexicographically; that order is the edge-block order of every
//! parameter and statistic vector in the crate.

use std::collections::BTreeMap;
use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::basis::{stat_vector, BasisSpec};
use crate::error::{MrfError, Result};

pub type Edge = (usize, usize);

/// Set of edges selected by a fitted model.
pub type EdgeSet = Vec<Edge>;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Graph {
    d: usize,
    edges: Vec<Edge>,
    // (neighbor, edge index), neighbors ascending
    adj: Vec<Vec<(usize, usize)>>,
}

impl Graph {
    /// Builds a graph, normalizing each pair to `(min, max)`.
    pub fn new(d: usize, edges: impl IntoIterator<Item = Edge>) -> Result<Self> {
        let mut list: Vec<Edge> = Vec::new();
        for (a, b) in edges {
            if a == b {
                return Err(MrfError::InvalidArgument(format!("self-loop at node {a}")));
            }
            if a >= d || b >= d {
                return Err(MrfError::InvalidArgument(format!(
                    "edge ({a}, {b}) references a node outside 0..{d}"
                )));
            }
            list.push((a.min(b), a.max(b)));
        }
        list.sort_unstable();
        let before = list.len();
        list.dedup();
        if list.len() != before {
            return Err(MrfError::InvalidArgument("duplicate edge".into()));
        }
        let mut adj = vec![Vec::new(); d];
        for (e, &(i, j)) in list.iter().enumerate() {
            adj[i].push((j, e));
            adj[j].push((i, e));
        }
        for a in &mut adj {
            a.sort_unstable();
        }
        Ok(Self { d, edges: list, adj })
    }

    pub fn empty(d: usize) -> Self {
        Self::new(d, std::iter::empty()).expect("empty graph is valid")
    }

    pub fn complete(d: usize) -> Self {
        let edges = (0..d).flat_map(|i| (i + 1..d).map(move |j| (i, j)));
        Self::new(d, edges).expect("complete graph is valid")
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    /// Position of edge `{i, j}` in the edge order.
    pub fn edge_index(&self, i: usize, j: usize) -> Option<usize> {
        let key = (i.min(j), i.max(j));
        self.edges.binary_search(&key).ok()
    }

    pub fn contains(&self, i: usize, j: usize) -> bool {
        self.edge_index(i, j).is_some()
    }

    /// `(neighbor, edge index)` pairs of node `i`.
    pub fn neighbors(&self, i: usize) -> &[(usize, usize)] {
        &self.adj[i]
    }

    pub fn degree(&self, i: usize) -> usize {
        self.adj[i].len()
    }

    /// Connected-component label of every node (labels are the smallest node
    /// index in the component).
    pub fn components(&self) -> Vec<usize> {
        let mut label = vec![usize::MAX; self.d];
        for root in 0..self.d {
            if label[root] != usize::MAX {
                continue;
            }
            let mut stack = vec![root];
            label[root] = root;
            while let Some(u) = stack.pop() {
                for &(v, _) in &self.adj[u] {
                    if label[v] == usize::MAX {
                        label[v] = root;
                        stack.push(v);
                    }
                }
            }
        }
        label
    }

    pub fn n_components(&self) -> usize {
        let labels = self.components();
        labels.iter().enumerate().filter(|&(i, &l)| i == l).count()
    }

    /// Acyclic (a forest).
    pub fn is_forest(&self) -> bool {
        self.n_edges() + self.n_components() == self.d
    }

    /// Subgraph keeping only the listed edges, which must belong to `self`.
    pub fn subgraph(&self, keep: &[Edge]) -> Result<Graph> {
        for &(i, j) in keep {
            if !self.contains(i, j) {
                return Err(MrfError::InvalidArgument(format!("edge ({i}, {j}) not in graph")));
            }
        }
        Graph::new(self.d, keep.iter().copied())
    }
}

/// Natural parameters `θ` laid out like [`stat_vector`]: `d` vertex blocks of
/// length `m1`, then one dense row-major `m2 × m2` block per edge.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamVector {
    spec: BasisSpec,
    graph: Graph,
    data: Vec<f64>,
}

impl ParamVector {
    pub fn zeros(spec: BasisSpec, graph: Graph) -> Self {
        let len = spec.n_stats(graph.d(), graph.n_edges());
        Self { spec, graph, data: vec![0.0; len] }
    }

    pub fn from_vec(spec: BasisSpec, graph: Graph, data: Vec<f64>) -> Result<Self> {
        let len = spec.n_stats(graph.d(), graph.n_edges());
        if data.len() != len {
            return Err(MrfError::Dimension(format!(
                "parameter vector has {} entries, layout needs {len}",
                data.len()
            )));
        }
        Ok(Self { spec, graph, data })
    }

    pub fn spec(&self) -> &BasisSpec {
        &self.spec
    }

    pub fn graph(&self) -> &Graph {
        &self.graph
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Same layout, new values.
    pub fn with_values(&self, data: Vec<f64>) -> Result<Self> {
        Self::from_vec(self.spec, self.graph.clone(), data)
    }

    pub fn vertex_range(&self, i: usize) -> Range<usize> {
        vertex_range(&self.spec, i)
    }

    pub fn edge_range(&self, e: usize) -> Range<usize> {
        edge_range(&self.spec, self.graph.d(), e)
    }

    pub fn vertex(&self, i: usize) -> &[f64] {
        &self.data[self.vertex_range(i)]
    }

    pub fn vertex_mut(&mut self, i: usize) -> &mut [f64] {
        let r = self.vertex_range(i);
        &mut self.data[r]
    }

    pub fn edge(&self, e: usize) -> &[f64] {
        &self.data[self.edge_range(e)]
    }

    pub fn edge_mut(&mut self, e: usize) -> &mut [f64] {
        let r = self.edge_range(e);
        &mut self.data[r]
    }

    /// Euclidean norm of every edge block, in edge order.
    pub fn edge_norms(&self) -> Vec<f64> {
        (0..self.graph.n_edges()).map(|e| norm2(self.edge(e))).collect()
    }

    /// `R(θ_e) = Σ_{(i,j)} ‖θ_ij‖₂` over edge blocks; vertex blocks are not penalized.
    pub fn group_norm(&self) -> f64 {
        self.edge_norms().iter().sum()
    }

    /// `R*(θ_e) = max_{(i,j)} ‖θ_ij‖₂`.
    pub fn dual_group_norm(&self) -> f64 {
        self.edge_norms().into_iter().fold(0.0, f64::max)
    }

    /// Edges whose block norm exceeds `tol`.
    pub fn support(&self, tol: f64) -> EdgeSet {
        self.graph
            .edges()
            .iter()
            .zip(self.edge_norms())
            .filter(|&(_, n)| n > tol)
            .map(|(&e, _)| e)
            .collect()
    }

    /// `⟨θ, φ(x)⟩`, the log-density up to the log-partition function.
    pub fn log_density_unnorm(&self, x: &[f64]) -> Result<f64> {
        let phi = stat_vector(x, &self.graph, &self.spec)?;
        Ok(dot(&self.data, &phi))
    }

    /// Embeds into a larger truncation, filling new coefficients with zeros.
    pub fn embed(&self, spec: BasisSpec) -> Result<ParamVector> {
        if spec.m1 < self.spec.m1 || spec.m2 < self.spec.m2 {
            return Err(MrfError::InvalidArgument(format!(
                "cannot embed (m1={}, m2={}) into smaller (m1={}, m2={})",
                self.spec.m1, self.spec.m2, spec.m1, spec.m2
            )));
        }
        let mut out = ParamVector::zeros(spec, self.graph.clone());
        for i in 0..self.graph.d() {
            out.vertex_mut(i)[..self.spec.m1].copy_from_slice(self.vertex(i));
        }
        let (old, new) = (self.spec.m2, spec.m2);
        for e in 0..self.graph.n_edges() {
            let src = self.edge(e).to_vec();
            let dst = out.edge_mut(e);
            for k in 0..old {
                dst[k * new..k * new + old].copy_from_slice(&src[k * old..(k + 1) * old]);
            }
        }
        Ok(out)
    }

    /// Re-expresses the parameters over another graph on the same nodes.
    /// Blocks of edges missing from `graph` must be zero.
    pub fn on_graph(&self, graph: &Graph) -> Result<ParamVector> {
        if graph.d() != self.graph.d() {
            return Err(MrfError::Dimension("graphs have different node counts".into()));
        }
        let mut out = ParamVector::zeros(self.spec, graph.clone());
        for i in 0..graph.d() {
            out.vertex_mut(i).copy_from_slice(self.vertex(i));
        }
        for (e, &(i, j)) in self.graph.edges().iter().enumerate() {
            match graph.edge_index(i, j) {
                Some(f) => out.edge_mut(f).copy_from_slice(self.edge(e)),
                None if self.edge(e).iter().all(|&v| v == 0.0) => {}
                None => {
                    return Err(MrfError::InvalidArgument(format!(
                        "edge ({i}, {j}) has nonzero parameters but is missing from the target graph"
                    )))
                }
            }
        }
        Ok(out)
    }

    pub fn to_doc(&self) -> ModelDoc {
        let d = self.graph.d();
        let m2 = self.spec.m2;
        ModelDoc {
            d,
            m1: self.spec.m1,
            m2,
            edges: self.graph.edges().iter().map(|&(i, j)| [i, j]).collect(),
            theta_v: (0..d).map(|i| self.vertex(i).to_vec()).collect(),
            theta_e: self
                .graph
                .edges()
                .iter()
                .enumerate()
                .map(|(e, &(i, j))| {
                    let rows = self.edge(e).chunks(m2).map(<[f64]>::to_vec).collect();
                    (edge_key(i, j), rows)
                })
                .collect(),
        }
    }

    pub fn from_doc(doc: &ModelDoc) -> Result<Self> {
        let spec = BasisSpec::new(doc.m1, doc.m2).map_err(|e| MrfError::Model(e.to_string()))?;
        let graph = Graph::new(doc.d, doc.edges.iter().map(|&[i, j]| (i, j)))
            .map_err(|e| MrfError::Model(e.to_string()))?;
        if doc.theta_v.len() != doc.d {
            return Err(MrfError::Model(format!(
                "theta_v has {} rows, expected d = {}",
                doc.theta_v.len(),
                doc.d
            )));
        }
        if doc.theta_e.len() != graph.n_edges() {
            return Err(MrfError::Model(format!(
                "theta_e has {} blocks for {} edges",
                doc.theta_e.len(),
                graph.n_edges()
            )));
        }
        let mut theta = ParamVector::zeros(spec, graph.clone());
        for (i, row) in doc.theta_v.iter().enumerate() {
            if row.len() != spec.m1 {
                return Err(MrfError::Model(format!("theta_v[{i}] has length {}, expected m1 = {}", row.len(), spec.m1)));
            }
            theta.vertex_mut(i).copy_from_slice(row);
        }
        for (e, &(i, j)) in graph.edges().iter().enumerate() {
            let key = edge_key(i, j);
            let block = doc
                .theta_e
                .get(&key)
                .ok_or_else(|| MrfError::Model(format!("theta_e has no block for edge {key}")))?;
            if block.len() != spec.m2 || block.iter().any(|r| r.len() != spec.m2) {
                return Err(MrfError::Model(format!("theta_e[{key}] is not {0}x{0}", spec.m2)));
            }
            let dst = theta.edge_mut(e);
            for (k, r) in block.iter().enumerate() {
                dst[k * spec.m2..(k + 1) * spec.m2].copy_from_slice(r);
            }
        }
        Ok(theta)
    }
}

pub(crate) fn vertex_range(spec: &BasisSpec, i: usize) -> Range<usize> {
    i * spec.m1..(i + 1) * spec.m1
}

pub(crate) fn edge_range(spec: &BasisSpec, d: usize, e: usize) -> Range<usize> {
    let b = spec.m2 * spec.m2;
    let base = d * spec.m1;
    base + e * b..base + (e + 1) * b
}

/// Key of an edge block in a [`ModelDoc`].
pub fn edge_key(i: usize, j: usize) -> String {
    format!("{}-{}", i.min(j), i.max(j))
}

/// Serialized form of a [`ParamVector`].
///
/// `theta_v` is `d × m1`; `theta_e` maps `"i-j"` (with `i < j`) to a row-major
/// `m2 × m2` array whose row index belongs to node `i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelDoc {
    pub d: usize,
    pub m1: usize,
    pub m2: usize,
    pub edges: Vec<[usize; 2]>,
    pub theta_v: Vec<Vec<f64>>,
    pub theta_e: BTreeMap<String, Vec<Vec<f64>>>,
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// `max_b ‖b‖₂` over a list of blocks.
pub fn dual_group_norm<'a>(blocks: impl IntoIterator<Item = &'a [f64]>) -> f64 {
    blocks.into_iter().map(norm2).fold(0.0, f64::max)
}
