//! Spanning trees and edge-appearance weights.
//!
//! Edge weights `α` live in the spanning-tree polytope: they are built as
//! averages of tree indicator vectors and moved only by convex combinations
//! with further trees (Frank-Wolfe).

use rand::Rng;

use crate::error::{MrfError, Result};
use crate::graphmodel::{Edge, Graph, ParamVector};
use crate::trw::{bp_run, BpOptions};

struct UnionFind {
    parent: Vec<usize>,
    rank: Vec<u8>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        Self { parent: (0..n).collect(), rank: vec![0; n] }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    /// False if already joined.
    fn union(&mut self, a: usize, b: usize) -> bool {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        match self.rank[ra].cmp(&self.rank[rb]) {
            std::cmp::Ordering::Less => self.parent[ra] = rb,
            std::cmp::Ordering::Greater => self.parent[rb] = ra,
            std::cmp::Ordering::Equal => {
                self.parent[rb] = ra;
                self.rank[ra] += 1;
            }
        }
        true
    }
}

/// Maximum-weight spanning forest over the weighted edges.
///
/// Ties are broken by edge order, so the output is deterministic.
pub fn kruskal_max(d: usize, weighted: &[(Edge, f64)]) -> Result<Graph> {
    if let Some(&(e, w)) = weighted.iter().find(|(_, w)| !w.is_finite()) {
        return Err(MrfError::InvalidArgument(format!("edge {e:?} has non-finite weight {w}")));
    }
    let mut order: Vec<(Edge, f64)> = weighted.iter().map(|&((i, j), w)| ((i.min(j), i.max(j)), w)).collect();
    order.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    let mut uf = UnionFind::new(d);
    let mut chosen = Vec::with_capacity(d.saturating_sub(1));
    for ((i, j), _) in order {
        if i >= d || j >= d {
            return Err(MrfError::InvalidArgument(format!("edge ({i}, {j}) outside 0..{d}")));
        }
        if uf.union(i, j) {
            chosen.push((i, j));
        }
    }
    Graph::new(d, chosen)
}

/// Random spanning forest of `graph`: Kruskal on i.i.d. uniform weights.
/// Not uniform over trees.
pub fn random_spanning_tree<R: Rng + ?Sized>(graph: &Graph, rng: &mut R) -> Graph {
    let weighted: Vec<(Edge, f64)> = graph.edges().iter().map(|&e| (e, rng.random::<f64>())).collect();
    kruskal_max(graph.d(), &weighted).expect("uniform weights are finite")
}

/// Edge-appearance probabilities aligned with the edges of `graph`.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeWeights {
    graph: Graph,
    alpha: Vec<f64>,
}

impl EdgeWeights {
    /// Wraps explicit weights; entries must lie in `[0, 1]`.
    pub fn new(graph: Graph, alpha: Vec<f64>) -> Result<Self> {
        if alpha.len() != graph.n_edges() {
            return Err(MrfError::Dimension(format!(
                "{} weights for {} edges",
                alpha.len(),
                graph.n_edges()
            )));
        }
        if let Some(a) = alpha.iter().find(|a| !(0.0..=1.0).contains(*a)) {
            return Err(MrfError::InvalidWeights(format!("edge weight {a} outside [0, 1]")));
        }
        Ok(Self { graph, alpha })
    }

    /// `α ≡ 1`; lies in the polytope exactly when `graph` is a forest.
    pub fn ones(graph: Graph) -> Self {
        let alpha = vec![1.0; graph.n_edges()];
        Self { graph, alpha }
    }

    /// Average of tree indicator vectors.
    pub fn from_trees(graph: Graph, trees: &[Graph]) -> Result<Self> {
        if trees.is_empty() {
            return Err(MrfError::InvalidArgument("need at least one tree".into()));
        }
        let mut alpha = vec![0.0; graph.n_edges()];
        for t in trees {
            for &(i, j) in t.edges() {
                let e = graph
                    .edge_index(i, j)
                    .ok_or_else(|| MrfError::InvalidArgument(format!("tree edge ({i}, {j}) not in graph")))?;
                alpha[e] += 1.0;
            }
        }
        let k = trees.len() as f64;
        alpha.iter_mut().for_each(|a| *a /= k);
        Ok(Self { graph, alpha })
    }

    pub fn graph(&self) -> &Graph {
        &self.graph
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.alpha
    }

    pub fn get(&self, e: usize) -> f64 {
        self.alpha[e]
    }

    /// `c·self + (1 − c)·tree`.
    pub fn mix_with_tree(&self, c: f64, tree: &Graph) -> Self {
        let mut alpha: Vec<f64> = self.alpha.iter().map(|a| c * a).collect();
        for &(i, j) in tree.edges() {
            if let Some(e) = self.graph.edge_index(i, j) {
                alpha[e] += 1.0 - c;
            }
        }
        Self { graph: self.graph.clone(), alpha }
    }
}

/// Averages `n_trees` random spanning trees, then appends one tree per edge
/// not yet covered (built from weights that force that edge in) so every
/// `α_ij > 0`.
pub fn edge_weights_init<R: Rng + ?Sized>(graph: &Graph, n_trees: usize, rng: &mut R) -> Result<EdgeWeights> {
    if n_trees == 0 {
        return Err(MrfError::InvalidArgument("n_trees must be at least 1".into()));
    }
    let mut trees: Vec<Graph> = (0..n_trees).map(|_| random_spanning_tree(graph, rng)).collect();
    let mut covered = vec![false; graph.n_edges()];
    for t in &trees {
        for &(i, j) in t.edges() {
            covered[graph.edge_index(i, j).expect("subgraph")] = true;
        }
    }
    for e in 0..graph.n_edges() {
        if covered[e] {
            continue;
        }
        let weighted: Vec<(Edge, f64)> = graph
            .edges()
            .iter()
            .enumerate()
            .map(|(f, &edge)| (edge, if f == e { 2.0 } else { rng.random::<f64>() }))
            .collect();
        let t = kruskal_max(graph.d(), &weighted)?;
        for &(i, j) in t.edges() {
            covered[graph.edge_index(i, j).expect("subgraph")] = true;
        }
        trees.push(t);
    }
    EdgeWeights::from_trees(graph.clone(), &trees)
}

#[derive(Debug, Clone)]
pub struct FrankWolfeResult {
    pub alpha: EdgeWeights,
    /// `Q(θ, α_t)` for `t = 0..=steps_taken`.
    pub q_history: Vec<f64>,
}

const ARMIJO: f64 = 1e-4;

/// Minimizes the bound `Q(θ, α)` over the polytope by conditional gradient.
///
/// The linear step is the maximum-weight spanning tree under the current
/// mutual informations. The step is found by Armijo backtracking on the
/// fraction moved toward the tree, with `2 / (t + 2)` as a fallback; a step
/// is accepted only if it lowers `Q`.
pub fn frank_wolfe_alpha(
    theta: &ParamVector,
    alpha0: &EdgeWeights,
    steps: usize,
    bp: &BpOptions,
) -> Result<FrankWolfeResult> {
    if alpha0.graph() != theta.graph() {
        return Err(MrfError::InvalidArgument("edge weights and parameters use different graphs".into()));
    }
    let mut alpha = alpha0.clone();
    if steps == 0 {
        return Ok(FrankWolfeResult { alpha, q_history: Vec::new() });
    }
    let mut res = bp_run(theta, &alpha, bp)?;
    let mut q_history = vec![res.q_value];
    for t in 0..steps {
        let graph = theta.graph();
        let weighted: Vec<(Edge, f64)> = graph.edges().iter().copied().zip(res.mutual_info.iter().copied()).collect();
        let tree = kruskal_max(graph.d(), &weighted)?;
        // directional derivative of Q toward the tree: −Σ I_ij (s_ij − α_ij)
        let mut slope = 0.0;
        for (e, &(i, j)) in graph.edges().iter().enumerate() {
            let s = if tree.contains(i, j) { 1.0 } else { 0.0 };
            slope -= res.mutual_info[e] * (s - alpha.get(e));
        }
        if slope >= 0.0 {
            break;
        }
        let mut accepted = None;
        let mut gamma = 0.5;
        for _ in 0..30 {
            let cand = alpha.mix_with_tree(1.0 - gamma, &tree);
            if let Ok(r) = bp_run(theta, &cand, bp) {
                if r.q_value <= res.q_value + ARMIJO * gamma * slope {
                    accepted = Some((cand, r));
                    break;
                }
            }
            gamma *= 0.5;
        }
        if accepted.is_none() {
            let gamma = 2.0 / (t as f64 + 2.0);
            let cand = alpha.mix_with_tree(1.0 - gamma.min(0.5), &tree);
            if let Ok(r) = bp_run(theta, &cand, bp) {
                if r.q_value < res.q_value {
                    accepted = Some((cand, r));
                }
            }
        }
        match accepted {
            Some((a, r)) => {
                alpha = a;
                res = r;
                q_history.push(res.q_value);
            }
            None => break,
        }
    }
    Ok(FrankWolfeResult { alpha, q_history })
}
