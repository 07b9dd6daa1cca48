//! Tree-reweighted functional belief propagation on a midpoint grid.
//!
//! For edge weights `α` in the spanning-tree polytope the fixed point of the
//! reweighted message updates yields pseudomarginals `q_i`, `q_ij` whose
//! value
//!
//! `Q(θ, α) = ⟨θ, τ⟩ + Σ_i H(q_i) − Σ_ij α_ij I(q_ij)`
//!
//! upper-bounds the log-partition function, with gradient `τ` (the
//! pseudomoments). All integrals are Riemann sums on the same grid, so on a
//! tree with `α ≡ 1` the value equals the grid log-partition function.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{MrfError, Result};
use crate::graphmodel::{dot, ParamVector};
use crate::gridfn::{entropy, log_integral_exp, mutual_info, Grid1D, GriddedFn1D, GriddedFn2D, LOG_FLOOR};
use crate::spantree::EdgeWeights;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BpOptions {
    pub grid: Grid1D,
    pub max_iter: usize,
    /// Maximum absolute change of any belief or message value between sweeps.
    pub tol: f64,
}

impl Default for BpOptions {
    fn default() -> Self {
        Self { grid: Grid1D::default(), max_iter: 500, tol: 1e-6 }
    }
}

/// Basis values `φ_k(x_t)` on the grid, `k = 1..=m` as rows.
#[derive(Debug, Clone)]
pub struct BasisGrid {
    pub phi: DMatrix<f64>,
}

impl BasisGrid {
    pub fn new(m: usize, grid: &Grid1D) -> Self {
        let n = grid.n();
        let mut phi = DMatrix::zeros(m, n);
        let mut buf = vec![0.0; m];
        for t in 0..n {
            crate::basis::legendre_values(m, grid.node(t), &mut buf);
            for k in 0..m {
                phi[(k, t)] = buf[k];
            }
        }
        Self { phi }
    }

    /// `Σ_k c_k φ_k(x_t)` for each node `t`.
    pub fn combine(&self, coef: &[f64]) -> Vec<f64> {
        let m = coef.len();
        let n = self.phi.ncols();
        let mut out = vec![0.0; n];
        for k in 0..m {
            let c = coef[k];
            if c != 0.0 {
                for t in 0..n {
                    out[t] += c * self.phi[(k, t)];
                }
            }
        }
        out
    }

    /// `L(s, t) = Σ_kl B_kl φ_k(x_s) φ_l(x_t)` for a row-major `m2 × m2` block.
    pub fn bilinear(&self, block: &[f64], m2: usize) -> DMatrix<f64> {
        let p = self.phi.rows(0, m2);
        let b = DMatrix::from_row_slice(m2, m2, block);
        p.transpose() * b * p
    }
}

/// Directed messages; `forward[e]` runs from the lower to the higher node of
/// edge `e`, `backward[e]` the other way. Each is normalized to unit integral.
#[derive(Debug, Clone, PartialEq)]
pub struct Messages {
    pub forward: Vec<Vec<f64>>,
    pub backward: Vec<Vec<f64>>,
}

impl Messages {
    pub fn uniform(n_edges: usize, n: usize) -> Self {
        Self { forward: vec![vec![1.0; n]; n_edges], backward: vec![vec![1.0; n]; n_edges] }
    }
}

#[derive(Debug, Clone)]
pub struct PseudoMarginals {
    pub nodes: Vec<GriddedFn1D>,
    /// Aligned with graph edges; rows index the lower node.
    pub edges: Vec<GriddedFn2D>,
}

#[derive(Debug, Clone)]
pub struct TrwResult {
    pub pm: PseudoMarginals,
    pub messages: Messages,
    /// Pseudomoments in parameter layout.
    pub tau: Vec<f64>,
    pub entropies: Vec<f64>,
    pub mutual_info: Vec<f64>,
    pub q_value: f64,
    pub converged: bool,
    pub iterations: usize,
}

struct Potentials {
    node: Vec<Vec<f64>>,
    // exp(L/α − max), row-major over (lower, higher); None for skipped edges
    edge: Vec<Option<DMatrix<f64>>>,
}

fn potentials(theta: &ParamVector, alpha: &EdgeWeights, basis: &BasisGrid) -> Result<Potentials> {
    let spec = theta.spec();
    let node = (0..theta.graph().d()).map(|i| basis.combine(theta.vertex(i))).collect();
    let edge = (0..theta.graph().n_edges())
        .into_par_iter()
        .map(|e| {
            let block = theta.edge(e);
            let a = alpha.get(e);
            let zero = block.iter().all(|&v| v == 0.0);
            if a == 0.0 {
                if zero {
                    return Ok(None);
                }
                let (i, j) = theta.graph().edges()[e];
                return Err(MrfError::InvalidWeights(format!(
                    "edge ({i}, {j}) has weight 0 but nonzero parameters"
                )));
            }
            let mut l = basis.bilinear(block, spec.m2);
            l.iter_mut().for_each(|v| *v /= a);
            let m = l.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            l.iter_mut().for_each(|v| *v = (*v - m).exp());
            Ok(Some(l))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Potentials { node, edge })
}

fn ln_clamped(v: f64) -> f64 {
    v.max(LOG_FLOOR).ln()
}

/// Log of the unnormalized belief at every node: `ℓ_i + Σ_r α_ri log M_ri`.
fn log_beliefs(pot: &Potentials, alpha: &EdgeWeights, msgs: &Messages) -> Vec<Vec<f64>> {
    let graph = alpha.graph();
    let mut out = pot.node.clone();
    for (e, &(i, j)) in graph.edges().iter().enumerate() {
        if pot.edge[e].is_none() {
            continue;
        }
        let a = alpha.get(e);
        for (o, &m) in out[j].iter_mut().zip(&msgs.forward[e]) {
            *o += a * ln_clamped(m);
        }
        for (o, &m) in out[i].iter_mut().zip(&msgs.backward[e]) {
            *o += a * ln_clamped(m);
        }
    }
    out
}

fn normalized_exp(log_values: &[f64], w: f64) -> Vec<f64> {
    let lz = log_integral_exp(log_values, w);
    log_values.iter().map(|&v| (v - lz).exp()).collect()
}

/// `b_i / M_{j→i}` up to scale, as a max-shifted linear-domain vector.
fn cavity(log_b: &[f64], incoming: &[f64]) -> DVector<f64> {
    let lr: Vec<f64> = log_b.iter().zip(incoming).map(|(&b, &m)| b - ln_clamped(m)).collect();
    let mx = lr.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    DVector::from_iterator(lr.len(), lr.iter().map(|&v| (v - mx).exp()))
}

fn normalize_message(v: DVector<f64>, w: f64) -> Vec<f64> {
    let s: f64 = v.iter().sum::<f64>() * w;
    v.iter().map(|&x| (x / s).max(LOG_FLOOR)).collect()
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Runs synchronous message passing from uniform messages.
pub fn bp_run(theta: &ParamVector, alpha: &EdgeWeights, opts: &BpOptions) -> Result<TrwResult> {
    bp_run_from(theta, alpha, opts, None)
}

/// As [`bp_run`], optionally starting from earlier messages of the same graph.
pub fn bp_run_from(
    theta: &ParamVector,
    alpha: &EdgeWeights,
    opts: &BpOptions,
    init: Option<&Messages>,
) -> Result<TrwResult> {
    let graph = theta.graph();
    if alpha.graph() != graph {
        return Err(MrfError::InvalidArgument("edge weights and parameters use different graphs".into()));
    }
    let grid = opts.grid;
    let n = grid.n();
    let w = grid.weight();
    let spec = theta.spec();
    let basis = BasisGrid::new(spec.max_degree(), &grid);
    let pot = potentials(theta, alpha, &basis)?;
    let n_edges = graph.n_edges();

    let mut msgs = match init {
        Some(m) if m.forward.len() == n_edges && m.forward.iter().all(|v| v.len() == n) => m.clone(),
        _ => Messages::uniform(n_edges, n),
    };
    let mut log_b = log_beliefs(&pot, alpha, &msgs);
    let mut beliefs: Vec<Vec<f64>> = log_b.iter().map(|l| normalized_exp(l, w)).collect();

    let mut iterations = 0;
    let mut converged = false;
    let mut last_change = f64::INFINITY;
    while iterations < opts.max_iter {
        iterations += 1;
        let updates: Vec<Option<(Vec<f64>, Vec<f64>)>> = (0..n_edges)
            .into_par_iter()
            .map(|e| {
                let psi = pot.edge[e].as_ref()?;
                let (i, j) = graph.edges()[e];
                let r_i = cavity(&log_b[i], &msgs.backward[e]);
                let r_j = cavity(&log_b[j], &msgs.forward[e]);
                let fwd = normalize_message(psi.tr_mul(&r_i), w);
                let bwd = normalize_message(psi * r_j, w);
                Some((fwd, bwd))
            })
            .collect();
        let mut msg_change: f64 = 0.0;
        for (e, u) in updates.into_iter().enumerate() {
            if let Some((f, b)) = u {
                msg_change = msg_change.max(max_abs_diff(&msgs.forward[e], &f)).max(max_abs_diff(&msgs.backward[e], &b));
                msgs.forward[e] = f;
                msgs.backward[e] = b;
            }
        }
        log_b = log_beliefs(&pot, alpha, &msgs);
        let new_beliefs: Vec<Vec<f64>> = log_b.iter().map(|l| normalized_exp(l, w)).collect();
        // messages must settle too, otherwise edge marginals can disagree with
        // beliefs whose changes happen to cancel
        last_change = beliefs
            .iter()
            .zip(&new_beliefs)
            .map(|(a, b)| max_abs_diff(a, b))
            .fold(msg_change, f64::max);
        beliefs = new_beliefs;
        if last_change < opts.tol {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(MrfError::BpNotConverged { iterations, last_change });
    }

    let nodes: Vec<GriddedFn1D> = beliefs.into_iter().map(|b| GriddedFn1D { grid, values: b }).collect();
    let edges: Vec<GriddedFn2D> = (0..n_edges)
        .into_par_iter()
        .map(|e| {
            let (i, j) = graph.edges()[e];
            match &pot.edge[e] {
                None => GriddedFn2D::product(&nodes[i], &nodes[j]),
                Some(psi) => {
                    let r_i = cavity(&log_b[i], &msgs.backward[e]);
                    let r_j = cavity(&log_b[j], &msgs.forward[e]);
                    let mut q = psi.clone();
                    for s in 0..n {
                        for t in 0..n {
                            q[(s, t)] *= r_i[s] * r_j[t];
                        }
                    }
                    let mass = q.iter().sum::<f64>() * w * w;
                    let mut values = Vec::with_capacity(n * n);
                    for s in 0..n {
                        for t in 0..n {
                            values.push(q[(s, t)] / mass);
                        }
                    }
                    GriddedFn2D { grid, values }
                }
            }
        })
        .collect();
    let pm = PseudoMarginals { nodes, edges };
    let tau = moments_with(&pm, theta, &basis);
    let entropies: Vec<f64> = pm.nodes.iter().map(entropy).collect();
    let mi: Vec<f64> = pm.edges.par_iter().map(mutual_info).collect();
    let q = dot(theta.as_slice(), &tau) + entropies.iter().sum::<f64>()
        - mi.iter().zip(alpha.as_slice()).map(|(i, a)| a * i).sum::<f64>();
    Ok(TrwResult {
        pm,
        messages: msgs,
        tau,
        entropies,
        mutual_info: mi,
        q_value: q,
        converged,
        iterations,
    })
}

fn moments_with(pm: &PseudoMarginals, theta: &ParamVector, basis: &BasisGrid) -> Vec<f64> {
    let spec = theta.spec();
    let mut tau = vec![0.0; theta.len()];
    let w = pm.nodes.first().map(|q| q.grid.weight()).unwrap_or(1.0);
    let d = pm.nodes.len();
    for (i, q) in pm.nodes.iter().enumerate() {
        for k in 0..spec.m1 {
            let row = basis.phi.row(k);
            tau[i * spec.m1 + k] = q.values.iter().zip(row.iter()).map(|(a, b)| a * b).sum::<f64>() * w;
        }
    }
    let blocks: Vec<Vec<f64>> = pm
        .edges
        .par_iter()
        .map(|q| {
            let n = q.grid.n();
            let qm = DMatrix::from_row_slice(n, n, &q.values);
            let p = basis.phi.rows(0, spec.m2);
            let t = p * qm * p.transpose();
            let mut out = Vec::with_capacity(spec.m2 * spec.m2);
            for k in 0..spec.m2 {
                for l in 0..spec.m2 {
                    out.push(t[(k, l)] * w * w);
                }
            }
            out
        })
        .collect();
    let base = d * spec.m1;
    let b2 = spec.m2 * spec.m2;
    for (e, b) in blocks.into_iter().enumerate() {
        tau[base + e * b2..base + (e + 1) * b2].copy_from_slice(&b);
    }
    tau
}

/// Riemann-sum expectations of the statistics under the pseudomarginals.
pub fn pseudo_moments(pm: &PseudoMarginals, theta_layout: &ParamVector) -> Vec<f64> {
    let grid = pm.nodes.first().map(|q| q.grid).unwrap_or_default();
    let basis = BasisGrid::new(theta_layout.spec().max_degree(), &grid);
    moments_with(pm, theta_layout, &basis)
}

/// `⟨θ, τ⟩ + Σ H(q_i) − Σ α_ij I(q_ij)` recomputed from the pseudomarginals.
pub fn q_value(theta: &ParamVector, alpha: &EdgeWeights, pm: &PseudoMarginals) -> f64 {
    let tau = pseudo_moments(pm, theta);
    dot(theta.as_slice(), &tau) + pm.nodes.iter().map(entropy).sum::<f64>()
        - pm.edges.iter().zip(alpha.as_slice()).map(|(q, a)| a * mutual_info(q)).sum::<f64>()
}

/// `∇_θ Q = τ`.
pub fn grad_q(result: &TrwResult) -> &[f64] {
    &result.tau
}

/// `log Σ_x w^d exp⟨θ, φ(x)⟩` over the full product grid. Only for `d ≤ 4`.
pub fn brute_force_logz(theta: &ParamVector, grid: &Grid1D) -> Result<f64> {
    let d = theta.graph().d();
    if d > 4 {
        return Err(MrfError::InvalidArgument(format!("brute-force partition function refuses d = {d} > 4")));
    }
    if d == 0 {
        return Ok(0.0);
    }
    let spec = theta.spec();
    let basis = BasisGrid::new(spec.max_degree(), grid);
    let node: Vec<Vec<f64>> = (0..d).map(|i| basis.combine(theta.vertex(i))).collect();
    // pair[i][j] for i < j, indexed [x_i * n + x_j]
    let n = grid.n();
    let mut pair: Vec<Vec<Option<Vec<f64>>>> = vec![vec![None; d]; d];
    for (e, &(i, j)) in theta.graph().edges().iter().enumerate() {
        let l = basis.bilinear(theta.edge(e), spec.m2);
        let mut v = Vec::with_capacity(n * n);
        for s in 0..n {
            for t in 0..n {
                v.push(l[(s, t)]);
            }
        }
        pair[i][j] = Some(v);
    }
    let w = grid.weight();
    let top: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|x0| {
            let mut xs = vec![x0; d];
            nested_lse(1, &mut xs, node[0][x0], &node, &pair, n, w)
        })
        .collect();
    Ok(log_integral_exp(&top, w))
}

fn nested_lse(
    k: usize,
    xs: &mut [usize],
    base: f64,
    node: &[Vec<f64>],
    pair: &[Vec<Option<Vec<f64>>>],
    n: usize,
    w: f64,
) -> f64 {
    if k == node.len() {
        return base;
    }
    let mut vals = Vec::with_capacity(n);
    for t in 0..n {
        let mut e = base + node[k][t];
        for j in 0..k {
            if let Some(p) = &pair[j][k] {
                e += p[xs[j] * n + t];
            }
        }
        xs[k] = t;
        vals.push(nested_lse(k + 1, xs, e, node, pair, n, w));
    }
    log_integral_exp(&vals, w)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::{legendre_eval, stat_vector, BasisSpec};
    use crate::graphmodel::Graph;
    use crate::gridfn::{marginalize, Axis};
    use crate::spantree::edge_weights_init;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn grid(n: usize) -> Grid1D {
        Grid1D::new(n).unwrap()
    }

    fn random_theta(spec: BasisSpec, g: Graph, scale: f64, rng: &mut ChaCha8Rng) -> ParamVector {
        let len = spec.n_stats(g.d(), g.n_edges());
        ParamVector::from_vec(spec, g, (0..len).map(|_| rng.random_range(-scale..scale)).collect()).unwrap()
    }

    /// Joint grid probabilities of a 3-node model, indexed `[a][b][c]` flattened.
    fn joint3(theta: &ParamVector, g: &Grid1D) -> Vec<f64> {
        let n = g.n();
        let mut p = vec![0.0; n * n * n];
        for a in 0..n {
            for b in 0..n {
                for c in 0..n {
                    let x = [g.node(a), g.node(b), g.node(c)];
                    p[(a * n + b) * n + c] = theta.log_density_unnorm(&x).unwrap();
                }
            }
        }
        let m = p.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        p.iter_mut().for_each(|v| *v = (*v - m).exp());
        let s: f64 = p.iter().sum();
        p.iter_mut().for_each(|v| *v /= s);
        p
    }

    /// Grid means of the statistics under the uniform density.
    fn uniform_moments(layout: &ParamVector, n: usize) -> Vec<f64> {
        let m = layout.spec().max_degree();
        let mean: Vec<f64> = (1..=m)
            .map(|k| (0..n).map(|t| legendre_eval(k, (t as f64 + 0.5) / n as f64)).sum::<f64>() / n as f64)
            .collect();
        let (m1, m2) = (layout.spec().m1, layout.spec().m2);
        let mut out = Vec::new();
        for _ in 0..layout.graph().d() {
            out.extend_from_slice(&mean[..m1]);
        }
        for _ in 0..layout.graph().n_edges() {
            for k in 0..m2 {
                for l in 0..m2 {
                    out.push(mean[k] * mean[l]);
                }
            }
        }
        out
    }

    #[test]
    fn zero_theta_is_uniform() {
        let spec = BasisSpec::new(2, 2).unwrap();
        let g = Graph::complete(3);
        let th = ParamVector::zeros(spec, g.clone());
        let a = edge_weights_init(&g, 5, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        let r = bp_run(&th, &a, &BpOptions::default()).unwrap();
        assert_eq!(r.iterations, 1);
        assert!(r.pm.nodes.iter().all(|q| q.values.iter().all(|&v| (v - 1.0).abs() < 1e-12)));
        assert!(r.pm.edges.iter().all(|q| q.values.iter().all(|&v| (v - 1.0).abs() < 1e-12)));
        // ∫φ_k vanishes only up to midpoint error for even k
        let want = uniform_moments(&th, 128);
        assert!(r.tau.iter().zip(&want).all(|(t, w)| (t - w).abs() < 1e-12 && t.abs() < 2e-4));
        assert!(r.q_value.abs() < 1e-12);
    }

    #[test]
    fn single_edge_matches_direct_normalization() {
        let spec = BasisSpec::new(2, 2).unwrap();
        let g = Graph::new(2, vec![(0, 1)]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let th = random_theta(spec, g.clone(), 1.5, &mut rng);
        let opts = BpOptions { grid: grid(64), tol: 1e-12, ..Default::default() };
        let r = bp_run(&th, &EdgeWeights::ones(g), &opts).unwrap();
        let direct = opts
            .grid
            .sample2(|x, y| th.log_density_unnorm(&[x, y]).unwrap().exp())
            .normalize()
            .unwrap();
        let err = r.pm.edges[0].values.iter().zip(&direct.values).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(err < 1e-10, "err {err}");
    }

    #[test]
    fn chain_marginals_match_brute_force() {
        let spec = BasisSpec::new(2, 2).unwrap();
        let g = Graph::new(3, vec![(0, 1), (1, 2)]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let th = random_theta(spec, g.clone(), 1.0, &mut rng);
        let gr = grid(32);
        let opts = BpOptions { grid: gr, tol: 1e-12, ..Default::default() };
        let r = bp_run(&th, &EdgeWeights::ones(g), &opts).unwrap();
        let p = joint3(&th, &gr);
        let n = gr.n();
        for node in 0..3 {
            for t in 0..n {
                let mut s = 0.0;
                for a in 0..n {
                    for b in 0..n {
                        let idx = match node {
                            0 => (t * n + a) * n + b,
                            1 => (a * n + t) * n + b,
                            _ => (a * n + b) * n + t,
                        };
                        s += p[idx];
                    }
                }
                // probabilities to densities
                assert!((r.pm.nodes[node].values[t] - s * n as f64).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn pseudo_moment_examples() {
        let spec = BasisSpec::new(2, 2).unwrap();
        let gr = grid(128);
        let g = Graph::new(2, vec![(0, 1)]).unwrap();
        let th = ParamVector::zeros(spec, g.clone());
        let uniform = PseudoMarginals {
            nodes: vec![GriddedFn1D::constant(gr, 1.0); 2],
            edges: vec![GriddedFn2D::constant(gr, 1.0)],
        };
        let want = uniform_moments(&th, 128);
        assert!(pseudo_moments(&uniform, &th).iter().zip(&want).all(|(t, w)| (t - w).abs() < 1e-12 && t.abs() < 2e-4));
        assert!(want[0].abs() < 1e-15 && want[1].abs() > 1e-5);

        let qi = gr.sample(|x| legendre_eval(1, x).exp()).normalize().unwrap();
        let qj = gr.sample(|x| (0.5 * x).exp()).normalize().unwrap();
        let pm = PseudoMarginals {
            nodes: vec![qi.clone(), qj.clone()],
            edges: vec![GriddedFn2D::product(&qi, &qj)],
        };
        let tau = pseudo_moments(&pm, &th);
        let oracle = qi.dot(&gr.sample(|x| legendre_eval(1, x)).values);
        assert!((tau[0] - oracle).abs() < 1e-10);
        for k in 0..2 {
            for l in 0..2 {
                assert!((tau[4 + k * 2 + l] - tau[k] * tau[2 + l]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn tree_value_equals_brute_force() {
        let spec = BasisSpec::new(2, 2).unwrap();
        let g = Graph::new(3, vec![(0, 2), (1, 2)]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let th = random_theta(spec, g.clone(), 1.0, &mut rng);
        let opts = BpOptions { grid: grid(128), tol: 1e-10, ..Default::default() };
        let r = bp_run(&th, &EdgeWeights::ones(g.clone()), &opts).unwrap();
        let z = brute_force_logz(&th, &opts.grid).unwrap();
        assert!((r.q_value - z).abs() < 5e-3, "{} vs {z}", r.q_value);
        let again = q_value(&th, &EdgeWeights::ones(g), &r.pm);
        assert!((again - r.q_value).abs() < 1e-12);
    }

    #[test]
    fn loopy_value_bounds_brute_force() {
        let spec = BasisSpec::new(2, 2).unwrap();
        let g = Graph::complete(3);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let opts = BpOptions { grid: grid(48), ..Default::default() };
        for _ in 0..5 {
            let th = random_theta(spec, g.clone(), 1.0, &mut rng);
            let a = edge_weights_init(&g, 20, &mut rng).unwrap();
            let r = bp_run(&th, &a, &opts).unwrap();
            assert!(r.q_value >= brute_force_logz(&th, &opts.grid).unwrap() - 1e-6);
        }
    }

    #[test]
    fn marginal_consistency() {
        let spec = BasisSpec::new(2, 2).unwrap();
        let g = Graph::complete(4);
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let th = random_theta(spec, g.clone(), 0.8, &mut rng);
        let a = edge_weights_init(&g, 20, &mut rng).unwrap();
        let opts = BpOptions { grid: grid(64), tol: 1e-9, ..Default::default() };
        let r = bp_run(&th, &a, &opts).unwrap();
        for (e, &(i, j)) in g.edges().iter().enumerate() {
            let mi = marginalize(&r.pm.edges[e], Axis::Second);
            let mj = marginalize(&r.pm.edges[e], Axis::First);
            for t in 0..64 {
                let (a, b) = ((mi.values[t] - r.pm.nodes[i].values[t]).abs(), (mj.values[t] - r.pm.nodes[j].values[t]).abs());
                assert!(a.max(b) < 10.0 * opts.tol, "{a} {b} after {}", r.iterations);
            }
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let spec = BasisSpec::new(2, 2).unwrap();
        let g = Graph::new(2, vec![(0, 1)]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let th = random_theta(spec, g.clone(), 1.0, &mut rng);
        let a = EdgeWeights::ones(g);
        let opts = BpOptions { grid: grid(64), tol: 1e-12, ..Default::default() };
        let r = bp_run(&th, &a, &opts).unwrap();
        let h = 1e-5;
        for c in 0..th.len() {
            let mut p = th.as_slice().to_vec();
            p[c] += h;
            let up = bp_run(&th.with_values(p.clone()).unwrap(), &a, &opts).unwrap().q_value;
            p[c] -= 2.0 * h;
            let dn = bp_run(&th.with_values(p).unwrap(), &a, &opts).unwrap().q_value;
            let fd = (up - dn) / (2.0 * h);
            assert!((fd - grad_q(&r)[c]).abs() < 1e-4, "coord {c}: {fd} vs {}", grad_q(&r)[c]);
        }
    }

    #[test]
    fn tree_gradient_equals_exact_moments() {
        let spec = BasisSpec::new(2, 1).unwrap();
        let g = Graph::new(3, vec![(0, 1), (1, 2)]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let th = random_theta(spec, g.clone(), 1.0, &mut rng);
        let gr = grid(24);
        let opts = BpOptions { grid: gr, tol: 1e-12, ..Default::default() };
        let r = bp_run(&th, &EdgeWeights::ones(g.clone()), &opts).unwrap();
        let p = joint3(&th, &gr);
        let n = gr.n();
        let mut mu = vec![0.0; th.len()];
        for a in 0..n {
            for b in 0..n {
                for c in 0..n {
                    let phi = stat_vector(&[gr.node(a), gr.node(b), gr.node(c)], &g, &spec).unwrap();
                    let pr = p[(a * n + b) * n + c];
                    mu.iter_mut().zip(&phi).for_each(|(m, f)| *m += pr * f);
                }
            }
        }
        for (t, m) in grad_q(&r).iter().zip(&mu) {
            assert!((t - m).abs() < 1e-6);
        }
    }

    #[test]
    fn brute_force_examples() {
        let gr = grid(4096);
        let spec = BasisSpec::new(1, 1).unwrap();
        assert_eq!(brute_force_logz(&ParamVector::zeros(spec, Graph::empty(2)), &gr).unwrap(), 0.0);
        // d = 1: ∫₀¹ exp(c√3(2x − 1)) dx = sinh(√3 c)/(√3 c)
        let c = 0.7;
        let mut th = ParamVector::zeros(spec, Graph::empty(1));
        th.vertex_mut(0)[0] = c;
        let s = 3f64.sqrt() * c;
        assert!((brute_force_logz(&th, &gr).unwrap() - (s.sinh() / s).ln()).abs() < 1e-6);

        let gr = grid(64);
        let spec = BasisSpec::new(2, 1).unwrap();
        let mut th = ParamVector::zeros(spec, Graph::empty(2));
        th.vertex_mut(0).copy_from_slice(&[0.3, -0.5]);
        th.vertex_mut(1).copy_from_slice(&[1.1, 0.2]);
        let z = brute_force_logz(&th, &gr).unwrap();
        let one = |v: &[f64]| {
            let mut t = ParamVector::zeros(spec, Graph::empty(1));
            t.vertex_mut(0).copy_from_slice(v);
            brute_force_logz(&t, &gr).unwrap()
        };
        assert!((z - one(&[0.3, -0.5]) - one(&[1.1, 0.2])).abs() < 1e-10);
        assert!(brute_force_logz(&ParamVector::zeros(spec, Graph::empty(5)), &gr).is_err());
    }

    #[test]
    fn zero_weight_rules() {
        let spec = BasisSpec::new(1, 1).unwrap();
        let g = Graph::complete(3);
        let mut th = ParamVector::zeros(spec, g.clone());
        th.edge_mut(0)[0] = 0.5;
        let a = EdgeWeights::new(g.clone(), vec![1.0, 0.0, 1.0]).unwrap();
        let r = bp_run(&th, &a, &BpOptions::default()).unwrap();
        assert!(r.mutual_info[1].abs() < 1e-12);
        th.edge_mut(1)[0] = 0.5;
        assert!(matches!(bp_run(&th, &a, &BpOptions::default()), Err(MrfError::InvalidWeights(_))));
    }

    #[test]
    fn non_convergence_is_reported() {
        let spec = BasisSpec::new(1, 1).unwrap();
        let g = Graph::complete(3);
        let mut th = ParamVector::zeros(spec, g.clone());
        th.edge_mut(0)[0] = 2.0;
        th.edge_mut(1)[0] = 2.0;
        th.edge_mut(2)[0] = -2.0;
        let a = EdgeWeights::new(g, vec![2.0 / 3.0; 3]).unwrap();
        let opts = BpOptions { max_iter: 1, tol: 1e-14, ..Default::default() };
        assert!(matches!(bp_run(&th, &a, &opts), Err(MrfError::BpNotConverged { iterations: 1, .. })));
    }

    #[test]
    fn jensen_over_two_trees() {
        // θ split across two spanning trees of the triangle with α = (1/2)(T1 + T2)
        let spec = BasisSpec::new(1, 1).unwrap();
        let g = Graph::complete(3);
        let mut th = ParamVector::zeros(spec, g.clone());
        th.vertex_mut(0)[0] = 0.4;
        th.vertex_mut(2)[0] = -0.3;
        th.edge_mut(0)[0] = 0.9; // (0,1), in both trees
        th.edge_mut(1)[0] = -0.7; // (0,2), tree 1
        th.edge_mut(2)[0] = 0.5; // (1,2), tree 2
        let gr = grid(32);
        let z = brute_force_logz(&th, &gr).unwrap();
        let mut t1 = th.clone();
        t1.edge_mut(1)[0] *= 2.0;
        t1.edge_mut(2)[0] = 0.0;
        let mut t2 = th.clone();
        t2.edge_mut(2)[0] *= 2.0;
        t2.edge_mut(1)[0] = 0.0;
        let bound = 0.5 * brute_force_logz(&t1, &gr).unwrap() + 0.5 * brute_force_logz(&t2, &gr).unwrap();
        assert!(z <= bound + 1e-12);
    }
}
