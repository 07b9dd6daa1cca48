//! Regularized score matching for pairwise exponential-series models on
//! `[0, 1]^d`, and its Gaussian special case.
//!
//! With the boundary weight `h(x) = x(1 − x)` the Hyvärinen score of the model
//! is quadratic in `θ`:
//!
//! `½ Σ_i θ_{·,i}ᵀ Γ̂_i θ_{·,i} + K̂ᵀθ`
//!
//! where `θ_{·,i}` collects every parameter block touching node `i` (its
//! vertex block, then its edge blocks in neighbor order), `Γ̂_i` averages
//! `a_i a_iᵀ` with `a_i = h(x_i) ∂_i φ`, and `K̂` averages
//! `2h h′ ∂_i φ + h² ∂²_i φ` summed over both endpoints of each edge.
//! Penalties are weighted group norms over vertex and edge blocks.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::basis::{check_unit_interval, BasisSpec, LegendreTable};
use crate::datagen::DataMatrix;
use crate::error::{MrfError, Result};
use crate::graphmodel::{dot, edge_range, norm2, vertex_range, Graph, ParamVector};
use crate::optim::{reg_path, FitOutcome, PathResult};

/// Quadratic score-matching statistics with per-node blocks.
#[derive(Debug, Clone)]
pub struct ScoreStats {
    spec: BasisSpec,
    graph: Graph,
    n: usize,
    /// Global parameter indices of `θ_{·,i}`.
    cols: Vec<Vec<usize>>,
    gamma: Vec<DMatrix<f64>>,
    /// Linear term contributed by derivatives in `x_i` alone.
    k_local: Vec<DVector<f64>>,
    k_hat: Vec<f64>,
    pub vertex_weight: f64,
    pub edge_weight: f64,
}

fn node_columns(spec: &BasisSpec, graph: &Graph, i: usize) -> Vec<usize> {
    let mut c: Vec<usize> = vertex_range(spec, i).collect();
    for &(_, e) in graph.neighbors(i) {
        c.extend(edge_range(spec, graph.d(), e));
    }
    c
}

/// Bounded-support score statistics of the data under the Legendre family.
pub fn score_stats(data: &DataMatrix, graph: &Graph, spec: &BasisSpec) -> Result<ScoreStats> {
    let (n, d) = (data.n(), data.d());
    if d != graph.d() {
        return Err(MrfError::Dimension(format!("data has {d} columns, graph has {} nodes", graph.d())));
    }
    if n == 0 {
        return Err(MrfError::InvalidArgument("no data rows".into()));
    }
    for r in 0..n {
        for (c, &x) in data.row(r).iter().enumerate() {
            check_unit_interval(x, || format!("row {r}, column {c}"))?;
        }
    }
    let kmax = spec.max_degree();
    let tables: Vec<LegendreTable> = data
        .values()
        .par_iter()
        .map(|&x| {
            let mut t = LegendreTable::with_degree(kmax);
            t.fill(x);
            t
        })
        .collect();
    let (m1, m2) = (spec.m1, spec.m2);
    let cols: Vec<Vec<usize>> = (0..d).map(|i| node_columns(spec, graph, i)).collect();
    let per_node: Vec<(DMatrix<f64>, DVector<f64>)> = (0..d)
        .into_par_iter()
        .map(|i| {
            let p = cols[i].len();
            let mut a = DMatrix::<f64>::zeros(n, p);
            let mut k = DVector::<f64>::zeros(p);
            for r in 0..n {
                let x = data.row(r)[i];
                let h = x * (1.0 - x);
                let c1 = 2.0 * h * (1.0 - 2.0 * x);
                let c2 = h * h;
                let ti = &tables[r * d + i];
                for kk in 0..m1 {
                    a[(r, kk)] = h * ti.d1[kk + 1];
                    k[kk] += c1 * ti.d1[kk + 1] + c2 * ti.d2[kk + 1];
                }
                let mut off = m1;
                for &(j, _) in graph.neighbors(i) {
                    let tj = &tables[r * d + j];
                    for u in 0..m2 {
                        for v in 0..m2 {
                            // entry (u, v) pairs φ_u of the lower node with φ_v of the higher
                            let (own, other) = if i < j { (u, v) } else { (v, u) };
                            let f = tj.value[other + 1];
                            let idx = off + u * m2 + v;
                            a[(r, idx)] = h * ti.d1[own + 1] * f;
                            k[idx] += (c1 * ti.d1[own + 1] + c2 * ti.d2[own + 1]) * f;
                        }
                    }
                    off += m2 * m2;
                }
            }
            let g = a.tr_mul(&a) / n as f64;
            (g, k / n as f64)
        })
        .collect();
    let mut k_hat = vec![0.0; spec.n_stats(d, graph.n_edges())];
    let mut gamma = Vec::with_capacity(d);
    let mut k_local = Vec::with_capacity(d);
    for (i, (g, k)) in per_node.into_iter().enumerate() {
        for (a, &c) in cols[i].iter().enumerate() {
            k_hat[c] += k[a];
        }
        gamma.push(g);
        k_local.push(k);
    }
    Ok(ScoreStats {
        spec: *spec,
        graph: graph.clone(),
        n,
        cols,
        gamma,
        k_local,
        k_hat,
        vertex_weight: 1.0,
        edge_weight: 1.0,
    })
}

/// Uncentered second moments `(1/n) Σ x xᵀ`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussStats {
    pub sigma_hat: DMatrix<f64>,
    pub n: usize,
}

pub fn gauss_stats(data: &DataMatrix) -> GaussStats {
    let x = DMatrix::from_row_slice(data.n(), data.d(), data.values());
    let n = data.n().max(1);
    GaussStats { sigma_hat: x.tr_mul(&x) / n as f64, n: data.n() }
}

impl ScoreStats {
    /// Gaussian score matching as a pairwise model with one coefficient per
    /// group: vertex `i` holds `Ω_ii`, edge `(i, j)` holds `Ω_ij`. The edge
    /// weight 2 makes the penalty equal `‖Ω‖₁`; `penalize_diagonal = false`
    /// drops the diagonal from it.
    pub fn gaussian(gs: &GaussStats, penalize_diagonal: bool) -> Result<Self> {
        let s = &gs.sigma_hat;
        let d = s.nrows();
        if s.ncols() != d {
            return Err(MrfError::Dimension("second-moment matrix is not square".into()));
        }
        let spec = BasisSpec::new(1, 1)?;
        let graph = Graph::complete(d);
        let cols: Vec<Vec<usize>> = (0..d).map(|i| node_columns(&spec, &graph, i)).collect();
        let mut gamma = Vec::with_capacity(d);
        let mut k_local = Vec::with_capacity(d);
        for i in 0..d {
            let rows: Vec<usize> = std::iter::once(i).chain(graph.neighbors(i).iter().map(|&(j, _)| j)).collect();
            gamma.push(DMatrix::from_fn(d, d, |a, b| s[(rows[a], rows[b])]));
            let mut k = DVector::zeros(d);
            k[0] = -1.0;
            k_local.push(k);
        }
        let mut k_hat = vec![0.0; spec.n_stats(d, graph.n_edges())];
        k_hat[..d].iter_mut().for_each(|v| *v = -1.0);
        Ok(Self {
            spec,
            graph,
            n: gs.n,
            cols,
            gamma,
            k_local,
            k_hat,
            vertex_weight: if penalize_diagonal { 1.0 } else { 0.0 },
            edge_weight: 2.0,
        })
    }

    pub fn spec(&self) -> &BasisSpec {
        &self.spec
    }

    pub fn graph(&self) -> &Graph {
        &self.graph
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn gamma(&self, i: usize) -> &DMatrix<f64> {
        &self.gamma[i]
    }

    pub fn columns(&self, i: usize) -> &[usize] {
        &self.cols[i]
    }

    pub fn k_hat(&self) -> &[f64] {
        &self.k_hat
    }

    pub fn zeros(&self) -> ParamVector {
        ParamVector::zeros(self.spec, self.graph.clone())
    }

    /// Replaces `K̂` (and the per-node split) by `K̂ + c`, assigning each shift to
    /// the first node holding that coordinate.
    pub fn shifted(&self, c: &[f64]) -> Self {
        let mut out = self.clone();
        let mut done = vec![false; c.len()];
        for i in 0..out.cols.len() {
            for (a, &g) in out.cols[i].iter().enumerate() {
                if !done[g] {
                    out.k_local[i][a] += c[g];
                    done[g] = true;
                }
            }
        }
        out.k_hat.iter_mut().zip(c).for_each(|(k, s)| *k += s);
        out
    }

    /// Penalized groups and their weights: vertex blocks then edge blocks.
    fn groups(&self) -> Vec<(std::ops::Range<usize>, f64)> {
        let d = self.graph.d();
        let mut g: Vec<_> = (0..d).map(|i| (vertex_range(&self.spec, i), self.vertex_weight)).collect();
        g.extend((0..self.graph.n_edges()).map(|e| (edge_range(&self.spec, d, e), self.edge_weight)));
        g
    }

    pub fn penalty(&self, theta: &[f64]) -> f64 {
        self.groups().into_iter().map(|(r, w)| w * norm2(&theta[r])).sum()
    }

    fn local(&self, i: usize, theta: &[f64]) -> DVector<f64> {
        DVector::from_iterator(self.cols[i].len(), self.cols[i].iter().map(|&c| theta[c]))
    }

    /// Unpenalized quadratic `½ Σ θ_iᵀΓ̂_iθ_i + K̂ᵀθ`.
    pub fn smooth_value(&self, theta: &[f64]) -> f64 {
        let quad: f64 = (0..self.cols.len())
            .map(|i| {
                let t = self.local(i, theta);
                0.5 * t.dot(&(&self.gamma[i] * &t))
            })
            .sum();
        quad + dot(&self.k_hat, theta)
    }

    pub fn smooth_grad(&self, theta: &[f64]) -> Vec<f64> {
        let mut g = self.k_hat.clone();
        for i in 0..self.cols.len() {
            let gi = &self.gamma[i] * self.local(i, theta);
            for (a, &c) in self.cols[i].iter().enumerate() {
                g[c] += gi[a];
            }
        }
        g
    }

    /// Solution at very large `λ`: unpenalized vertex blocks solved, all else zero.
    pub fn base_solution(&self) -> ParamVector {
        let mut theta = self.zeros();
        if self.vertex_weight > 0.0 {
            return theta;
        }
        let m1 = self.spec.m1;
        for i in 0..self.graph.d() {
            let g = self.gamma[i].view((0, 0), (m1, m1)).into_owned();
            let k = self.k_local[i].rows(0, m1).into_owned();
            let sol = g
                .clone()
                .cholesky()
                .map(|c| c.solve(&(-&k)))
                .unwrap_or_else(|| g.pseudo_inverse(1e-12).expect("svd") * (-&k));
            theta.vertex_mut(i).copy_from_slice(sol.as_slice());
        }
        theta
    }
}

/// `½ Σ θ_iᵀΓ̂_iθ_i + K̂ᵀθ + λ Σ_g w_g ‖θ_g‖`.
pub fn sm_objective(theta: &ParamVector, stats: &ScoreStats, lambda: f64) -> f64 {
    stats.smooth_value(theta.as_slice()) + lambda * stats.penalty(theta.as_slice())
}

/// Held-out score: the quadratic without penalty.
pub fn heldout_hyvarinen(theta: &ParamVector, heldout: &ScoreStats) -> f64 {
    heldout.smooth_value(theta.as_slice())
}

/// Smallest `λ` at which [`ScoreStats::base_solution`] is optimal.
pub fn lambda_start_quasr(stats: &ScoreStats) -> f64 {
    let base = stats.base_solution();
    let g = stats.smooth_grad(base.as_slice());
    stats
        .groups()
        .into_iter()
        .filter(|(_, w)| *w > 0.0)
        .map(|(r, w)| norm2(&g[r]) / w)
        .fold(0.0, f64::max)
}

/// Cached `(Γ̂_i + ρI)⁻¹` for every node.
#[derive(Debug, Clone)]
pub struct FactorCache {
    pub rho: f64,
    pub inv: Vec<DMatrix<f64>>,
}

pub fn factor_cache(stats: &ScoreStats, rho: f64) -> Result<FactorCache> {
    if !(rho > 0.0) {
        return Err(MrfError::InvalidArgument(format!("rho must be positive, got {rho}")));
    }
    let inv = stats
        .gamma
        .par_iter()
        .map(|g| {
            let eig = g.clone().symmetric_eigen();
            let scaled = DMatrix::from_fn(g.nrows(), g.ncols(), |a, b| {
                eig.eigenvectors[(a, b)] / (eig.eigenvalues[b].max(0.0) + rho)
            });
            scaled * eig.eigenvectors.transpose()
        })
        .collect();
    Ok(FactorCache { rho, inv })
}

/// Inverse of a symmetric matrix whose leading block inverse is known, via the
/// Schur complement of the new rows.
pub fn extend_inverse(old_inv: &DMatrix<f64>, full: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let k = old_inv.nrows();
    let p = full.nrows();
    if k > p || full.ncols() != p {
        return Err(MrfError::Dimension("extended matrix smaller than cached block".into()));
    }
    let b = full.view((0, k), (k, p - k)).into_owned();
    let c = full.view((k, k), (p - k, p - k)).into_owned();
    let ainv_b = old_inv * &b;
    let schur = c - b.transpose() * &ainv_b;
    let s_inv = schur
        .try_inverse()
        .ok_or_else(|| MrfError::NotPositiveDefinite("Schur complement is singular".into()))?;
    let top_right = -(&ainv_b * &s_inv);
    let top_left = old_inv + &ainv_b * &s_inv * ainv_b.transpose();
    let mut out = DMatrix::zeros(p, p);
    out.view_mut((0, 0), (k, k)).copy_from(&top_left);
    out.view_mut((0, k), (k, p - k)).copy_from(&top_right);
    out.view_mut((k, 0), (p - k, k)).copy_from(&top_right.transpose());
    out.view_mut((k, k), (p - k, p - k)).copy_from(&s_inv);
    Ok(out)
}

/// Grows a cache to new statistics. `old_positions[i][a]` is where old local
/// coordinate `a` of node `i` sits among the new local coordinates; the old
/// block is reused without refactorizing.
pub fn extend_factor_cache(old: &FactorCache, stats: &ScoreStats, old_positions: &[Vec<usize>]) -> Result<FactorCache> {
    if old_positions.len() != stats.gamma.len() || old.inv.len() != stats.gamma.len() {
        return Err(MrfError::Dimension("node count differs between caches".into()));
    }
    let inv = (0..stats.gamma.len())
        .map(|i| {
            let g = &stats.gamma[i];
            let p = g.nrows();
            let pos = &old_positions[i];
            let mut seen = vec![false; p];
            for &q in pos {
                if q >= p || std::mem::replace(&mut seen[q], true) {
                    return Err(MrfError::InvalidArgument(format!("bad coordinate map for node {i}")));
                }
            }
            // permutation putting the old coordinates first
            let order: Vec<usize> = pos.iter().copied().chain((0..p).filter(|q| !seen[*q])).collect();
            let full = DMatrix::from_fn(p, p, |a, b| g[(order[a], order[b])] + if a == b { old.rho } else { 0.0 });
            let perm_inv = extend_inverse(&old.inv[i], &full)?;
            let mut out = DMatrix::zeros(p, p);
            for a in 0..p {
                for b in 0..p {
                    out[(order[a], order[b])] = perm_inv[(a, b)];
                }
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;
    Ok(FactorCache { rho: old.rho, inv })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdmmOptions {
    pub rho: f64,
    /// Relative change and relative consensus residual thresholds.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for AdmmOptions {
    fn default() -> Self {
        Self { rho: 1.0, tol: 1e-4, max_iter: 20000 }
    }
}

/// Local copies, scaled duals and consensus variable; reusable as a warm start.
#[derive(Debug, Clone)]
pub struct AdmmState {
    pub local: Vec<DVector<f64>>,
    pub dual: Vec<DVector<f64>>,
    pub z: Vec<f64>,
}

impl AdmmState {
    pub fn zeros(stats: &ScoreStats) -> Self {
        let local: Vec<DVector<f64>> = stats.cols.iter().map(|c| DVector::zeros(c.len())).collect();
        Self { dual: local.clone(), local, z: vec![0.0; stats.k_hat.len()] }
    }
}

#[derive(Debug, Clone)]
pub struct AdmmResult {
    pub theta: ParamVector,
    pub iterations: usize,
    /// `max ‖θ_copy − z‖` over coordinates at exit.
    pub primal_residual: f64,
    pub state: AdmmState,
}

/// Consensus ADMM from zeros.
pub fn admm_fit(stats: &ScoreStats, lambda: f64, opts: &AdmmOptions) -> Result<AdmmResult> {
    let cache = factor_cache(stats, opts.rho)?;
    admm_fit_with(stats, lambda, opts, &cache, None)
}

/// Consensus ADMM with a prepared factor cache and optional warm start.
///
/// Each node solves its own ridge system; each group's consensus value is the
/// shrunken average of its copies; duals then ascend on the disagreement.
/// When `λ` is at or above [`lambda_start_quasr`] the closed-form base
/// solution is returned.
pub fn admm_fit_with(
    stats: &ScoreStats,
    lambda: f64,
    opts: &AdmmOptions,
    cache: &FactorCache,
    warm: Option<&AdmmState>,
) -> Result<AdmmResult> {
    if !(lambda >= 0.0) {
        return Err(MrfError::InvalidArgument(format!("lambda must be nonnegative, got {lambda}")));
    }
    if (cache.rho - opts.rho).abs() > 0.0 || cache.inv.len() != stats.cols.len() {
        return Err(MrfError::InvalidArgument("factor cache does not match rho or statistics".into()));
    }
    if lambda >= lambda_start_quasr(stats) {
        let theta = stats.base_solution();
        let mut state = AdmmState::zeros(stats);
        state.z = theta.as_slice().to_vec();
        for (i, c) in stats.cols.iter().enumerate() {
            state.local[i] = DVector::from_iterator(c.len(), c.iter().map(|&g| state.z[g]));
        }
        return Ok(AdmmResult { theta, iterations: 0, primal_residual: 0.0, state });
    }
    let rho = opts.rho;
    let mut state = warm.cloned().unwrap_or_else(|| AdmmState::zeros(stats));
    // copies of every global coordinate: (node, local index)
    let mut copies: Vec<Vec<(usize, usize)>> = vec![Vec::new(); stats.k_hat.len()];
    for (i, c) in stats.cols.iter().enumerate() {
        for (a, &g) in c.iter().enumerate() {
            copies[g].push((i, a));
        }
    }
    let groups = stats.groups();
    let mut iterations = 0;
    let mut primal = f64::INFINITY;
    let mut rel = f64::INFINITY;
    while iterations < opts.max_iter {
        iterations += 1;
        let new_local: Vec<DVector<f64>> = (0..stats.cols.len())
            .into_par_iter()
            .map(|i| {
                let zi = DVector::from_iterator(stats.cols[i].len(), stats.cols[i].iter().map(|&g| state.z[g]));
                let rhs = -&stats.k_local[i] - &state.dual[i] + zi * rho;
                &cache.inv[i] * rhs
            })
            .collect();
        let (mut num, mut den) = (0.0, 0.0);
        for (a, b) in new_local.iter().zip(&state.local) {
            num += (a - b).abs().sum();
            den += a.abs().sum();
        }
        state.local = new_local;

        for (r, w) in &groups {
            let c = copies[r.start].len() as f64;
            let avg: Vec<f64> = r
                .clone()
                .map(|g| copies[g].iter().map(|&(i, a)| state.local[i][a] + state.dual[i][a] / rho).sum::<f64>() / c)
                .collect();
            let nb = norm2(&avg);
            let t = w * lambda / (c * rho);
            let f = if nb <= t { 0.0 } else { 1.0 - t / nb };
            for (g, v) in r.clone().zip(avg) {
                state.z[g] = f * v;
            }
        }

        let mut res_sum = 0.0;
        let mut res_max: f64 = 0.0;
        for (i, c) in stats.cols.iter().enumerate() {
            for (a, &g) in c.iter().enumerate() {
                let diff = state.local[i][a] - state.z[g];
                state.dual[i][a] += rho * diff;
                res_sum += diff.abs();
                res_max = res_max.max(diff.abs());
            }
        }
        primal = res_max;
        let zsum: f64 = state.z.iter().map(|v| v.abs()).sum();
        rel = if den > 0.0 { num / den } else if num == 0.0 { 0.0 } else { f64::INFINITY };
        let rel_res = if zsum > 0.0 { res_sum / zsum } else { res_sum };
        if rel < opts.tol && rel_res < opts.tol {
            let theta = ParamVector::from_vec(stats.spec, stats.graph.clone(), state.z.clone())?;
            return Ok(AdmmResult { theta, iterations, primal_residual: primal, state });
        }
    }
    Err(MrfError::NotConverged { solver: "consensus ADMM", iterations, residual: primal.max(rel) })
}

/// `½ tr(ΩΣ̂Ω) − tr(Ω) + λ‖Ω‖₁` (diagonal optionally unpenalized).
pub fn gauss_objective(omega: &DMatrix<f64>, sigma_hat: &DMatrix<f64>, lambda: f64, penalize_diagonal: bool) -> f64 {
    let d = omega.nrows();
    let quad = 0.5 * (omega * sigma_hat * omega).trace() - omega.trace();
    let mut pen = 0.0;
    for i in 0..d {
        for j in 0..d {
            if i != j || penalize_diagonal {
                pen += omega[(i, j)].abs();
            }
        }
    }
    quad + lambda * pen
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CdOptions {
    pub tol: f64,
    /// Maximum number of full sweeps.
    pub max_iter: usize,
    pub penalize_diagonal: bool,
}

impl Default for CdOptions {
    fn default() -> Self {
        Self { tol: 1e-8, max_iter: 10000, penalize_diagonal: true }
    }
}

#[derive(Debug, Clone)]
pub struct CdResult {
    pub omega: DMatrix<f64>,
    pub sweeps: usize,
    pub max_change: f64,
}

pub fn soft_threshold(x: f64, t: f64) -> f64 {
    x.signum() * (x.abs() - t).max(0.0)
}

/// Coordinate descent from `Ω = I`.
pub fn gauss_cd_fit(sigma_hat: &DMatrix<f64>, lambda: f64, opts: &CdOptions) -> Result<CdResult> {
    gauss_cd_fit_from(sigma_hat, lambda, &DMatrix::identity(sigma_hat.nrows(), sigma_hat.nrows()), opts)
}

/// Exact cyclic coordinate minimization over `Ω_ij = Ω_ji`, `i ≤ j` in
/// lexicographic order. Positive definiteness is not enforced. At or above
/// [`lambda_start_gauss`] the base solution is returned without sweeping.
pub fn gauss_cd_fit_from(sigma_hat: &DMatrix<f64>, lambda: f64, init: &DMatrix<f64>, opts: &CdOptions) -> Result<CdResult> {
    let d = sigma_hat.nrows();
    if sigma_hat.ncols() != d || init.nrows() != d || init.ncols() != d {
        return Err(MrfError::Dimension("Σ̂ and initial Ω must be square and the same size".into()));
    }
    if let Some(i) = (0..d).find(|&i| !(sigma_hat[(i, i)] > 0.0)) {
        return Err(MrfError::DegenerateFunction(format!("Σ̂ has nonpositive diagonal entry at {i}")));
    }
    if !(lambda >= 0.0) {
        return Err(MrfError::InvalidArgument(format!("lambda must be nonnegative, got {lambda}")));
    }
    let s = sigma_hat;
    // closed form at or above the zero threshold, so ties do not hinge on rounding
    if lambda >= lambda_start_gauss(s, opts.penalize_diagonal)? {
        let stats = ScoreStats::gaussian(&GaussStats { sigma_hat: s.clone(), n: 0 }, opts.penalize_diagonal)?;
        return Ok(CdResult { omega: param_to_omega(&stats.base_solution())?, sweeps: 0, max_change: 0.0 });
    }
    let mut omega = init.clone();
    // w = Σ̂ Ω, maintained incrementally
    let mut w = s * &omega;
    let mut sweeps = 0;
    let mut max_change = f64::INFINITY;
    while sweeps < opts.max_iter {
        sweeps += 1;
        max_change = 0.0;
        for i in 0..d {
            for j in i..d {
                let denom = s[(i, i)] + s[(j, j)];
                let cur = omega[(i, j)];
                let new = if i == j {
                    let r = w[(i, i)] - s[(i, i)] * cur;
                    let t = if opts.penalize_diagonal { lambda } else { 0.0 };
                    soft_threshold(1.0 - r, t) / s[(i, i)]
                } else {
                    let r = w[(i, j)] + w[(j, i)] - denom * cur;
                    soft_threshold(-r, 2.0 * lambda) / denom
                };
                let delta = new - cur;
                if delta != 0.0 {
                    omega[(i, j)] = new;
                    if i != j {
                        omega[(j, i)] = new;
                    }
                    for k in 0..d {
                        w[(k, j)] += s[(k, i)] * delta;
                        if i != j {
                            w[(k, i)] += s[(k, j)] * delta;
                        }
                    }
                }
                max_change = max_change.max(delta.abs());
            }
        }
        if max_change < opts.tol {
            return Ok(CdResult { omega, sweeps, max_change });
        }
    }
    Err(MrfError::NotConverged { solver: "coordinate descent", iterations: sweeps, residual: max_change })
}

/// Precision matrix as parameters (`m1 = m2 = 1` on the complete graph).
pub fn omega_to_param(omega: &DMatrix<f64>) -> ParamVector {
    let d = omega.nrows();
    let graph = Graph::complete(d);
    let mut v: Vec<f64> = (0..d).map(|i| omega[(i, i)]).collect();
    v.extend(graph.edges().iter().map(|&(i, j)| omega[(i, j)]));
    ParamVector::from_vec(BasisSpec { m1: 1, m2: 1 }, graph, v).expect("layout")
}

/// Inverse of [`omega_to_param`]; missing edges read as zero.
pub fn param_to_omega(theta: &ParamVector) -> Result<DMatrix<f64>> {
    if theta.spec().m1 != 1 || theta.spec().m2 != 1 {
        return Err(MrfError::InvalidArgument("Gaussian parameters need m1 = m2 = 1".into()));
    }
    let d = theta.graph().d();
    let mut om = DMatrix::zeros(d, d);
    for i in 0..d {
        om[(i, i)] = theta.vertex(i)[0];
    }
    for (e, &(i, j)) in theta.graph().edges().iter().enumerate() {
        om[(i, j)] = theta.edge(e)[0];
        om[(j, i)] = theta.edge(e)[0];
    }
    Ok(om)
}

/// ADMM along a decreasing `λ` path, sharing one factor cache and carrying
/// local copies and duals from each fit into the next.
pub fn quasr_path(stats: &ScoreStats, lambdas: &[f64], opts: &AdmmOptions) -> Result<PathResult> {
    let cache = factor_cache(stats, opts.rho)?;
    let mut warm: Option<AdmmState> = None;
    reg_path(lambdas, &stats.base_solution(), |lambda, _| {
        let r = admm_fit_with(stats, lambda, opts, &cache, warm.as_ref())?;
        let objective = sm_objective(&r.theta, stats, lambda);
        warm = Some(r.state);
        Ok(FitOutcome { theta: r.theta, iterations: r.iterations, objective })
    })
}

/// Coordinate descent along a decreasing `λ` path, each fit starting from the
/// previous precision matrix. Fits are stored via [`omega_to_param`].
pub fn gauss_cd_path(sigma_hat: &DMatrix<f64>, lambdas: &[f64], opts: &CdOptions) -> Result<PathResult> {
    let d = sigma_hat.nrows();
    let init = omega_to_param(&DMatrix::identity(d, d));
    reg_path(lambdas, &init, |lambda, warm| {
        let r = gauss_cd_fit_from(sigma_hat, lambda, &param_to_omega(warm)?, opts)?;
        let objective = gauss_objective(&r.omega, sigma_hat, lambda, opts.penalize_diagonal);
        Ok(FitOutcome { theta: omega_to_param(&r.omega), iterations: r.sweeps, objective })
    })
}

/// Smallest `λ` at which the Gaussian solution is its base solution: zero,
/// or diagonal when the diagonal is unpenalized.
pub fn lambda_start_gauss(sigma_hat: &DMatrix<f64>, penalize_diagonal: bool) -> Result<f64> {
    let gs = GaussStats { sigma_hat: sigma_hat.clone(), n: 0 };
    Ok(lambda_start_quasr(&ScoreStats::gaussian(&gs, penalize_diagonal)?))
}
