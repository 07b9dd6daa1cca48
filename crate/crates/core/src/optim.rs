//! Proximal gradient solvers for smooth losses plus a weighted group-lasso
//! penalty, and the variational maximum-likelihood driver built on them.

use std::ops::Range;
use std::sync::Mutex;

use rayon::prelude::*;

use crate::basis::{stat_vector_into, BasisSpec};
use crate::datagen::DataMatrix;
use crate::error::{MrfError, Result};
use crate::graphmodel::{dot, edge_range, norm2, Graph, ParamVector};
use crate::gridfn::{log_integral_exp, Grid1D};
use crate::spantree::EdgeWeights;
use crate::trw::{bp_run_from, BasisGrid, BpOptions, Messages};

/// Differentiable part of a composite objective.
pub trait SmoothLoss: Sync {
    fn value_grad(&self, theta: &[f64]) -> Result<(f64, Vec<f64>)>;
}

/// Penalized coordinate groups with their weights; coordinates outside every
/// group are unpenalized.
#[derive(Debug, Clone, PartialEq)]
pub struct Groups {
    pub groups: Vec<(Range<usize>, f64)>,
}

impl Groups {
    /// Every edge block with weight 1, vertex blocks free.
    pub fn edge_blocks(spec: &BasisSpec, graph: &Graph) -> Self {
        let groups = (0..graph.n_edges()).map(|e| (edge_range(spec, graph.d(), e), 1.0)).collect();
        Self { groups }
    }

    pub fn penalty(&self, theta: &[f64]) -> f64 {
        self.groups.iter().map(|(r, w)| w * norm2(&theta[r.clone()])).sum()
    }

    /// Blockwise shrinkage `b ↦ (1 − κ w / ‖b‖)₊ b`; shrunk blocks become exact zeros.
    pub fn prox(&self, v: &[f64], kappa: f64) -> Vec<f64> {
        let mut out = v.to_vec();
        for (r, w) in &self.groups {
            let b = &mut out[r.clone()];
            let nb = norm2(b);
            let t = kappa * w;
            if nb <= t {
                b.iter_mut().for_each(|x| *x = 0.0);
            } else if t > 0.0 {
                let f = 1.0 - t / nb;
                b.iter_mut().for_each(|x| *x *= f);
            }
        }
        out
    }

    pub fn n_active(&self, theta: &[f64]) -> usize {
        self.groups.iter().filter(|(r, _)| theta[r.clone()].iter().any(|&x| x != 0.0)).count()
    }
}

/// Group soft-thresholding of the edge blocks of `v`; vertex blocks pass through.
pub fn prox_group(v: &ParamVector, kappa: f64) -> ParamVector {
    let groups = Groups::edge_blocks(v.spec(), v.graph());
    v.with_values(groups.prox(v.as_slice(), kappa)).expect("same layout")
}

/// Largest violation of the first-order conditions of `f + λ Σ w_g ‖θ_g‖`.
pub fn kkt_residual(grad: &[f64], theta: &[f64], groups: &Groups, lambda: f64) -> f64 {
    let mut penalized = vec![false; theta.len()];
    let mut worst: f64 = 0.0;
    for (r, w) in &groups.groups {
        r.clone().for_each(|k| penalized[k] = true);
        let g = &grad[r.clone()];
        let th = &theta[r.clone()];
        let nt = norm2(th);
        let res = if nt == 0.0 {
            (norm2(g) - lambda * w).max(0.0)
        } else {
            let s: Vec<f64> = g.iter().zip(th).map(|(a, b)| a + lambda * w * b / nt).collect();
            norm2(&s)
        };
        worst = worst.max(res);
    }
    for (k, &p) in penalized.iter().enumerate() {
        if !p {
            worst = worst.max(grad[k].abs());
        }
    }
    worst
}

pub const L_MIN: f64 = 1e-8;
pub const L_MAX: f64 = 1e12;

/// Secant estimate `⟨Δθ, Δ∇f⟩ / ‖Δθ‖²` of the local curvature, clamped to
/// `[L_MIN, L_MAX]`; `fallback` when the displacement vanishes.
pub fn secant_l0(theta_t: &[f64], theta_prev: &[f64], grad_t: &[f64], grad_prev: &[f64], fallback: f64) -> f64 {
    let dt: Vec<f64> = theta_t.iter().zip(theta_prev).map(|(a, b)| a - b).collect();
    let dg: Vec<f64> = grad_t.iter().zip(grad_prev).map(|(a, b)| a - b).collect();
    let nn = dot(&dt, &dt);
    if nn == 0.0 {
        return fallback;
    }
    let l = dot(&dt, &dg) / nn;
    if l.is_nan() {
        return fallback;
    }
    l.clamp(L_MIN, L_MAX)
}

/// Next FISTA momentum coefficient.
pub fn fista_next_a(a: f64) -> f64 {
    (1.0 + (1.0 + 4.0 * a * a).sqrt()) / 2.0
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    pub max_iter: usize,
    /// Stop once the objective improves by less than this.
    pub obj_tol: f64,
    pub l0: f64,
    pub delta: f64,
    pub max_backtracks: usize,
    pub secant: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self { max_iter: 1000, obj_tol: 1e-4, l0: 1.0, delta: 2.0, max_backtracks: 60, secant: true }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Solver {
    Ista,
    #[default]
    Fista,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterRecord {
    pub iteration: usize,
    pub objective: f64,
    pub l: f64,
    pub active_groups: usize,
}

#[derive(Debug, Clone)]
pub struct SolveOutcome {
    pub theta: Vec<f64>,
    pub objective: f64,
    pub grad: Vec<f64>,
    pub iterations: usize,
    pub history: Vec<IterRecord>,
}

struct Composite<'a, L: SmoothLoss + ?Sized> {
    loss: &'a L,
    groups: &'a Groups,
    lambda: f64,
}

impl<L: SmoothLoss + ?Sized> Composite<'_, L> {
    fn objective(&self, f: f64, theta: &[f64]) -> f64 {
        f + self.lambda * self.groups.penalty(theta)
    }

    /// Backtracking proximal step from `y`. Loss failures at a trial point
    /// count as a failed sufficient-decrease test.
    #[allow(clippy::type_complexity)]
    fn step(&self, y: &[f64], fy: f64, gy: &[f64], l0: f64, opts: &SolverOptions) -> Result<(Vec<f64>, f64, Vec<f64>, f64)> {
        let mut l = l0;
        let mut last_err = String::from("sufficient decrease never held");
        for _ in 0..=opts.max_backtracks {
            let v: Vec<f64> = y.iter().zip(gy).map(|(a, g)| a - g / l).collect();
            let p = self.groups.prox(&v, self.lambda / l);
            match self.loss.value_grad(&p) {
                Ok((fp, gp)) => {
                    let diff: Vec<f64> = p.iter().zip(y).map(|(a, b)| a - b).collect();
                    let model = fy + dot(&diff, gy) + 0.5 * l * dot(&diff, &diff);
                    if fp <= model + 1e-12 * fy.abs().max(1.0) {
                        return Ok((p, fp, gp, l));
                    }
                }
                Err(e) if e.is_numerical() => last_err = e.to_string(),
                Err(e) => return Err(e),
            }
            l *= opts.delta;
        }
        Err(MrfError::StepFailure { backtracks: opts.max_backtracks, reason: last_err })
    }
}

/// Proximal gradient descent with backtracking. The objective sequence is
/// non-increasing.
pub fn ista<L: SmoothLoss + ?Sized>(
    loss: &L,
    groups: &Groups,
    lambda: f64,
    theta0: &[f64],
    opts: &SolverOptions,
) -> Result<SolveOutcome> {
    let prob = Composite { loss, groups, lambda };
    let mut theta = theta0.to_vec();
    let (mut f, mut g) = loss.value_grad(&theta)?;
    let mut obj = prob.objective(f, &theta);
    let mut l = opts.l0;
    let mut prev: Option<(Vec<f64>, Vec<f64>)> = None;
    let mut history = vec![IterRecord { iteration: 0, objective: obj, l, active_groups: groups.n_active(&theta) }];
    let mut iterations = 0;
    while iterations < opts.max_iter {
        iterations += 1;
        let l0 = match (&prev, opts.secant) {
            (Some((tp, gp)), true) => secant_l0(&theta, tp, &g, gp, l),
            _ => l,
        };
        let (p, fp, gp, lp) = prob.step(&theta, f, &g, l0, opts)?;
        let new_obj = prob.objective(fp, &p);
        l = lp;
        if new_obj > obj {
            // rounding only; keep the sequence monotone
            break;
        }
        let improvement = obj - new_obj;
        prev = Some((std::mem::replace(&mut theta, p), std::mem::replace(&mut g, gp)));
        f = fp;
        obj = new_obj;
        history.push(IterRecord { iteration: iterations, objective: obj, l, active_groups: groups.n_active(&theta) });
        if improvement < opts.obj_tol {
            break;
        }
    }
    Ok(SolveOutcome { theta, objective: obj, grad: g, iterations, history })
}

/// Accelerated proximal gradient (`a₁ = 1`) with backtracking; returns the
/// best iterate seen.
pub fn fista<L: SmoothLoss + ?Sized>(
    loss: &L,
    groups: &Groups,
    lambda: f64,
    theta0: &[f64],
    opts: &SolverOptions,
) -> Result<SolveOutcome> {
    let prob = Composite { loss, groups, lambda };
    let mut theta = theta0.to_vec();
    let (f0, g0) = loss.value_grad(&theta)?;
    let mut obj = prob.objective(f0, &theta);
    let mut best = (theta.clone(), obj, g0.clone());
    let mut y = theta.clone();
    let (mut fy, mut gy) = (f0, g0);
    let mut a = 1.0;
    let mut l = opts.l0;
    let mut prev_y: Option<(Vec<f64>, Vec<f64>)> = None;
    let mut history = vec![IterRecord { iteration: 0, objective: obj, l, active_groups: groups.n_active(&theta) }];
    let mut iterations = 0;
    while iterations < opts.max_iter {
        iterations += 1;
        let l0 = match (&prev_y, opts.secant) {
            (Some((yp, gp)), true) => secant_l0(&y, yp, &gy, gp, l),
            _ => l,
        };
        let (p, fp, gp, lp) = prob.step(&y, fy, &gy, l0, opts)?;
        l = lp;
        let new_obj = prob.objective(fp, &p);
        if new_obj < best.1 {
            best = (p.clone(), new_obj, gp.clone());
        }
        history.push(IterRecord { iteration: iterations, objective: new_obj, l, active_groups: groups.n_active(&p) });
        let change = (obj - new_obj).abs();
        let a_next = fista_next_a(a);
        let beta = (a - 1.0) / a_next;
        let y_next: Vec<f64> = p.iter().zip(&theta).map(|(x, xp)| x + beta * (x - xp)).collect();
        theta = p;
        obj = new_obj;
        a = a_next;
        if change < opts.obj_tol {
            break;
        }
        let (fyn, gyn) = if beta == 0.0 {
            (fp, gp)
        } else {
            match loss.value_grad(&y_next) {
                Ok(v) => v,
                // extrapolated point failed: restart momentum from the iterate
                Err(e) if e.is_numerical() => {
                    a = 1.0;
                    prev_y = None;
                    y = theta.clone();
                    fy = fp;
                    gy = gp;
                    continue;
                }
                Err(e) => return Err(e),
            }
        };
        prev_y = Some((std::mem::replace(&mut y, y_next), std::mem::replace(&mut gy, gyn)));
        fy = fyn;
    }
    Ok(SolveOutcome { theta: best.0, objective: best.1, grad: best.2, iterations, history })
}

pub fn solve<L: SmoothLoss + ?Sized>(
    solver: Solver,
    loss: &L,
    groups: &Groups,
    lambda: f64,
    theta0: &[f64],
    opts: &SolverOptions,
) -> Result<SolveOutcome> {
    match solver {
        Solver::Ista => ista(loss, groups, lambda, theta0, opts),
        Solver::Fista => fista(loss, groups, lambda, theta0, opts),
    }
}

/// Sample mean of the statistic vector.
pub fn empirical_moments(data: &DataMatrix, graph: &Graph, spec: &BasisSpec) -> Result<Vec<f64>> {
    if data.d() != graph.d() {
        return Err(MrfError::Dimension(format!("data has {} columns, graph has {} nodes", data.d(), graph.d())));
    }
    if data.n() == 0 {
        return Err(MrfError::InvalidArgument("no data rows".into()));
    }
    let len = spec.n_stats(graph.d(), graph.n_edges());
    let chunks: Vec<Vec<f64>> = (0..data.n())
        .into_par_iter()
        .chunks(256)
        .map(|rows| {
            let mut acc = vec![0.0; len];
            let mut buf = vec![0.0; len];
            for r in rows {
                stat_vector_into(data.row(r), graph, spec, &mut buf)
                    .map_err(|e| MrfError::Domain(format!("row {r}: {e}")))?;
                acc.iter_mut().zip(&buf).for_each(|(a, b)| *a += b);
            }
            Ok(acc)
        })
        .collect::<Result<_>>()?;
    let mut mu = vec![0.0; len];
    for c in chunks {
        mu.iter_mut().zip(&c).for_each(|(a, b)| *a += b);
    }
    let n = data.n() as f64;
    mu.iter_mut().for_each(|a| *a /= n);
    Ok(mu)
}

/// `max_ij ‖μ̂_ij − μ̂_i ⊗ μ̂_j‖₂`, using the first `m2` vertex moments.
pub fn lambda_start_mle(mu_hat: &ParamVector) -> f64 {
    let spec = mu_hat.spec();
    let m2 = spec.m2.min(spec.m1);
    let mut best: f64 = 0.0;
    for (e, &(i, j)) in mu_hat.graph().edges().iter().enumerate() {
        let (mi, mj, me) = (mu_hat.vertex(i), mu_hat.vertex(j), mu_hat.edge(e));
        let mut s = 0.0;
        for k in 0..spec.m2 {
            for l in 0..spec.m2 {
                let prod = if k < m2 && l < m2 { mi[k] * mj[l] } else { 0.0 };
                s += (me[k * spec.m2 + l] - prod).powi(2);
            }
        }
        best = best.max(s.sqrt());
    }
    best
}

/// Smooth part of the variational likelihood: `Q(θ, α) − ⟨θ, μ̂⟩`.
///
/// Keeps the last messages to warm-start the next evaluation.
pub struct TrwMleLoss {
    pub spec: BasisSpec,
    pub graph: Graph,
    pub alpha: EdgeWeights,
    pub bp: BpOptions,
    pub mu_hat: Vec<f64>,
    cache: Mutex<Option<Messages>>,
}

impl TrwMleLoss {
    pub fn new(spec: BasisSpec, alpha: EdgeWeights, bp: BpOptions, mu_hat: Vec<f64>) -> Result<Self> {
        let graph = alpha.graph().clone();
        if mu_hat.len() != spec.n_stats(graph.d(), graph.n_edges()) {
            return Err(MrfError::Dimension("moment vector does not match the layout".into()));
        }
        Ok(Self { spec, graph, alpha, bp, mu_hat, cache: Mutex::new(None) })
    }

    pub fn from_data(data: &DataMatrix, spec: BasisSpec, alpha: EdgeWeights, bp: BpOptions) -> Result<Self> {
        let mu = empirical_moments(data, alpha.graph(), &spec)?;
        Self::new(spec, alpha, bp, mu)
    }

    pub fn groups(&self) -> Groups {
        Groups::edge_blocks(&self.spec, &self.graph)
    }

    pub fn layout(&self, values: Vec<f64>) -> Result<ParamVector> {
        ParamVector::from_vec(self.spec, self.graph.clone(), values)
    }

    pub fn mu_hat(&self) -> ParamVector {
        self.layout(self.mu_hat.clone()).expect("validated at construction")
    }
}

impl SmoothLoss for TrwMleLoss {
    fn value_grad(&self, theta: &[f64]) -> Result<(f64, Vec<f64>)> {
        let th = ParamVector::from_vec(self.spec, self.graph.clone(), theta.to_vec())?;
        let init = self.cache.lock().expect("cache lock").clone();
        let res = bp_run_from(&th, &self.alpha, &self.bp, init.as_ref())?;
        let value = res.q_value - dot(theta, &self.mu_hat);
        let grad = res.tau.iter().zip(&self.mu_hat).map(|(t, m)| t - m).collect();
        *self.cache.lock().expect("cache lock") = Some(res.messages);
        Ok((value, grad))
    }
}

/// Independent per-node grid maximum likelihood for the vertex blocks (all
/// edge blocks zero), by damped Newton iterations.
pub fn vertex_only_fit(mu_hat: &ParamVector, grid: &Grid1D) -> Result<ParamVector> {
    let spec = *mu_hat.spec();
    let m1 = spec.m1;
    let basis = BasisGrid::new(m1, grid);
    let w = grid.weight();
    let n = grid.n();
    let fits: Vec<Vec<f64>> = (0..mu_hat.graph().d())
        .into_par_iter()
        .map(|i| {
            let target = mu_hat.vertex(i);
            let mut eta = vec![0.0; m1];
            let negll = |eta: &[f64]| log_integral_exp(&basis.combine(eta), w) - dot(eta, target);
            let mut cur = negll(&eta);
            for _ in 0..1000 {
                let lv = basis.combine(&eta);
                let lz = log_integral_exp(&lv, w);
                let p: Vec<f64> = lv.iter().map(|v| (v - lz).exp() * w).collect();
                let mean: Vec<f64> = (0..m1).map(|k| (0..n).map(|t| p[t] * basis.phi[(k, t)]).sum()).collect();
                let grad: Vec<f64> = mean.iter().zip(target).map(|(a, b)| a - b).collect();
                if norm2(&grad) < 1e-12 {
                    return Ok(eta);
                }
                let mut h = nalgebra::DMatrix::<f64>::zeros(m1, m1);
                for k in 0..m1 {
                    for l in 0..m1 {
                        h[(k, l)] = (0..n).map(|t| p[t] * basis.phi[(k, t)] * basis.phi[(l, t)]).sum::<f64>()
                            - mean[k] * mean[l];
                    }
                }
                for k in 0..m1 {
                    h[(k, k)] += 1e-12;
                }
                let step = h
                    .cholesky()
                    .map(|c| c.solve(&nalgebra::DVector::from_column_slice(&grad)))
                    .map(|s| s.as_slice().to_vec())
                    .unwrap_or_else(|| grad.clone());
                let mut t = 1.0;
                let mut moved = false;
                for _ in 0..60 {
                    let cand: Vec<f64> = eta.iter().zip(&step).map(|(e, s)| e - t * s).collect();
                    let v = negll(&cand);
                    if v < cur {
                        eta = cand;
                        cur = v;
                        moved = true;
                        break;
                    }
                    t *= 0.5;
                }
                if !moved {
                    // no representable decrease left
                    return Ok(eta);
                }
            }
            Err(MrfError::FitFailure { lambda: f64::INFINITY, reason: format!("vertex fit for node {i} did not converge") })
        })
        .collect::<Result<_>>()?;
    let mut theta = ParamVector::zeros(spec, mu_hat.graph().clone());
    for (i, f) in fits.into_iter().enumerate() {
        theta.vertex_mut(i).copy_from_slice(&f);
    }
    Ok(theta)
}

#[derive(Debug, Clone)]
pub struct FitOutcome {
    pub theta: ParamVector,
    pub iterations: usize,
    pub objective: f64,
}

/// Variational regularized maximum likelihood at one `λ`.
///
/// When the vertex-only solution already satisfies the optimality
/// conditions (so `λ` is at or above the zero-edge threshold) it is returned
/// directly, with exactly zero edge blocks. Otherwise the solver starts from
/// `theta0`, or from the vertex-only solution.
pub fn fit_trw_mle(
    loss: &TrwMleLoss,
    lambda: f64,
    theta0: Option<&ParamVector>,
    solver: Solver,
    opts: &SolverOptions,
) -> Result<FitOutcome> {
    if !(lambda >= 0.0) {
        return Err(MrfError::InvalidArgument(format!("lambda must be nonnegative, got {lambda}")));
    }
    let groups = loss.groups();
    let wrap = |e: MrfError| match e {
        MrfError::FitFailure { .. } => e,
        e if e.is_numerical() => MrfError::FitFailure { lambda, reason: e.to_string() },
        e => e,
    };
    let vertex = vertex_only_fit(&loss.mu_hat(), &loss.bp.grid).map_err(wrap)?;
    let (fv, gv) = loss.value_grad(vertex.as_slice()).map_err(wrap)?;
    let edge_grad_max = groups.groups.iter().map(|(r, _)| norm2(&gv[r.clone()])).fold(0.0, f64::max);
    if edge_grad_max <= lambda {
        return Ok(FitOutcome { theta: vertex, iterations: 0, objective: fv });
    }
    let start = match theta0 {
        Some(t) => {
            if t.spec() != &loss.spec || t.graph() != &loss.graph {
                return Err(MrfError::InvalidArgument("initial parameters use a different layout".into()));
            }
            t.clone()
        }
        None => vertex,
    };
    let out = solve(solver, loss, &groups, lambda, start.as_slice(), opts).map_err(wrap)?;
    Ok(FitOutcome { theta: loss.layout(out.theta)?, iterations: out.iterations, objective: out.objective })
}

/// Zero-edge threshold evaluated at the vertex-only solution: the largest
/// edge-block gradient norm there. Equals [`lambda_start_mle`] when `m2 ≤ m1`.
pub fn lambda_start_trw(loss: &TrwMleLoss) -> Result<f64> {
    let vertex = vertex_only_fit(&loss.mu_hat(), &loss.bp.grid)?;
    let (_, g) = loss.value_grad(vertex.as_slice())?;
    Ok(loss.groups().groups.iter().map(|(r, _)| norm2(&g[r.clone()])).fold(0.0, f64::max))
}

#[derive(Debug, Clone)]
pub struct PathFit {
    pub lambda: f64,
    pub theta: ParamVector,
    pub iterations: usize,
    pub objective: f64,
}

#[derive(Debug, Clone, Default)]
pub struct PathResult {
    pub fits: Vec<PathFit>,
    /// First failing `λ` and its error; later values are not attempted.
    pub failure: Option<(f64, String)>,
}

impl PathResult {
    pub fn lambdas(&self) -> Vec<f64> {
        self.fits.iter().map(|f| f.lambda).collect()
    }
}

/// `count` log-spaced values from `start` down over `decades` powers of ten.
pub fn lambda_grid(start: f64, count: usize, decades: f64) -> Vec<f64> {
    match count {
        0 => Vec::new(),
        1 => vec![start],
        _ => (0..count)
            .map(|k| start * 10f64.powf(-decades * k as f64 / (count - 1) as f64))
            .collect(),
    }
}

/// Fits each `λ` in turn, initializing every fit from the previous solution
/// (the first from `init`). A failure stops the path and is recorded.
pub fn reg_path<F>(lambdas: &[f64], init: &ParamVector, mut fitter: F) -> Result<PathResult>
where
    F: FnMut(f64, &ParamVector) -> Result<FitOutcome>,
{
    if lambdas.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(MrfError::InvalidArgument("lambda path must be strictly decreasing".into()));
    }
    let mut out = PathResult::default();
    let mut warm = init.clone();
    for &lambda in lambdas {
        match fitter(lambda, &warm) {
            Ok(fit) => {
                warm = fit.theta.clone();
                out.fits.push(PathFit { lambda, theta: fit.theta, iterations: fit.iterations, objective: fit.objective });
            }
            Err(e) => {
                out.failure = Some((lambda, e.to_string()));
                break;
            }
        }
    }
    Ok(out)
}

/// Warm-started variational likelihood path, starting at the vertex-only solution.
pub fn mle_path(loss: &TrwMleLoss, lambdas: &[f64], solver: Solver, opts: &SolverOptions) -> Result<PathResult> {
    let init = vertex_only_fit(&loss.mu_hat(), &loss.bp.grid)?;
    reg_path(lambdas, &init, |lambda, warm| fit_trw_mle(loss, lambda, Some(warm), solver, opts))
}
