//! Risk and edge-selection metrics: exact grid likelihood on forests, the
//! variational likelihood bound, Gaussian likelihood and ROC points.

use std::collections::BTreeSet;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::basis::stat_vector_into;
use crate::datagen::DataMatrix;
use crate::error::{MrfError, Result};
use crate::graphmodel::{dot, Edge, Graph, ParamVector};
use crate::gridfn::{log_integral_exp, Grid1D};
use crate::optim::PathResult;
use crate::spantree::EdgeWeights;
use crate::trw::{bp_run, BasisGrid, BpOptions};

pub use crate::gridfn::kl_grid;

/// `mean_r ⟨θ, φ(x_r)⟩`, reduced in row order.
pub fn mean_inner(theta: &ParamVector, data: &DataMatrix) -> Result<f64> {
    if data.d() != theta.graph().d() {
        return Err(MrfError::Dimension(format!(
            "data has {} columns, model has {} nodes",
            data.d(),
            theta.graph().d()
        )));
    }
    if data.n() == 0 {
        return Err(MrfError::InvalidArgument("no data rows".into()));
    }
    let len = theta.len();
    let per_row: Vec<f64> = (0..data.n())
        .into_par_iter()
        .map_init(
            || vec![0.0; len],
            |buf, r| -> Result<f64> {
                stat_vector_into(data.row(r), theta.graph(), theta.spec(), buf)?;
                Ok(dot(theta.as_slice(), buf))
            },
        )
        .collect::<Result<_>>()?;
    Ok(per_row.iter().sum::<f64>() / data.n() as f64)
}

/// Grid log-partition function of a forest-supported model by leaf-to-root
/// elimination in the log domain.
pub fn tree_logz(theta: &ParamVector, tree: &Graph, grid: &Grid1D) -> Result<f64> {
    if !tree.is_forest() {
        return Err(MrfError::Misuse("exact likelihood needs an acyclic graph".into()));
    }
    let theta = theta.on_graph(tree)?;
    let d = tree.d();
    let n = grid.n();
    let w = grid.weight();
    let spec = theta.spec();
    let basis = BasisGrid::new(spec.max_degree(), grid);
    let mut acc: Vec<Vec<f64>> = (0..d).map(|i| basis.combine(theta.vertex(i))).collect();

    // BFS order per component, with parents
    let mut parent: Vec<Option<(usize, usize)>> = vec![None; d];
    let mut seen = vec![false; d];
    let mut order = Vec::with_capacity(d);
    let mut roots = Vec::new();
    for r in 0..d {
        if seen[r] {
            continue;
        }
        seen[r] = true;
        roots.push(r);
        let start = order.len();
        order.push(r);
        let mut head = start;
        while head < order.len() {
            let v = order[head];
            head += 1;
            for &(u, e) in tree.neighbors(v) {
                if !seen[u] {
                    seen[u] = true;
                    parent[u] = Some((v, e));
                    order.push(u);
                }
            }
        }
    }
    for &v in order.iter().rev() {
        let Some((p, e)) = parent[v] else { continue };
        let l = basis.bilinear(theta.edge(e), spec.m2);
        let v_low = v < p;
        let msg: Vec<f64> = (0..n)
            .map(|xp| {
                let vals: Vec<f64> = (0..n)
                    .map(|xv| acc[v][xv] + if v_low { l[(xv, xp)] } else { l[(xp, xv)] })
                    .collect();
                log_integral_exp(&vals, w)
            })
            .collect();
        acc[p].iter_mut().zip(msg).for_each(|(a, m)| *a += m);
    }
    Ok(roots.iter().map(|&r| log_integral_exp(&acc[r], w)).sum())
}

/// Average negative log-likelihood with the exact grid partition function.
pub fn tree_exact_nll(theta: &ParamVector, tree: &Graph, data: &DataMatrix, grid: &Grid1D) -> Result<f64> {
    let logz = tree_logz(theta, tree, grid)?;
    Ok(logz - mean_inner(theta, data)?)
}

/// `Q(θ, α) − mean ⟨θ, φ(x)⟩`, an upper bound on the grid NLL.
pub fn trw_nll_upper(theta: &ParamVector, alpha: &EdgeWeights, data: &DataMatrix, bp: &BpOptions) -> Result<f64> {
    let res = bp_run(theta, alpha, bp)?;
    Ok(res.q_value - mean_inner(theta, data)?)
}

/// `(d/2) log 2π − ½ log|Ω| + ½ mean xᵀΩx`.
pub fn gaussian_nll(omega: &DMatrix<f64>, data: &DataMatrix) -> Result<f64> {
    let d = omega.nrows();
    if omega.ncols() != d || data.d() != d {
        return Err(MrfError::Dimension(format!(
            "precision is {}x{}, data has {} columns",
            d,
            omega.ncols(),
            data.d()
        )));
    }
    if (omega - omega.transpose()).abs().max() > 1e-12 * omega.abs().max().max(1.0) {
        return Err(MrfError::NotPositiveDefinite("precision matrix is not symmetric".into()));
    }
    let chol = omega
        .clone()
        .cholesky()
        .ok_or_else(|| MrfError::NotPositiveDefinite("precision matrix is not positive definite".into()))?;
    let logdet = 2.0 * chol.l().diagonal().iter().map(|v| v.ln()).sum::<f64>();
    if data.n() == 0 {
        return Err(MrfError::InvalidArgument("no data rows".into()));
    }
    let quad: Vec<f64> = (0..data.n())
        .into_par_iter()
        .map(|r| {
            let x = DVector::from_column_slice(data.row(r));
            x.dot(&(omega * &x))
        })
        .collect();
    let mq = quad.iter().sum::<f64>() / data.n() as f64;
    Ok(0.5 * d as f64 * (2.0 * std::f64::consts::PI).ln() - 0.5 * logdet + 0.5 * mq)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    pub lambda: f64,
    pub tp_rate: f64,
    pub tn_rate: f64,
    pub n_edges_selected: usize,
}

/// Rates of a selected edge set against a truth graph on the same nodes.
pub fn roc_point(lambda: f64, selected: &[Edge], truth: &Graph) -> RocPoint {
    let d = truth.d();
    let sel: BTreeSet<Edge> = selected.iter().map(|&(i, j)| (i.min(j), i.max(j))).collect();
    let n_true = truth.n_edges();
    let n_false = d * d.saturating_sub(1) / 2 - n_true;
    let tp = sel.iter().filter(|&&(i, j)| truth.contains(i, j)).count();
    let fp = sel.len() - tp;
    RocPoint {
        lambda,
        tp_rate: if n_true == 0 { 1.0 } else { tp as f64 / n_true as f64 },
        tn_rate: if n_false == 0 { 1.0 } else { (n_false - fp) as f64 / n_false as f64 },
        n_edges_selected: sel.len(),
    }
}

/// One point per fitted `λ`, using the exact nonzero support.
pub fn roc_curve(path: &PathResult, truth: &Graph) -> Vec<RocPoint> {
    path.fits.iter().map(|f| roc_point(f.lambda, &f.theta.support(0.0), truth)).collect()
}

/// Off-diagonal nonzeros of a precision matrix as edges.
pub fn precision_support(omega: &DMatrix<f64>) -> Vec<Edge> {
    let d = omega.nrows();
    let mut out = Vec::new();
    for i in 0..d {
        for j in i + 1..d {
            if omega[(i, j)] != 0.0 || omega[(j, i)] != 0.0 {
                out.push((i, j));
            }
        }
    }
    out
}
