//! `mrf eval` and `mrf roc`: per-`λ` CSV reports for a fitted model.

use std::path::{Path, PathBuf};

use clap::Args;
use mrf_core::datagen::DataMatrix;
use mrf_core::evalmod::{gaussian_nll, precision_support, roc_curve, trw_nll_upper, tree_exact_nll};
use mrf_core::optim::{PathFit, PathResult};
use mrf_core::quasr::{gauss_stats, heldout_hyvarinen, param_to_omega, score_stats, ScoreStats};
use mrf_core::spantree::EdgeWeights;
use mrf_core::trw::BpOptions;
use mrf_core::{Graph, Grid1D, ParamVector};

use crate::error::{CliError, Result};
use crate::fit::default_alpha;
use crate::io::{fmt_num, read_data, read_graph, read_json, write_table};
use crate::model::{Method, ModelFile};

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    /// Columns: lambda, nll, nll_kind (exact | trw_bound | bp_failed | gaussian), hyvarinen, edges
    #[arg(long, default_value = "eval.csv")]
    pub out: PathBuf,
    #[arg(long, default_value_t = 1e-6)]
    pub bp_tol: f64,
    #[arg(long, default_value_t = 500)]
    pub bp_max_iter: usize,
    /// Random spanning trees for the bound when the model stores no edge weights
    #[arg(long, default_value_t = 100)]
    pub n_trees: usize,
}

#[derive(Debug, Args)]
pub struct RocArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// True edge list (`i,j` CSV)
    #[arg(long)]
    pub truth: PathBuf,
    /// Columns: lambda, tp, tn, edges
    #[arg(long, default_value = "roc.csv")]
    pub out: PathBuf,
}

pub const EVAL_HEADER: [&str; 5] = ["lambda", "nll", "nll_kind", "hyvarinen", "edges"];
pub const ROC_HEADER: [&str; 4] = ["lambda", "tp", "tn", "edges"];

pub fn load_model(path: &Path) -> Result<ModelFile> {
    let m: ModelFile = read_json(path)?;
    m.validate()?;
    Ok(m)
}

fn opt_num(v: Option<f64>) -> String {
    v.filter(|x| x.is_finite()).map(fmt_num).unwrap_or_default()
}

struct EvalRow {
    lambda: f64,
    nll: Option<f64>,
    kind: &'static str,
    hyvarinen: Option<f64>,
    edges: usize,
}

fn eval_gauss(model: &ModelFile, data: &DataMatrix) -> Result<Vec<EvalRow>> {
    let (center, scale) = match (&model.center, &model.scale) {
        (Some(c), Some(s)) => (c.clone(), s.clone()),
        _ => (vec![0.0; model.d], vec![1.0; model.d]),
    };
    let x = data.affine(&center, &scale)?;
    let stats = ScoreStats::gaussian(&gauss_stats(&x), true)?;
    model
        .params()?
        .into_iter()
        .map(|(lambda, theta)| {
            let om = param_to_omega(&theta)?;
            Ok(EvalRow {
                lambda,
                nll: gaussian_nll(&om, &x).ok(),
                kind: "gaussian",
                hyvarinen: Some(heldout_hyvarinen(&theta, &stats)),
                edges: precision_support(&om).len(),
            })
        })
        .collect()
}

fn eval_series(model: &ModelFile, data: &DataMatrix, a: &EvalArgs) -> Result<Vec<EvalRow>> {
    data.check_unit_cube().map_err(|e| CliError::Usage(format!("{}: {e}", a.data.display())))?;
    let bp = BpOptions { grid: Grid1D::new(model.grid)?, max_iter: a.bp_max_iter, tol: a.bp_tol };
    let fits = model.params()?;
    let mut alpha_cache: Option<EdgeWeights> = None;
    let mut rows = Vec::with_capacity(fits.len());
    for (lambda, theta) in fits {
        let support = Graph::new(model.d, theta.support(0.0))?;
        let (nll, kind) = if support.is_forest() {
            (Some(tree_exact_nll(&theta, &support, data, &bp.grid)?), "exact")
        } else {
            let alpha = match (&alpha_cache, &model.alpha) {
                (Some(w), _) => w.clone(),
                (None, Some(v)) => EdgeWeights::new(theta.graph().clone(), v.clone())?,
                (None, None) => default_alpha(theta.graph(), a.n_trees, model.seed)?,
            };
            alpha_cache = Some(alpha.clone());
            match trw_nll_upper(&theta, &alpha, data, &bp) {
                Ok(v) => (Some(v), "trw_bound"),
                Err(e) if e.is_numerical() => (None, "bp_failed"),
                Err(e) => return Err(e.into()),
            }
        };
        let stats = score_stats(data, theta.graph(), theta.spec())?;
        rows.push(EvalRow {
            lambda,
            nll,
            kind,
            hyvarinen: Some(heldout_hyvarinen(&theta, &stats)),
            edges: support.n_edges(),
        });
    }
    Ok(rows)
}

pub fn run_eval(a: &EvalArgs) -> Result<()> {
    let model = load_model(&a.model)?;
    let data = read_data(&a.data)?;
    eval_to_csv(&model, &data, a)
}

pub fn eval_to_csv(model: &ModelFile, data: &DataMatrix, a: &EvalArgs) -> Result<()> {
    if data.d() != model.d {
        return Err(CliError::Usage(format!("model has d = {}, data has {} columns", model.d, data.d())));
    }
    let rows = match model.method {
        Method::Gauss => eval_gauss(model, data)?,
        _ => eval_series(model, data, a)?,
    };
    let table: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![fmt_num(r.lambda), opt_num(r.nll), r.kind.to_string(), opt_num(r.hyvarinen), r.edges.to_string()]
        })
        .collect();
    write_table(&a.out, &EVAL_HEADER, &table)
}

pub fn roc_rows(model: &ModelFile, truth: &Graph) -> Result<Vec<Vec<String>>> {
    let fits = model
        .params()?
        .into_iter()
        .map(|(lambda, theta): (f64, ParamVector)| PathFit { lambda, theta, iterations: 0, objective: 0.0 })
        .collect();
    let path = PathResult { fits, failure: None };
    Ok(roc_curve(&path, truth)
        .into_iter()
        .map(|p| vec![fmt_num(p.lambda), fmt_num(p.tp_rate), fmt_num(p.tn_rate), p.n_edges_selected.to_string()])
        .collect())
}

pub fn run_roc(a: &RocArgs) -> Result<()> {
    let model = load_model(&a.model)?;
    let truth = read_graph(&a.truth, model.d)?;
    write_table(&a.out, &ROC_HEADER, &roc_rows(&model, &truth)?)
}
