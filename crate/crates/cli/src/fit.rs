//! `mrf fit` and `mrf path`: single fits and warm-started `λ` paths.

use std::path::PathBuf;

use clap::{Args, ValueEnum};
use mrf_core::datagen::DataMatrix;
use mrf_core::evalmod::{gaussian_nll, trw_nll_upper, tree_exact_nll};
use mrf_core::optim::{lambda_grid, lambda_start_trw, mle_path, PathResult, Solver, SolverOptions, TrwMleLoss};
use mrf_core::quasr::{
    gauss_cd_path, gauss_stats, heldout_hyvarinen, lambda_start_gauss, lambda_start_quasr, param_to_omega, quasr_path,
    score_stats, AdmmOptions, CdOptions, ScoreStats,
};
use mrf_core::spantree::{edge_weights_init, EdgeWeights};
use mrf_core::trw::BpOptions;
use mrf_core::{BasisSpec, Graph, Grid1D};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{CliError, Result};
use crate::gen::with_suffix;
use crate::io::{read_data, read_graph, write_json};
use crate::model::{FitRecord, Method, ModelFile, FORMAT, VERSION};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SolverArg {
    Ista,
    Fista,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum GaussSolver {
    /// Cyclic coordinate descent
    Cd,
    /// Consensus ADMM
    Admm,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[arg(long, value_enum)]
    pub method: Method,
    /// Training data CSV with a header row
    #[arg(long)]
    pub data: PathBuf,
    /// Model JSON to write; diagnostics go to OUT.diag.json
    #[arg(long, default_value = "model.json")]
    pub out: PathBuf,
    /// Fit this single λ instead of an automatic path
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Length of the automatic path, log-spaced down from the zero-edge threshold
    #[arg(long, default_value_t = 30)]
    pub lambda_count: usize,
    /// Decades spanned by the automatic path
    #[arg(long, default_value_t = 2.0)]
    pub decades: f64,
    #[arg(long, default_value_t = 3)]
    pub m1: usize,
    #[arg(long, default_value_t = 2)]
    pub m2: usize,
    /// Candidate edge list (`i,j` CSV); the complete graph by default
    #[arg(long)]
    pub graph: Option<PathBuf>,
    /// Midpoint grid size for message passing
    #[arg(long, default_value_t = 128)]
    pub grid: usize,
    #[arg(long, default_value_t = 1e-6)]
    pub bp_tol: f64,
    #[arg(long, default_value_t = 500)]
    pub bp_max_iter: usize,
    /// Random spanning trees averaged into the edge weights
    #[arg(long, default_value_t = 100)]
    pub n_trees: usize,
    #[arg(long, value_enum, default_value_t = SolverArg::Fista)]
    pub solver: SolverArg,
    #[arg(long, default_value_t = 1000)]
    pub max_iter: usize,
    /// Stop when the objective improves by less than this
    #[arg(long, default_value_t = 1e-4)]
    pub obj_tol: f64,
    #[arg(long, default_value_t = 1.0)]
    pub rho: f64,
    #[arg(long, default_value_t = 1e-4)]
    pub admm_tol: f64,
    #[arg(long, default_value_t = 20000)]
    pub admm_max_iter: usize,
    #[arg(long, value_enum, default_value_t = GaussSolver::Cd)]
    pub gauss_solver: GaussSolver,
    #[arg(long, default_value_t = 1e-8)]
    pub cd_tol: f64,
    /// Leave the diagonal of Ω out of the Gaussian penalty
    #[arg(long)]
    pub unpenalized_diagonal: bool,
    /// Scale columns to unit variance before Gaussian fitting (always centered)
    #[arg(long)]
    pub standardize: bool,
    /// Held-out data used to select λ
    #[arg(long)]
    pub holdout: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Serialize)]
struct Diagnostics {
    method: Method,
    seed: u64,
    lambda_start: f64,
    lambdas: Vec<f64>,
    iterations: Vec<usize>,
    objectives: Vec<f64>,
    failure: Option<FailureInfo>,
}

#[derive(Debug, Serialize)]
struct FailureInfo {
    lambda: f64,
    reason: String,
}

/// A finished run: the model file plus what the diagnostics need.
pub struct FitRun {
    pub model: ModelFile,
    lambda_start: f64,
    failure: Option<(f64, String)>,
}

impl FitArgs {
    fn validate(&self, data: &DataMatrix) -> Result<()> {
        if self.m1 == 0 || self.m2 == 0 {
            return Err(CliError::Usage("--m1 and --m2 must be positive".into()));
        }
        if self.grid == 0 || self.lambda_count == 0 {
            return Err(CliError::Usage("--grid and --lambda-count must be positive".into()));
        }
        if let Some(l) = self.lambda {
            if !(l >= 0.0) || !l.is_finite() {
                return Err(CliError::Usage(format!("--lambda must be a finite nonnegative number, got {l}")));
            }
        }
        if !(self.decades >= 0.0) || !(self.rho > 0.0) {
            return Err(CliError::Usage("--decades must be nonnegative and --rho positive".into()));
        }
        if self.method == Method::Gauss && self.graph.is_some() {
            return Err(CliError::Usage("--graph is not supported with --method gauss".into()));
        }
        if self.method != Method::Gauss {
            data.check_unit_cube().map_err(|e| CliError::Usage(format!("{}: {e}", self.data.display())))?;
        }
        Ok(())
    }

    fn lambdas(&self, start: f64) -> Vec<f64> {
        match self.lambda {
            Some(l) => vec![l],
            None => lambda_grid(start, self.lambda_count, self.decades),
        }
    }

    fn bp(&self) -> Result<BpOptions> {
        Ok(BpOptions { grid: Grid1D::new(self.grid)?, max_iter: self.bp_max_iter, tol: self.bp_tol })
    }
}

fn records(path: &PathResult) -> Vec<FitRecord> {
    path.fits
        .iter()
        .map(|f| FitRecord { lambda: f.lambda, iterations: f.iterations, objective: f.objective, model: f.theta.to_doc() })
        .collect()
}

fn pick_best(scores: &[Option<f64>]) -> Option<usize> {
    scores
        .iter()
        .enumerate()
        .filter_map(|(k, s)| s.filter(|v| v.is_finite()).map(|v| (k, v)))
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .map(|(k, _)| k)
}

fn base_file(a: &FitArgs, d: usize, spec: BasisSpec, graph: &Graph) -> ModelFile {
    ModelFile {
        format: FORMAT.into(),
        version: VERSION,
        method: a.method,
        d,
        m1: spec.m1,
        m2: spec.m2,
        edges: graph.edges().iter().map(|&(i, j)| [i, j]).collect(),
        seed: a.seed,
        grid: a.grid,
        alpha: None,
        center: None,
        scale: None,
        fits: Vec::new(),
        selected: None,
        holdout_scores: None,
    }
}

/// Edge weights for a candidate graph: all ones on a forest, otherwise an
/// average of random spanning trees drawn from `seed`.
pub fn default_alpha(graph: &Graph, n_trees: usize, seed: u64) -> Result<EdgeWeights> {
    if graph.is_forest() {
        return Ok(EdgeWeights::ones(graph.clone()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(edge_weights_init(graph, n_trees.max(1), &mut rng)?)
}

fn fit_trw(a: &FitArgs, data: &DataMatrix, holdout: Option<&DataMatrix>) -> Result<FitRun> {
    let spec = BasisSpec::new(a.m1, a.m2)?;
    let graph = match &a.graph {
        Some(p) => read_graph(p, data.d())?,
        None => Graph::complete(data.d()),
    };
    let alpha = default_alpha(&graph, a.n_trees, a.seed)?;
    let bp = a.bp()?;
    let loss = TrwMleLoss::from_data(data, spec, alpha.clone(), bp)?;
    let start = lambda_start_trw(&loss)?;
    let solver = if a.solver == SolverArg::Ista { Solver::Ista } else { Solver::Fista };
    let opts = SolverOptions { max_iter: a.max_iter, obj_tol: a.obj_tol, ..Default::default() };
    let path = mle_path(&loss, &a.lambdas(start), solver, &opts)?;
    let mut model = base_file(a, data.d(), spec, &graph);
    model.alpha = Some(alpha.as_slice().to_vec());
    model.fits = records(&path);
    if let Some(h) = holdout {
        let scores: Vec<Option<f64>> = path
            .fits
            .iter()
            .map(|f| {
                if graph.is_forest() {
                    tree_exact_nll(&f.theta, &graph, h, &bp.grid).ok()
                } else {
                    trw_nll_upper(&f.theta, &alpha, h, &bp).ok()
                }
            })
            .collect();
        model.selected = pick_best(&scores);
        model.holdout_scores = Some(scores);
    }
    Ok(FitRun { model, lambda_start: start, failure: path.failure })
}

fn fit_quasr(a: &FitArgs, data: &DataMatrix, holdout: Option<&DataMatrix>) -> Result<FitRun> {
    let spec = BasisSpec::new(a.m1, a.m2)?;
    let graph = match &a.graph {
        Some(p) => read_graph(p, data.d())?,
        None => Graph::complete(data.d()),
    };
    let stats = score_stats(data, &graph, &spec)?;
    let start = lambda_start_quasr(&stats);
    let opts = AdmmOptions { rho: a.rho, tol: a.admm_tol, max_iter: a.admm_max_iter };
    let path = quasr_path(&stats, &a.lambdas(start), &opts)?;
    let mut model = base_file(a, data.d(), spec, &graph);
    model.fits = records(&path);
    if let Some(h) = holdout {
        let hs = score_stats(h, &graph, &spec)?;
        let scores: Vec<Option<f64>> = path.fits.iter().map(|f| Some(heldout_hyvarinen(&f.theta, &hs))).collect();
        model.selected = pick_best(&scores);
        model.holdout_scores = Some(scores);
    }
    Ok(FitRun { model, lambda_start: start, failure: path.failure })
}

/// Centering (and optional scaling) fitted on the training data.
pub fn gauss_transform(data: &DataMatrix, standardize: bool) -> Result<(Vec<f64>, Vec<f64>)> {
    let center = data.col_means();
    let scale = if standardize {
        let s = data.col_std();
        if let Some(j) = s.iter().position(|&v| !(v > 0.0)) {
            return Err(CliError::Usage(format!("column {j} is constant and cannot be standardized")));
        }
        s
    } else {
        vec![1.0; data.d()]
    };
    Ok((center, scale))
}

fn fit_gauss(a: &FitArgs, data: &DataMatrix, holdout: Option<&DataMatrix>) -> Result<FitRun> {
    let (center, scale) = gauss_transform(data, a.standardize)?;
    let x = data.affine(&center, &scale)?;
    let gs = gauss_stats(&x);
    let penalize = !a.unpenalized_diagonal;
    let start = lambda_start_gauss(&gs.sigma_hat, penalize)?;
    let lambdas = a.lambdas(start);
    let path = match a.gauss_solver {
        GaussSolver::Cd => {
            let opts = CdOptions { tol: a.cd_tol, max_iter: a.max_iter.max(1), penalize_diagonal: penalize };
            gauss_cd_path(&gs.sigma_hat, &lambdas, &opts)?
        }
        GaussSolver::Admm => {
            let stats = ScoreStats::gaussian(&gs, penalize)?;
            let opts = AdmmOptions { rho: a.rho, tol: a.admm_tol, max_iter: a.admm_max_iter };
            quasr_path(&stats, &lambdas, &opts)?
        }
    };
    let spec = BasisSpec::new(1, 1)?;
    let graph = Graph::complete(data.d());
    let mut model = base_file(a, data.d(), spec, &graph);
    model.center = Some(center.clone());
    model.scale = Some(scale.clone());
    model.fits = records(&path);
    if let Some(h) = holdout {
        let hx = h.affine(&center, &scale)?;
        let scores: Vec<Option<f64>> = path
            .fits
            .iter()
            .map(|f| param_to_omega(&f.theta).ok().and_then(|om| gaussian_nll(&om, &hx).ok()))
            .collect();
        model.selected = pick_best(&scores);
        model.holdout_scores = Some(scores);
    }
    Ok(FitRun { model, lambda_start: start, failure: path.failure })
}

/// Runs the fit and writes the model and diagnostics. A failure part way
/// along the path still writes what was fitted before reporting it.
pub fn run(a: &FitArgs) -> Result<ModelFile> {
    let data = read_data(&a.data)?;
    a.validate(&data)?;
    let holdout = match &a.holdout {
        Some(p) => {
            let h = read_data(p)?;
            if h.d() != data.d() {
                return Err(CliError::Usage(format!(
                    "holdout has {} columns, training data has {}",
                    h.d(),
                    data.d()
                )));
            }
            if a.method != Method::Gauss {
                h.check_unit_cube().map_err(|e| CliError::Usage(format!("{}: {e}", p.display())))?;
            }
            Some(h)
        }
        None => None,
    };
    let run = match a.method {
        Method::Trw => fit_trw(a, &data, holdout.as_ref()),
        Method::Quasr => fit_quasr(a, &data, holdout.as_ref()),
        Method::Gauss => fit_gauss(a, &data, holdout.as_ref()),
    };
    let run = match run {
        Ok(r) => r,
        Err(e) => {
            let diag = Diagnostics {
                method: a.method,
                seed: a.seed,
                lambda_start: f64::NAN,
                lambdas: Vec::new(),
                iterations: Vec::new(),
                objectives: Vec::new(),
                failure: Some(FailureInfo { lambda: f64::NAN, reason: e.to_string() }),
            };
            write_json(&with_suffix(&a.out, ".diag.json"), &diag)?;
            return Err(e);
        }
    };
    write_json(&a.out, &run.model)?;
    let diag = Diagnostics {
        method: a.method,
        seed: a.seed,
        lambda_start: run.lambda_start,
        lambdas: run.model.fits.iter().map(|f| f.lambda).collect(),
        iterations: run.model.fits.iter().map(|f| f.iterations).collect(),
        objectives: run.model.fits.iter().map(|f| f.objective).collect(),
        failure: run.failure.as_ref().map(|(l, r)| FailureInfo { lambda: *l, reason: r.clone() }),
    };
    write_json(&with_suffix(&a.out, ".diag.json"), &diag)?;
    if let Some((l, r)) = run.failure {
        return Err(CliError::Numerical(format!("fit failed at lambda = {l:e}: {r}")));
    }
    Ok(run.model)
}
