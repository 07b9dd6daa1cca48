//! Seeded synthetic data: sparse Gaussians, Gaussian copulas and mixtures of
//! tree-structured copulas, plus the random graphs behind them.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{MrfError, Result};
use crate::graphmodel::Graph;
use crate::spantree::random_spanning_tree;

/// Row-major `n × d` observations.
#[derive(Debug, Clone, PartialEq)]
pub struct DataMatrix {
    n: usize,
    d: usize,
    values: Vec<f64>,
}

impl DataMatrix {
    pub fn new(n: usize, d: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != n * d {
            return Err(MrfError::Dimension(format!("{} values for a {n}x{d} matrix", values.len())));
        }
        Ok(Self { n, d, values })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let d = rows.first().map_or(0, Vec::len);
        if let Some(r) = rows.iter().position(|r| r.len() != d) {
            return Err(MrfError::Dimension(format!("row {r} has {} entries, expected {d}", rows[r].len())));
        }
        Ok(Self { n: rows.len(), d, values: rows.concat() })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.values[r * self.d..(r + 1) * self.d]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks(self.d.max(1)).take(self.n)
    }

    pub fn col_means(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.d];
        for row in self.rows() {
            m.iter_mut().zip(row).for_each(|(a, b)| *a += b);
        }
        m.iter_mut().for_each(|a| *a /= self.n as f64);
        m
    }

    /// Population (divide by `n`) standard deviations.
    pub fn col_std(&self) -> Vec<f64> {
        let mean = self.col_means();
        let mut v = vec![0.0; self.d];
        for row in self.rows() {
            for k in 0..self.d {
                v[k] += (row[k] - mean[k]).powi(2);
            }
        }
        v.iter().map(|s| (s / self.n as f64).sqrt()).collect()
    }

    /// `(x − center) / scale` columnwise.
    pub fn affine(&self, center: &[f64], scale: &[f64]) -> Result<Self> {
        if center.len() != self.d || scale.len() != self.d {
            return Err(MrfError::Dimension("center/scale length differs from column count".into()));
        }
        if let Some(k) = scale.iter().position(|&s| !(s > 0.0)) {
            return Err(MrfError::DegenerateFunction(format!("column {k} has zero spread")));
        }
        let mut values = self.values.clone();
        for row in values.chunks_mut(self.d.max(1)) {
            for k in 0..self.d {
                row[k] = (row[k] - center[k]) / scale[k];
            }
        }
        Ok(Self { n: self.n, d: self.d, values })
    }

    /// Mean zero, unit variance per column; returns the center and scale used.
    pub fn standardized(&self) -> Result<(Self, Vec<f64>, Vec<f64>)> {
        let (c, s) = (self.col_means(), self.col_std());
        Ok((self.affine(&c, &s)?, c, s))
    }

    /// First `k` rows and the rest.
    pub fn split(&self, k: usize) -> (Self, Self) {
        let k = k.min(self.n);
        let cut = k * self.d;
        (
            Self { n: k, d: self.d, values: self.values[..cut].to_vec() },
            Self { n: self.n - k, d: self.d, values: self.values[cut..].to_vec() },
        )
    }

    pub fn check_unit_cube(&self) -> Result<()> {
        for (idx, &v) in self.values.iter().enumerate() {
            if !(0.0..=1.0).contains(&v) {
                return Err(MrfError::Domain(format!(
                    "row {}, column {} = {v} is outside [0, 1]",
                    idx / self.d,
                    idx % self.d
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub generator: String,
    pub seed: Option<u64>,
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub data: DataMatrix,
    pub meta: DatasetMeta,
    /// Graph of the generating distribution (the union of component trees for mixtures).
    pub truth: Option<Graph>,
    pub omega: Option<DMatrix<f64>>,
    /// Mixture components and the component of every row.
    pub components: Vec<Graph>,
    pub labels: Vec<usize>,
}

impl Dataset {
    fn plain(data: DataMatrix, generator: &str, truth: Graph, omega: DMatrix<f64>) -> Self {
        Self {
            data,
            meta: DatasetMeta { generator: generator.into(), seed: None },
            truth: Some(truth),
            omega: Some(omega),
            components: Vec::new(),
            labels: Vec::new(),
        }
    }
}

/// Each unordered pair independently with probability `p`.
pub fn gen_er_graph<R: Rng + ?Sized>(d: usize, p: f64, rng: &mut R) -> Result<Graph> {
    if !(0.0..=1.0).contains(&p) {
        return Err(MrfError::InvalidArgument(format!("edge probability {p} outside [0, 1]")));
    }
    let mut edges = Vec::new();
    for i in 0..d {
        for j in i + 1..d {
            if rng.random::<f64>() < p {
                edges.push((i, j));
            }
        }
    }
    Graph::new(d, edges)
}

/// Random spanning tree of the complete graph.
pub fn gen_tree_graph<R: Rng + ?Sized>(d: usize, rng: &mut R) -> Graph {
    random_spanning_tree(&Graph::complete(d), rng)
}

pub fn chain_graph(d: usize) -> Graph {
    Graph::new(d, (1..d).map(|i| (i - 1, i))).expect("chain is valid")
}

/// Precision supported on `graph`: off-diagonals `±0.5·U(0.5, 1)`, diagonal
/// `1 + Σ_j |Ω_ij|` (strictly diagonally dominant, hence positive definite).
pub fn sparse_precision<R: Rng + ?Sized>(graph: &Graph, rng: &mut R) -> DMatrix<f64> {
    let d = graph.d();
    let mut omega = DMatrix::<f64>::zeros(d, d);
    for &(i, j) in graph.edges() {
        let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
        let v = sign * 0.5 * rng.random_range(0.5..1.0);
        omega[(i, j)] = v;
        omega[(j, i)] = v;
    }
    for i in 0..d {
        let s: f64 = (0..d).filter(|&j| j != i).map(|j| omega[(i, j)].abs()).sum();
        omega[(i, i)] = 1.0 + s;
    }
    omega
}

/// Standard deviation of every Gaussian coordinate.
pub const GAUSS_SD: f64 = 1.0 / 8.0;
pub const GAUSS_MEAN: f64 = 0.5;

struct GaussSampler {
    chol: DMatrix<f64>,
    omega: DMatrix<f64>,
}

impl GaussSampler {
    /// Rescales the covariance to diagonal `GAUSS_SD²`.
    fn new(omega: DMatrix<f64>) -> Result<Self> {
        let d = omega.nrows();
        let sigma = omega
            .clone()
            .cholesky()
            .ok_or_else(|| MrfError::NotPositiveDefinite("generated precision".into()))?
            .inverse();
        let scale: Vec<f64> = (0..d).map(|i| GAUSS_SD / sigma[(i, i)].sqrt()).collect();
        let sigma = DMatrix::from_fn(d, d, |i, j| sigma[(i, j)] * scale[i] * scale[j]);
        let omega = DMatrix::from_fn(d, d, |i, j| omega[(i, j)] / (scale[i] * scale[j]));
        let chol = sigma
            .cholesky()
            .ok_or_else(|| MrfError::NotPositiveDefinite("rescaled covariance".into()))?
            .l();
        Ok(Self { chol, omega })
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [f64]) {
        let d = out.len();
        let z = DVector::from_iterator(d, (0..d).map(|_| rng.sample::<f64, _>(StandardNormal)));
        let x = &self.chol * z;
        for k in 0..d {
            out[k] = GAUSS_MEAN + x[k];
        }
    }
}

/// `N(0.5, Σ)` samples with `Σ⁻¹` supported on `graph` and `Σ_ii = 1/64`.
pub fn gen_sparse_gaussian<R: Rng + ?Sized>(graph: &Graph, n: usize, rng: &mut R) -> Result<Dataset> {
    let sampler = GaussSampler::new(sparse_precision(graph, rng))?;
    let d = graph.d();
    let mut values = vec![0.0; n * d];
    for row in values.chunks_mut(d.max(1)).take(n) {
        sampler.sample(rng, row);
    }
    Ok(Dataset::plain(DataMatrix::new(n, d, values)?, "gaussian", graph.clone(), sampler.omega))
}

/// `sign(x − ½)|x − ½|^0.6 / 5 + ½`.
pub fn copula_transform(x: f64) -> f64 {
    let c = x - 0.5;
    c.signum() * c.abs().powf(0.6) / 5.0 + 0.5
}

pub const CLIP: f64 = 1e-9;

fn to_copula(v: &mut [f64]) {
    for x in v {
        *x = copula_transform(*x).clamp(CLIP, 1.0 - CLIP);
    }
}

/// Gaussian samples pushed through [`copula_transform`] and clipped to
/// `[1e-9, 1 − 1e-9]`.
pub fn gen_copula<R: Rng + ?Sized>(graph: &Graph, n: usize, rng: &mut R) -> Result<Dataset> {
    let mut ds = gen_sparse_gaussian(graph, n, rng)?;
    to_copula(&mut ds.data.values);
    ds.meta.generator = "copula".into();
    Ok(ds)
}

/// Equal-weight mixture of copula distributions, each on its own random
/// spanning tree.
pub fn gen_tree_mixture<R: Rng + ?Sized>(d: usize, n: usize, n_components: usize, rng: &mut R) -> Result<Dataset> {
    if n_components == 0 {
        return Err(MrfError::InvalidArgument("mixture needs at least one component".into()));
    }
    let trees: Vec<Graph> = (0..n_components).map(|_| gen_tree_graph(d, rng)).collect();
    let samplers = trees
        .iter()
        .map(|t| GaussSampler::new(sparse_precision(t, rng)))
        .collect::<Result<Vec<_>>>()?;
    let labels: Vec<usize> = (0..n).map(|_| rng.random_range(0..n_components)).collect();
    let mut values = vec![0.0; n * d];
    for (row, &c) in values.chunks_mut(d.max(1)).zip(&labels) {
        samplers[c].sample(rng, row);
    }
    to_copula(&mut values);
    let union = Graph::new(d, {
        let mut e: Vec<_> = trees.iter().flat_map(|t| t.edges().to_vec()).collect();
        e.sort_unstable();
        e.dedup();
        e
    })?;
    Ok(Dataset {
        data: DataMatrix::new(n, d, values)?,
        meta: DatasetMeta { generator: "tree-mixture".into(), seed: None },
        truth: Some(union),
        omega: None,
        components: trees,
        labels,
    })
}
