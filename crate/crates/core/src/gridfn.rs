//! Univariate and bivariate functions sampled on a uniform midpoint grid of
//! `[0, 1]`, with Riemann-sum quadrature.
//!
//! Node `t` sits at `(t + 0.5) / n` with weight `1 / n`; a bivariate function
//! is stored row-major with the first axis as rows.

use serde::{Deserialize, Serialize};

use crate::error::{MrfError, Result};

/// Values below this are clamped before taking logarithms.
pub const LOG_FLOOR: f64 = 1e-300;

pub const DEFAULT_GRID: usize = 128;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Grid1D {
    n: usize,
}

impl Grid1D {
    pub fn new(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(MrfError::InvalidArgument("grid needs at least one point".into()));
        }
        Ok(Self { n })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn weight(&self) -> f64 {
        1.0 / self.n as f64
    }

    pub fn node(&self, t: usize) -> f64 {
        (t as f64 + 0.5) / self.n as f64
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.n).map(|t| self.node(t)).collect()
    }

    /// Samples `f` at the nodes.
    pub fn sample(&self, f: impl Fn(f64) -> f64) -> GriddedFn1D {
        GriddedFn1D { grid: *self, values: (0..self.n).map(|t| f(self.node(t))).collect() }
    }

    pub fn sample2(&self, f: impl Fn(f64, f64) -> f64) -> GriddedFn2D {
        let mut values = Vec::with_capacity(self.n * self.n);
        for s in 0..self.n {
            for t in 0..self.n {
                values.push(f(self.node(s), self.node(t)));
            }
        }
        GriddedFn2D { grid: *self, values }
    }
}

impl Default for Grid1D {
    fn default() -> Self {
        Self { n: DEFAULT_GRID }
    }
}

/// Common view of sampled functions for quadrature.
pub trait Gridded {
    fn values(&self) -> &[f64];
    fn values_mut(&mut self) -> &mut [f64];
    /// Quadrature weight of a single cell.
    fn cell_weight(&self) -> f64;
    fn grid(&self) -> Grid1D;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GriddedFn1D {
    pub grid: Grid1D,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GriddedFn2D {
    pub grid: Grid1D,
    pub values: Vec<f64>,
}

impl GriddedFn1D {
    pub fn new(grid: Grid1D, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.n() {
            return Err(MrfError::Dimension(format!("{} values for a {}-point grid", values.len(), grid.n())));
        }
        Ok(Self { grid, values })
    }

    pub fn constant(grid: Grid1D, c: f64) -> Self {
        Self { grid, values: vec![c; grid.n()] }
    }

    /// Normalized density `∝ exp(log_values)`, shifted by the maximum first.
    pub fn from_log(grid: Grid1D, log_values: &[f64]) -> Result<Self> {
        Self::new(grid, exp_shifted(log_values))?.normalize()
    }

    pub fn normalize(self) -> Result<Self> {
        normalize(self)
    }

    /// `∫ f g` for another function on the same grid.
    pub fn dot(&self, g: &[f64]) -> f64 {
        self.values.iter().zip(g).map(|(a, b)| a * b).sum::<f64>() * self.grid.weight()
    }
}

impl GriddedFn2D {
    pub fn new(grid: Grid1D, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.n() * grid.n() {
            return Err(MrfError::Dimension(format!(
                "{} values for a {1}x{1} grid",
                values.len(),
                grid.n()
            )));
        }
        Ok(Self { grid, values })
    }

    pub fn constant(grid: Grid1D, c: f64) -> Self {
        Self { grid, values: vec![c; grid.n() * grid.n()] }
    }

    pub fn from_log(grid: Grid1D, log_values: &[f64]) -> Result<Self> {
        Self::new(grid, exp_shifted(log_values))?.normalize()
    }

    /// Outer product `f(x) g(y)`.
    pub fn product(f: &GriddedFn1D, g: &GriddedFn1D) -> Self {
        let mut values = Vec::with_capacity(f.values.len() * g.values.len());
        for &a in &f.values {
            values.extend(g.values.iter().map(|&b| a * b));
        }
        Self { grid: f.grid, values }
    }

    pub fn at(&self, s: usize, t: usize) -> f64 {
        self.values[s * self.grid.n() + t]
    }

    pub fn normalize(self) -> Result<Self> {
        normalize(self)
    }

    /// Swaps the two axes.
    pub fn transpose(&self) -> Self {
        let n = self.grid.n();
        let mut values = vec![0.0; n * n];
        for s in 0..n {
            for t in 0..n {
                values[t * n + s] = self.values[s * n + t];
            }
        }
        Self { grid: self.grid, values }
    }
}

macro_rules! impl_gridded {
    ($ty:ty, $pow:expr) => {
        impl Gridded for $ty {
            fn values(&self) -> &[f64] {
                &self.values
            }
            fn values_mut(&mut self) -> &mut [f64] {
                &mut self.values
            }
            fn cell_weight(&self) -> f64 {
                self.grid.weight().powi($pow)
            }
            fn grid(&self) -> Grid1D {
                self.grid
            }
        }
    };
}

impl_gridded!(GriddedFn1D, 1);
impl_gridded!(GriddedFn2D, 2);

fn exp_shifted(log_values: &[f64]) -> Vec<f64> {
    let m = log_values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    log_values.iter().map(|&v| (v - m).exp()).collect()
}

/// `log ∫ exp(f)` on the grid, computed with a max shift.
pub fn log_integral_exp(log_values: &[f64], cell_weight: f64) -> f64 {
    let m = log_values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let s: f64 = log_values.iter().map(|&v| (v - m).exp()).sum();
    m + (s * cell_weight).ln()
}

pub fn integrate<F: Gridded>(f: &F) -> f64 {
    f.values().iter().sum::<f64>() * f.cell_weight()
}

pub fn normalize<F: Gridded>(mut f: F) -> Result<F> {
    if f.values().iter().any(|&v| v < 0.0 || !v.is_finite()) {
        return Err(MrfError::DegenerateFunction("negative or non-finite value".into()));
    }
    let mass = integrate(&f);
    if !(mass > 0.0) || !mass.is_finite() {
        return Err(MrfError::DegenerateFunction(format!("total mass {mass}")));
    }
    for v in f.values_mut() {
        *v /= mass;
    }
    Ok(f)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    /// Sum over the first (row) axis, keeping the second.
    First,
    /// Sum over the second (column) axis, keeping the first.
    Second,
}

/// Integrates out `axis`.
pub fn marginalize(q: &GriddedFn2D, axis: Axis) -> GriddedFn1D {
    let n = q.grid.n();
    let w = q.grid.weight();
    let mut out = vec![0.0; n];
    for s in 0..n {
        let row = &q.values[s * n..(s + 1) * n];
        match axis {
            Axis::Second => out[s] = row.iter().sum::<f64>() * w,
            Axis::First => {
                for (o, &v) in out.iter_mut().zip(row) {
                    *o += v * w;
                }
            }
        }
    }
    GriddedFn1D { grid: q.grid, values: out }
}

fn clamped_ln(v: f64) -> f64 {
    v.max(LOG_FLOOR).ln()
}

/// `−∫ q log q`.
pub fn entropy(q: &GriddedFn1D) -> f64 {
    -q.values.iter().map(|&v| if v > 0.0 { v * clamped_ln(v) } else { 0.0 }).sum::<f64>() * q.grid.weight()
}

/// `∬ q log(q / (q_1 q_2))` with marginals taken from `q` itself.
pub fn mutual_info(q: &GriddedFn2D) -> f64 {
    let n = q.grid.n();
    let a = marginalize(q, Axis::Second);
    let b = marginalize(q, Axis::First);
    let la: Vec<f64> = a.values.iter().map(|&v| clamped_ln(v)).collect();
    let lb: Vec<f64> = b.values.iter().map(|&v| clamped_ln(v)).collect();
    let mut acc = 0.0;
    for s in 0..n {
        for t in 0..n {
            let v = q.values[s * n + t];
            if v > 0.0 {
                acc += v * (clamped_ln(v) - la[s] - lb[t]);
            }
        }
    }
    acc * q.cell_weight()
}

/// `∫ p log(p / q)`.
pub fn kl_grid<F: Gridded>(p: &F, q: &F) -> Result<f64> {
    if p.values().len() != q.values().len() {
        return Err(MrfError::Dimension("densities live on different grids".into()));
    }
    let acc: f64 = p
        .values()
        .iter()
        .zip(q.values())
        .map(|(&a, &b)| if a > 0.0 { a * (clamped_ln(a) - clamped_ln(b)) } else { 0.0 })
        .sum();
    Ok(acc * p.cell_weight())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::legendre_eval;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn g(n: usize) -> Grid1D {
        Grid1D::new(n).unwrap()
    }

    #[test]
    fn integrate_examples() {
        assert!((integrate(&GriddedFn1D::constant(g(128), 1.0)) - 1.0).abs() < 1e-15);
        let f = g(4096).sample(|x| legendre_eval(1, x).powi(2));
        assert!((integrate(&f) - 1.0).abs() < 1e-6);
        assert!((integrate(&GriddedFn2D::constant(g(128), 1.0)) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn normalize_examples() {
        let f = GriddedFn1D::constant(g(128), 7.0).normalize().unwrap();
        assert!(f.values.iter().all(|&v| (v - 1.0).abs() < 1e-14));
        let again = f.clone().normalize().unwrap();
        assert_eq!(f, again);
        // ∫₀¹ e^{cx} = (e^c − 1)/c
        let c = 1.7;
        let f = g(128).sample(|x| (c * x).exp()).normalize().unwrap();
        for (t, &v) in f.values.iter().enumerate() {
            let x = g(128).node(t);
            let exact = c * (c * x).exp() / (c.exp() - 1.0);
            assert!((v - exact).abs() < 1e-3);
        }
        assert!(matches!(
            GriddedFn1D::constant(g(4), 0.0).normalize(),
            Err(MrfError::DegenerateFunction(_))
        ));
    }

    #[test]
    fn marginalize_examples() {
        let grid = g(64);
        let a = grid.sample(|x| 1.0 + x).normalize().unwrap();
        let b = grid.sample(|x| 2.0 - x * x).normalize().unwrap();
        let q = GriddedFn2D::product(&a, &b);
        let m = marginalize(&q, Axis::Second);
        for (u, v) in m.values.iter().zip(&a.values) {
            assert!((u - v).abs() < 1e-12);
        }
        let u = marginalize(&GriddedFn2D::constant(grid, 1.0), Axis::First);
        assert!(u.values.iter().all(|&v| (v - 1.0).abs() < 1e-12));

        // exp{φ1(x)φ1(y)}: explicit column sums as the oracle
        let q = grid.sample2(|x, y| (legendre_eval(1, x) * legendre_eval(1, y)).exp()).normalize().unwrap();
        let m = marginalize(&q, Axis::First);
        let n = grid.n();
        for t in 0..n {
            let mut s = 0.0;
            for r in 0..n {
                s += q.values[r * n + t];
            }
            assert!((m.values[t] - s / n as f64).abs() < 1e-10);
        }
    }

    #[test]
    fn entropy_examples() {
        assert_eq!(entropy(&GriddedFn1D::constant(g(128), 1.0)), 0.0);
        let e = std::f64::consts::E;
        let want = 1.0 - e / (e - 1.0) + (e - 1.0).ln();
        let f = g(4096).sample(f64::exp).normalize().unwrap();
        assert!((entropy(&f) - want).abs() < 1e-6);
        let mut last = f64::INFINITY;
        for sharp in [1.0, 5.0, 20.0, 80.0] {
            let f = g(512).sample(|x| (-sharp * (x - 0.5).powi(2)).exp()).normalize().unwrap();
            let h = entropy(&f);
            assert!(h < last);
            last = h;
        }
    }

    #[test]
    fn mutual_info_examples() {
        let grid = g(32);
        let a = grid.sample(|x| 0.2 + x).normalize().unwrap();
        let b = grid.sample(|x| 1.5 - x).normalize().unwrap();
        assert!(mutual_info(&GriddedFn2D::product(&a, &b)).abs() < 1e-10);

        // 2x2 blocks: mass 0.4 on the diagonal quarters, 0.1 elsewhere
        let q = grid
            .sample2(|x, y| if (x < 0.5) == (y < 0.5) { 1.6 } else { 0.4 })
            .normalize()
            .unwrap();
        let n = grid.n();
        let w = 1.0 / n as f64;
        let mut oracle = 0.0;
        for s in 0..n {
            for t in 0..n {
                let v = q.values[s * n + t];
                let qs: f64 = (0..n).map(|u| q.values[s * n + u]).sum::<f64>() * w;
                let qt: f64 = (0..n).map(|u| q.values[u * n + t]).sum::<f64>() * w;
                oracle += v * (v / (qs * qt)).ln() * w * w;
            }
        }
        assert!((mutual_info(&q) - oracle).abs() < 1e-12);
        let closed = 2.0 * 0.4 * (0.4f64 / 0.25).ln() + 2.0 * 0.1 * (0.1f64 / 0.25).ln();
        assert!((oracle - closed).abs() < 1e-12);

        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..100 {
            let q = GriddedFn2D::new(g(8), (0..64).map(|_| rng.random_range(0.01..1.0)).collect())
                .unwrap()
                .normalize()
                .unwrap();
            assert!(mutual_info(&q) >= -1e-10);
        }
    }

    #[test]
    fn kl_examples() {
        let grid = g(4096);
        let p = grid.sample(|x| 1.0 + x).normalize().unwrap();
        assert_eq!(kl_grid(&p, &p).unwrap(), 0.0);
        // KL(uniform || e^x / (e − 1)) = log(e − 1) − 1/2
        let u = GriddedFn1D::constant(grid, 1.0);
        let ex = grid.sample(f64::exp).normalize().unwrap();
        let want = (std::f64::consts::E - 1.0).ln() - 0.5;
        assert!((kl_grid(&u, &ex).unwrap() - want).abs() < 1e-4);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..100 {
            let mk = |rng: &mut ChaCha8Rng| {
                GriddedFn2D::new(g(6), (0..36).map(|_| rng.random_range(0.01..1.0)).collect())
                    .unwrap()
                    .normalize()
                    .unwrap()
            };
            let (a, b) = (mk(&mut rng), mk(&mut rng));
            assert!(kl_grid(&a, &b).unwrap() >= -1e-10);
        }
    }

    #[test]
    fn marginalize_commutes_with_normalize() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let raw = GriddedFn2D::new(g(16), (0..256).map(|_| rng.random_range(0.1..3.0)).collect()).unwrap();
        let a = marginalize(&raw.clone().normalize().unwrap(), Axis::First);
        let b = marginalize(&raw, Axis::First).normalize().unwrap();
        for (u, v) in a.values.iter().zip(&b.values) {
            assert!((u - v).abs() < 1e-12);
        }
    }

    #[test]
    fn log_integral_matches_direct() {
        let grid = g(100);
        let lv: Vec<f64> = grid.nodes().iter().map(|x| 3.0 * x).collect();
        let direct = (lv.iter().map(|v| v.exp()).sum::<f64>() / 100.0).ln();
        assert!((log_integral_exp(&lv, grid.weight()) - direct).abs() < 1e-13);
        let big: Vec<f64> = lv.iter().map(|v| v + 1000.0).collect();
        assert!((log_integral_exp(&big, grid.weight()) - direct - 1000.0).abs() < 1e-9);
    }
}
