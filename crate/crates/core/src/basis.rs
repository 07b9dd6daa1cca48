//! Orthonormal shifted Legendre basis on `[0, 1]`.
//!
//! `φ_k(x) = √(2k+1) P_k(2x − 1)` where `P_k` is the classical Legendre
//! polynomial, so that `∫₀¹ φ_k φ_l = 1{k=l}`. Model statistics use
//! `k = 1..=m`; `φ_0 ≡ 1` is absorbed by the normalizing constant.

use serde::{Deserialize, Serialize};

use crate::error::{MrfError, Result};
use crate::graphmodel::Graph;

/// Truncation of the univariate (`m1`) and per-axis bivariate (`m2`) expansions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BasisSpec {
    pub m1: usize,
    pub m2: usize,
}

impl BasisSpec {
    pub fn new(m1: usize, m2: usize) -> Result<Self> {
        if m1 == 0 || m2 == 0 {
            return Err(MrfError::InvalidArgument(format!(
                "basis truncation must be positive (m1={m1}, m2={m2})"
            )));
        }
        Ok(Self { m1, m2 })
    }

    /// Number of statistics for `d` nodes and `n_edges` edges.
    pub fn n_stats(&self, d: usize, n_edges: usize) -> usize {
        d * self.m1 + n_edges * self.m2 * self.m2
    }

    /// Largest polynomial degree used by either expansion.
    pub fn max_degree(&self) -> usize {
        self.m1.max(self.m2)
    }
}

/// Evaluates `φ_k(x)`.
pub fn legendre_eval(k: usize, x: f64) -> f64 {
    let t = 2.0 * x - 1.0;
    let (mut p_prev, mut p) = (1.0, t);
    if k == 0 {
        return 1.0;
    }
    for j in 1..k {
        let jf = j as f64;
        let next = ((2.0 * jf + 1.0) * t * p - jf * p_prev) / (jf + 1.0);
        p_prev = p;
        p = next;
    }
    ((2 * k + 1) as f64).sqrt() * p
}

/// First and second derivatives `(φ_k′(x), φ_k″(x))`.
///
/// Uses the derivative recurrences `P′_{k+1} = P′_{k−1} + (2k+1) P_k` and
/// `P″_{k+1} = P″_{k−1} + (2k+1) P′_k`, which hold on the closed interval
/// including the endpoints.
pub fn legendre_derivs(k: usize, x: f64) -> (f64, f64) {
    let mut table = LegendreTable::with_degree(k);
    table.fill(x);
    (table.d1[k], table.d2[k])
}

/// Values and first two derivatives of `φ_0..=φ_kmax` at a single point.
#[derive(Debug, Clone)]
pub struct LegendreTable {
    pub value: Vec<f64>,
    pub d1: Vec<f64>,
    pub d2: Vec<f64>,
}

impl LegendreTable {
    pub fn with_degree(kmax: usize) -> Self {
        Self {
            value: vec![0.0; kmax + 1],
            d1: vec![0.0; kmax + 1],
            d2: vec![0.0; kmax + 1],
        }
    }

    pub fn kmax(&self) -> usize {
        self.value.len() - 1
    }

    /// Overwrites the table with evaluations at `x`.
    pub fn fill(&mut self, x: f64) {
        let kmax = self.kmax();
        let t = 2.0 * x - 1.0;
        // Unscaled P_k(t) and derivatives with respect to t.
        let mut p = vec![0.0; kmax + 1];
        let mut dp = vec![0.0; kmax + 1];
        let mut ddp = vec![0.0; kmax + 1];
        p[0] = 1.0;
        if kmax >= 1 {
            p[1] = t;
            dp[1] = 1.0;
        }
        for j in 1..kmax {
            let jf = j as f64;
            p[j + 1] = ((2.0 * jf + 1.0) * t * p[j] - jf * p[j - 1]) / (jf + 1.0);
            dp[j + 1] = dp[j - 1] + (2.0 * jf + 1.0) * p[j];
            ddp[j + 1] = ddp[j - 1] + (2.0 * jf + 1.0) * dp[j];
        }
        for k in 0..=kmax {
            let s = ((2 * k + 1) as f64).sqrt();
            self.value[k] = s * p[k];
            self.d1[k] = 2.0 * s * dp[k];
            self.d2[k] = 4.0 * s * ddp[k];
        }
    }
}

/// `φ_1(x)..=φ_m(x)` written into `out[0..m]`.
pub fn legendre_values(m: usize, x: f64, out: &mut [f64]) {
    let t = 2.0 * x - 1.0;
    let (mut p_prev, mut p) = (1.0, t);
    for k in 1..=m {
        if k > 1 {
            let jf = (k - 1) as f64;
            let next = ((2.0 * jf + 1.0) * t * p - jf * p_prev) / (jf + 1.0);
            p_prev = p;
            p = next;
        }
        out[k - 1] = ((2 * k + 1) as f64).sqrt() * p;
    }
}

pub(crate) fn check_unit_interval(x: f64, what: impl FnOnce() -> String) -> Result<()> {
    if (0.0..=1.0).contains(&x) {
        Ok(())
    } else {
        Err(MrfError::Domain(format!("{} = {x} is outside [0, 1]", what())))
    }
}

/// Sufficient statistic vector `φ(x)` in the canonical layout: vertex blocks
/// (node ascending, `k = 1..m1`), then edge blocks in graph edge order with
/// entry `(k, l)` row-major equal to `φ_k(x_i) φ_l(x_j)` for edge `(i, j)`, `i < j`.
pub fn stat_vector(x: &[f64], graph: &Graph, spec: &BasisSpec) -> Result<Vec<f64>> {
    let mut out = vec![0.0; spec.n_stats(graph.d(), graph.n_edges())];
    stat_vector_into(x, graph, spec, &mut out)?;
    Ok(out)
}

/// As [`stat_vector`], writing into a preallocated buffer.
pub fn stat_vector_into(x: &[f64], graph: &Graph, spec: &BasisSpec, out: &mut [f64]) -> Result<()> {
    let d = graph.d();
    if x.len() != d {
        return Err(MrfError::Dimension(format!(
            "point has {} coordinates, graph has {d} nodes",
            x.len()
        )));
    }
    for (i, &xi) in x.iter().enumerate() {
        check_unit_interval(xi, || format!("coordinate {i}"))?;
    }
    let m = spec.max_degree();
    let mut phi = vec![0.0; d * m];
    for (i, &xi) in x.iter().enumerate() {
        legendre_values(m, xi, &mut phi[i * m..(i + 1) * m]);
    }
    let (m1, m2) = (spec.m1, spec.m2);
    for i in 0..d {
        out[i * m1..(i + 1) * m1].copy_from_slice(&phi[i * m..i * m + m1]);
    }
    let base = d * m1;
    for (e, &(i, j)) in graph.edges().iter().enumerate() {
        let block = &mut out[base + e * m2 * m2..base + (e + 1) * m2 * m2];
        for k in 0..m2 {
            for l in 0..m2 {
                block[k * m2 + l] = phi[i * m + k] * phi[j * m + l];
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    // Gram-Schmidt on {1, x, x²} over [0, 1], written out by hand.
    fn phi1(x: f64) -> f64 {
        3f64.sqrt() * (2.0 * x - 1.0)
    }
    fn phi2(x: f64) -> f64 {
        5f64.sqrt() * (6.0 * x * x - 6.0 * x + 1.0)
    }

    fn midpoint(n: usize, f: impl Fn(f64) -> f64) -> f64 {
        (0..n).map(|t| f((t as f64 + 0.5) / n as f64)).sum::<f64>() / n as f64
    }

    #[test]
    fn eval_examples() {
        assert_eq!(legendre_eval(0, 0.37), 1.0);
        assert!((legendre_eval(1, 1.0) - 1.7320508075688772).abs() < 1e-12);
        assert!((legendre_eval(2, 0.5) + 1.118033988749895).abs() < 1e-12);
        for &x in &[0.0, 0.1, 0.33, 0.8, 1.0] {
            assert!((legendre_eval(1, x) - phi1(x)).abs() < 1e-12);
            assert!((legendre_eval(2, x) - phi2(x)).abs() < 1e-12);
        }
    }

    #[test]
    fn hand_polynomials_are_orthonormal() {
        assert!((midpoint(4096, |x| phi1(x) * phi1(x)) - 1.0).abs() < 1e-6);
        assert!((midpoint(4096, |x| phi2(x) * phi2(x)) - 1.0).abs() < 1e-6);
        assert!(midpoint(4096, |x| phi1(x) * phi2(x)).abs() < 1e-9);
    }

    #[test]
    fn derivative_examples() {
        for &x in &[0.0, 0.3, 1.0] {
            assert_eq!(legendre_derivs(0, x), (0.0, 0.0));
        }
        let (d1, d2) = legendre_derivs(1, 0.2);
        assert!((d1 - 3.4641016151377544).abs() < 1e-12);
        assert!(d2.abs() < 1e-12);
        let (d1, d2) = legendre_derivs(2, 0.5);
        assert!(d1.abs() < 1e-12);
        assert!((d2 - 26.832815729997478).abs() < 1e-10);
        // central finite-difference cross-check of the hand-derived values
        let h = 1e-5;
        let fd1 = (phi1(0.2 + h) - phi1(0.2 - h)) / (2.0 * h);
        let fd2 = (phi2(0.5 + h) - 2.0 * phi2(0.5) + phi2(0.5 - h)) / (h * h);
        assert!((fd1 - 3.4641016151377544).abs() < 1e-6);
        assert!((fd2 - 26.832815729997478).abs() < 1e-3);
    }

    #[test]
    fn endpoint_derivatives_match_closed_form() {
        // P_k'(1) = k(k+1)/2, P_k''(1) = (k-1)k(k+1)(k+2)/8; chain rule gives factors 2 and 4.
        for k in 0..10usize {
            let s = ((2 * k + 1) as f64).sqrt();
            let kf = k as f64;
            let (d1, d2) = legendre_derivs(k, 1.0);
            assert!((d1 - 2.0 * s * kf * (kf + 1.0) / 2.0).abs() < 1e-9 * (1.0 + d1.abs()));
            let want2 = 4.0 * s * (kf - 1.0) * kf * (kf + 1.0) * (kf + 2.0) / 8.0;
            assert!((d2 - want2).abs() < 1e-9 * (1.0 + d2.abs()));
            let sign = if k % 2 == 0 { -1.0 } else { 1.0 };
            let (d1m, d2m) = legendre_derivs(k, 0.0);
            assert!((d1m - sign * 2.0 * s * kf * (kf + 1.0) / 2.0).abs() < 1e-9 * (1.0 + d1m.abs()));
            assert!((d2m + sign * want2).abs() < 1e-9 * (1.0 + d2m.abs()));
        }
    }

    #[test]
    fn orthonormality_on_fine_grid() {
        // midpoint error for φ_0φ_8 is about 1.5e-6 at 4096 nodes
        let n = 16384;
        let m = 8;
        let mut gram = vec![0.0; (m + 1) * (m + 1)];
        for t in 0..n {
            let x = (t as f64 + 0.5) / n as f64;
            let v: Vec<f64> = (0..=m).map(|k| legendre_eval(k, x)).collect();
            for k in 0..=m {
                for l in 0..=m {
                    gram[k * (m + 1) + l] += v[k] * v[l] / n as f64;
                }
            }
        }
        for k in 0..=m {
            for l in 0..=m {
                let want = if k == l { 1.0 } else { 0.0 };
                assert!((gram[k * (m + 1) + l] - want).abs() < 1e-6, "k={k} l={l}");
            }
        }
    }

    #[test]
    fn sup_bound() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..1000 {
            let x: f64 = rng.random();
            for k in 0..=12usize {
                assert!(legendre_eval(k, x).abs() <= ((2 * k + 1) as f64).sqrt() + 1e-12);
            }
        }
    }

    #[test]
    fn bonnet_and_ode_identities() {
        // x(1−x)φ_k′ = (k/2)(√((2k+1)/(2k−1)) φ_{k−1} − (2x−1)φ_k)
        // x(1−x)φ_k″ − (2x−1)φ_k′ + k(k+1)φ_k = 0
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..100 {
            let x: f64 = rng.random_range(0.001..0.999);
            for k in 1..=8usize {
                let kf = k as f64;
                let (d1, d2) = legendre_derivs(k, x);
                let lhs = x * (1.0 - x) * d1;
                let rhs = 0.5
                    * kf
                    * (((2.0 * kf + 1.0) / (2.0 * kf - 1.0)).sqrt() * legendre_eval(k - 1, x)
                        - (2.0 * x - 1.0) * legendre_eval(k, x));
                assert!((lhs - rhs).abs() < 1e-9, "bonnet k={k} x={x}");
                let ode = x * (1.0 - x) * d2 - (2.0 * x - 1.0) * d1 + kf * (kf + 1.0) * legendre_eval(k, x);
                assert!(ode.abs() < 1e-9 * (1.0 + d2.abs()), "ode k={k} x={x}");
            }
        }
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let h = 1e-5;
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let x: f64 = rng.random_range(0.05..0.95);
            for k in 1..=8usize {
                let (d1, d2) = legendre_derivs(k, x);
                let fd1 = (legendre_eval(k, x + h) - legendre_eval(k, x - h)) / (2.0 * h);
                let (a, _) = legendre_derivs(k, x + h);
                let (b, _) = legendre_derivs(k, x - h);
                let fd2 = (a - b) / (2.0 * h);
                assert!((d1 - fd1).abs() <= 1e-5 * d1.abs().max(1.0), "d1 k={k}");
                assert!((d2 - fd2).abs() <= 1e-5 * d2.abs().max(1.0), "d2 k={k}");
            }
        }
    }

    #[test]
    fn stat_vector_layout() {
        let spec = BasisSpec::new(1, 1).unwrap();
        let empty = Graph::new(3, vec![]).unwrap();
        let x = [0.1, 0.5, 0.9];
        let v = stat_vector(&x, &empty, &spec).unwrap();
        assert_eq!(v.len(), 3);
        for i in 0..3 {
            assert!((v[i] - phi1(x[i])).abs() < 1e-12);
        }

        let g = Graph::new(2, vec![(0, 1)]).unwrap();
        let v = stat_vector(&[0.5, 0.5], &g, &spec).unwrap();
        assert!(v.iter().all(|a| a.abs() < 1e-15));
        let v = stat_vector(&[1.0, 0.0], &g, &spec).unwrap();
        let s3 = 3f64.sqrt();
        assert!((v[0] - s3).abs() < 1e-12);
        assert!((v[1] + s3).abs() < 1e-12);
        assert!((v[2] + 3.0).abs() < 1e-12);

        // (k, l) row-major with k indexing the lower node
        let spec = BasisSpec::new(1, 2).unwrap();
        let v = stat_vector(&[0.2, 0.7], &g, &spec).unwrap();
        assert!((v[2 + 1] - phi1(0.2) * phi2(0.7)).abs() < 1e-12);
        assert!((v[2 + 2] - phi2(0.2) * phi1(0.7)).abs() < 1e-12);

        assert!(stat_vector(&[1.2, 0.0], &g, &spec).is_err());
        assert!(BasisSpec::new(0, 1).is_err());
        assert_eq!(BasisSpec::new(3, 2).unwrap().n_stats(4, 2), 4 * 3 + 2 * 4);
    }
}
