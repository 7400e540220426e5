//! Quadrature over the interpolation time.
//!
//! The posterior kernel sharpens as `t -> 1`, so nodes are placed uniformly
//! in `s` under `1 - t = (1 - t_lo) · r^s`, `r = (1 - t_hi) / (1 - t_lo)`,
//! which spreads them evenly in `ln(1 - t)`.

use serde::{Deserialize, Serialize};

use crate::data::TimeDistribution;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuadratureScheme {
    GaussLegendre,
    Trapezoid,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuadratureSpec {
    pub nodes: usize,
    pub scheme: QuadratureScheme,
    pub t_min: f64,
    pub t_max: f64,
}

impl QuadratureSpec {
    /// Gauss-Legendre over the support of `t_dist`.
    pub fn for_time(t_dist: &TimeDistribution, nodes: usize) -> Self {
        Self { nodes, scheme: QuadratureScheme::GaussLegendre, t_min: t_dist.t_min, t_max: t_dist.t_max }
    }

    pub fn validate(&self) -> Result<()> {
        if self.nodes < 8 {
            return Err(Error::Config(format!("quadrature needs at least 8 nodes, got {}", self.nodes)));
        }
        if !(self.t_min >= 0.0 && self.t_min < self.t_max) {
            return Err(Error::Config("quadrature range must satisfy 0 <= t_min < t_max".into()));
        }
        if !(self.t_max < 1.0) {
            return Err(Error::Config("quadrature nodes must stay below t = 1".into()));
        }
        Ok(())
    }

    /// Nodes `t_q` and log-weights `ln w_q` (Jacobian included) on the
    /// intersection of this range with the support of `t_dist`.
    pub fn grid(&self, t_dist: &TimeDistribution) -> Result<(Vec<f64>, Vec<f64>)> {
        self.validate()?;
        let lo = self.t_min.max(t_dist.t_min);
        let hi = self.t_max.min(t_dist.t_max);
        if !(lo < hi) {
            return Err(Error::Config("quadrature range misses the time distribution".into()));
        }
        let (s, w) = match self.scheme {
            QuadratureScheme::GaussLegendre => gauss_legendre_unit(self.nodes),
            QuadratureScheme::Trapezoid => trapezoid_unit(self.nodes),
        };
        let log_r = ((1.0 - hi) / (1.0 - lo)).ln();
        let mut ts = Vec::with_capacity(s.len());
        let mut logw = Vec::with_capacity(s.len());
        for (si, wi) in s.iter().zip(&w) {
            let one_minus_t = (1.0 - lo) * (si * log_r).exp();
            ts.push(1.0 - one_minus_t);
            // |dt/ds| = (1 - t) |ln r|
            logw.push(wi.ln() + one_minus_t.ln() + (-log_r).ln());
        }
        Ok((ts, logw))
    }
}

/// Gauss-Legendre nodes and weights on `[0, 1]`.
pub fn gauss_legendre_unit(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut deriv = 0.0;
        for _ in 0..100 {
            let (p, dp) = legendre(n, z);
            deriv = dp;
            let dz = p / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                deriv = legendre(n, z).1;
                break;
            }
        }
        let w = 2.0 / ((1.0 - z * z) * deriv * deriv);
        // map [-1, 1] to [0, 1], ascending
        nodes[i] = 0.5 * (1.0 - z);
        nodes[n - 1 - i] = 0.5 * (1.0 + z);
        weights[i] = 0.5 * w;
        weights[n - 1 - i] = 0.5 * w;
    }
    (nodes, weights)
}

/// `P_n(z)` and `P_n'(z)` by the three-term recurrence.
fn legendre(n: usize, z: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, z);
    for k in 2..=n {
        let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
        p0 = p1;
        p1 = p2;
    }
    if n == 0 {
        return (1.0, 0.0);
    }
    (p1, n as f64 * (z * p1 - p0) / (z * z - 1.0))
}

fn trapezoid_unit(n: usize) -> (Vec<f64>, Vec<f64>) {
    let h = 1.0 / (n - 1) as f64;
    let nodes = (0..n).map(|i| i as f64 * h).collect();
    let weights = (0..n).map(|i| if i == 0 || i == n - 1 { 0.5 * h } else { h }).collect();
    (nodes, weights)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn legendre_rule_integrates_polynomials() {
        for n in [8, 16, 64, 128] {
            let (x, w) = gauss_legendre_unit(n);
            assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-13);
            for p in 0..(2 * n.min(10)) {
                let q: f64 = x.iter().zip(&w).map(|(xi, wi)| wi * xi.powi(p as i32)).sum();
                assert!((q - 1.0 / (p as f64 + 1.0)).abs() < 1e-13, "n={n} p={p}");
            }
            assert!(x.windows(2).all(|a| a[0] < a[1]));
        }
    }

    #[test]
    fn grid_integrates_density_to_one() {
        let t = TimeDistribution::default();
        for (scheme, tol) in [(QuadratureScheme::GaussLegendre, 1e-12), (QuadratureScheme::Trapezoid, 1e-4)] {
            let q = QuadratureSpec { scheme, nodes: 400, ..QuadratureSpec::for_time(&t, 64) };
            let (ts, lw) = q.grid(&t).unwrap();
            let total: f64 = ts.iter().zip(&lw).map(|(ti, l)| t.density(*ti) * l.exp()).sum();
            assert!((total - 1.0).abs() < tol, "{scheme:?}: {total}");
        }
    }

    #[test]
    fn rejects_bad_specs() {
        let t = TimeDistribution::default();
        assert!(QuadratureSpec { nodes: 4, ..QuadratureSpec::for_time(&t, 64) }.validate().is_err());
        assert!(QuadratureSpec { t_max: 1.0, ..QuadratureSpec::for_time(&t, 64) }.validate().is_err());
        assert!(QuadratureSpec { t_min: 0.5, t_max: 0.5, ..QuadratureSpec::for_time(&t, 64) }.validate().is_err());
    }
}
