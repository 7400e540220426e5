//! Closed-form Bayes minimizers at a query point.
//!
//! The noised point is `X = (1 - T) X0 + T X1` with `X0` drawn from a
//! Gaussian mixture source and `X1` either a finite point set or another
//! Gaussian mixture. Conditioned on the source component `a`, target
//! component `b` and time `t`, `X` is Gaussian:
//!
//! ```text
//! X | a, b, t ~ N((1 - t) mu_a + t nu_b, s^2 I),  s^2 = (1 - t)^2 sigma_a^2 + t^2 tau_b^2
//! X1 | x, a, b, t ~ N(nu_b + (t tau_b^2 / s^2)(x - m), tau_b^2 (1 - t^2 tau_b^2 / s^2) I)
//! ```
//!
//! A finite point set is the `tau_b = 0` case. The joint posterior over
//! `(b, a, t_q)` is computed once per query in log space and shared by all
//! minimizers.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::quadrature::QuadratureSpec;
use crate::data::{GmmSpec, PointCloud, TimeDistribution};
use crate::error::{Error, Result};
use crate::losses::FmWeight;
use crate::vecops::{dist2, log_sum_exp};

/// One target component; `std = 0` is a point mass.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetComponent {
    pub mean: Vec<f64>,
    pub std: f64,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleTarget {
    dim: usize,
    components: Vec<TargetComponent>,
}

impl OracleTarget {
    /// Uniform weights over the points of a cloud.
    pub fn from_points(cloud: &PointCloud) -> Self {
        let w = 1.0 / cloud.len() as f64;
        let components = cloud
            .iter()
            .map(|p| TargetComponent { mean: p.to_vec(), std: 0.0, weight: w })
            .collect();
        Self { dim: cloud.dim(), components }
    }

    pub fn from_gmm(spec: &GmmSpec) -> Result<Self> {
        spec.validate()?;
        let components = spec
            .components
            .iter()
            .map(|c| TargetComponent { mean: c.mean.clone(), std: c.std, weight: c.weight })
            .collect();
        Ok(Self { dim: spec.dim(), components })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn components(&self) -> &[TargetComponent] {
        &self.components
    }

    pub fn is_discrete(&self) -> bool {
        self.components.iter().all(|c| c.std == 0.0)
    }

    /// The target as a mixture density, when every component has width.
    pub fn as_gmm(&self) -> Option<GmmSpec> {
        if self.components.iter().any(|c| c.std == 0.0) {
            return None;
        }
        let components = self
            .components
            .iter()
            .map(|c| crate::data::GmmComponent { mean: c.mean.clone(), std: c.std, weight: c.weight })
            .collect();
        Some(GmmSpec { components })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OracleConfig {
    pub t_dist: TimeDistribution,
    pub quad: QuadratureSpec,
    pub epsilon: f64,
    pub c0: f64,
    /// Posterior draws of `X1` for the one-step and eikonal minimizers when
    /// the target is continuous.
    pub posterior_samples: usize,
    pub seed: u64,
}

impl Default for OracleConfig {
    fn default() -> Self {
        let t_dist = TimeDistribution::default();
        Self {
            t_dist,
            quad: QuadratureSpec::for_time(&t_dist, 64),
            epsilon: 0.01,
            c0: 0.01,
            posterior_samples: 4096,
            seed: 0,
        }
    }
}

/// The four minimizers and the posterior over target components at `x`.
#[derive(Debug, Clone, PartialEq)]
pub struct MinimizerReport {
    pub x: Vec<f64>,
    pub pi: Vec<f64>,
    pub g_fm: Vec<f64>,
    pub g_rfm: Vec<f64>,
    /// `s_hat - x`
    pub f_os: Vec<f64>,
    /// Points away from the data; negate for a denoising direction.
    pub h_de: Vec<f64>,
    pub s_hat: Vec<f64>,
    /// Effective sample size of the `X1` draws, continuous targets only.
    pub ess: Option<f64>,
}

/// Joint posterior weights over `(target b, source a, node q)`.
#[derive(Debug, Clone)]
pub struct JointPosterior {
    n_source: usize,
    n_nodes: usize,
    probs: Vec<f64>,
}

impl JointPosterior {
    fn index(&self, b: usize, a: usize, q: usize) -> usize {
        (b * self.n_source + a) * self.n_nodes + q
    }

    pub fn prob(&self, b: usize, a: usize, q: usize) -> f64 {
        self.probs[self.index(b, a, q)]
    }

    /// Marginal over target components.
    pub fn target_marginal(&self) -> Vec<f64> {
        self.probs.chunks_exact(self.n_source * self.n_nodes).map(|c| c.iter().sum()).collect()
    }
}

#[derive(Debug, Clone)]
pub struct Oracle {
    source: GmmSpec,
    target: OracleTarget,
    cfg: OracleConfig,
    ts: Vec<f64>,
    log_node_weights: Vec<f64>,
}

impl Oracle {
    pub fn new(source: GmmSpec, target: OracleTarget, cfg: OracleConfig) -> Result<Self> {
        source.validate()?;
        cfg.t_dist.validate()?;
        if source.dim() != target.dim() {
            return Err(Error::Shape { expected: target.dim(), got: source.dim() });
        }
        if target.components.is_empty() {
            return Err(Error::Argument("oracle target is empty".into()));
        }
        if !(cfg.epsilon >= 0.0) || !(cfg.c0 > 0.0) {
            return Err(Error::Config("epsilon must be nonnegative and c0 positive".into()));
        }
        let (ts, mut log_node_weights) = cfg.quad.grid(&cfg.t_dist)?;
        for (lw, t) in log_node_weights.iter_mut().zip(&ts) {
            *lw += cfg.t_dist.density(*t).ln();
        }
        Ok(Self { source, target, cfg, ts, log_node_weights })
    }

    /// Standard normal source, point-set target.
    pub fn for_points(dataset: &PointCloud, cfg: OracleConfig) -> Result<Self> {
        Self::new(GmmSpec::standard_normal(dataset.dim()), OracleTarget::from_points(dataset), cfg)
    }

    pub fn config(&self) -> &OracleConfig {
        &self.cfg
    }

    pub fn target(&self) -> &OracleTarget {
        &self.target
    }

    pub fn source(&self) -> &GmmSpec {
        &self.source
    }

    pub fn dim(&self) -> usize {
        self.target.dim
    }

    fn check_query(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::Shape { expected: self.dim(), got: x.len() });
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("non-finite query point".into()));
        }
        Ok(())
    }

    /// Mixing variance `s^2` and mean `m` of `X | a, b, t`.
    fn marginal(&self, a: usize, b: usize, t: f64, m: &mut [f64]) -> f64 {
        let src = &self.source.components[a];
        let tgt = &self.target.components[b];
        let one = 1.0 - t;
        for ((mj, mu), nu) in m.iter_mut().zip(&src.mean).zip(&tgt.mean) {
            *mj = one * mu + t * nu;
        }
        one * one * src.std * src.std + t * t * tgt.std * tgt.std
    }

    pub fn joint_posterior(&self, x: &[f64]) -> Result<JointPosterior> {
        self.check_query(x)?;
        let d = self.dim() as f64;
        let n_source = self.source.components.len();
        let n_nodes = self.ts.len();
        let mut logp = Vec::with_capacity(self.target.components.len() * n_source * n_nodes);
        let mut m = vec![0.0; self.dim()];
        for (b, tgt) in self.target.components.iter().enumerate() {
            let lwb = tgt.weight.ln();
            for (a, src) in self.source.components.iter().enumerate() {
                let lwa = src.weight.ln();
                for (q, &t) in self.ts.iter().enumerate() {
                    let s2 = self.marginal(a, b, t, &mut m);
                    logp.push(lwb + lwa + self.log_node_weights[q] - 0.5 * d * s2.ln() - 0.5 * dist2(x, &m) / s2);
                }
            }
        }
        let total = log_sum_exp(&logp);
        if !total.is_finite() {
            return Err(Error::DegeneratePosterior);
        }
        let probs = logp.iter().map(|l| (l - total).exp()).collect();
        Ok(JointPosterior { n_source, n_nodes, probs })
    }

    pub fn posterior_index(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(self.joint_posterior(x)?.target_marginal())
    }

    /// `E[X1 | x, a, b, t]` and the conditional variance.
    fn conditional(&self, x: &[f64], a: usize, b: usize, t: f64, out: &mut [f64]) -> f64 {
        let tgt = &self.target.components[b];
        let s2 = self.marginal(a, b, t, out);
        let tau2 = tgt.std * tgt.std;
        let gain = t * tau2 / s2;
        for ((o, nu), xi) in out.iter_mut().zip(&tgt.mean).zip(x) {
            *o = nu + gain * (xi - *o);
        }
        (tau2 * (1.0 - t * gain)).max(0.0)
    }

    /// Flow-matching minimizer `E[w(T) (X1 - X0) | x] / E[w(T) | x]`.
    pub fn fm_minimizer(&self, x: &[f64], weight: FmWeight) -> Result<Vec<f64>> {
        let post = self.joint_posterior(x)?;
        Ok(self.fm_from(&post, x, weight))
    }

    fn fm_from(&self, post: &JointPosterior, x: &[f64], weight: FmWeight) -> Vec<f64> {
        let d = self.dim();
        let mut acc = vec![0.0; d];
        let mut norm = 0.0;
        let mut mean = vec![0.0; d];
        for b in 0..self.target.components.len() {
            for a in 0..self.source.components.len() {
                for (q, &t) in self.ts.iter().enumerate() {
                    let p = post.prob(b, a, q);
                    if p == 0.0 {
                        continue;
                    }
                    self.conditional(x, a, b, t, &mut mean);
                    let w = p * weight.weight(t);
                    let inv = 1.0 / (1.0 - t);
                    for ((acc_j, m), xi) in acc.iter_mut().zip(&mean).zip(x) {
                        *acc_j += w * (m - xi) * inv;
                    }
                    norm += w;
                }
            }
        }
        acc.iter_mut().for_each(|v| *v /= norm);
        acc
    }

    /// All four minimizers at `x`.
    pub fn report(&self, x: &[f64]) -> Result<MinimizerReport> {
        let post = self.joint_posterior(x)?;
        let g_fm = self.fm_from(&post, x, FmWeight::None);
        let g_rfm = self.fm_from(&post, x, FmWeight::InverseOneMinusTSq);
        let pi = post.target_marginal();
        let (s_hat, h_de, ess) = if self.target.is_discrete() {
            let (s, h) = self.discrete_one_step(x, &pi);
            (s, h, None)
        } else {
            let (s, h, ess) = self.sampled_one_step(x, &post)?;
            (s, h, Some(ess))
        };
        let f_os = s_hat.iter().zip(x).map(|(s, xi)| s - xi).collect();
        Ok(MinimizerReport { x: x.to_vec(), pi, g_fm, g_rfm, f_os, h_de, s_hat, ess })
    }

    /// Exact sums over a finite target: `s_hat` and `h_de`.
    fn discrete_one_step(&self, x: &[f64], pi: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let d = self.dim();
        let mut s_num = vec![0.0; d];
        let mut s_den = 0.0;
        let mut h = vec![0.0; d];
        for (b, tgt) in self.target.components.iter().enumerate() {
            let r2 = dist2(x, &tgt.mean);
            let w = pi[b] / (r2 + self.cfg.epsilon);
            let a = pi[b] / (r2 + self.cfg.c0).sqrt();
            for j in 0..d {
                s_num[j] += w * tgt.mean[j];
                h[j] += a * (x[j] - tgt.mean[j]);
            }
            s_den += w;
        }
        if !(s_den > 0.0) || !s_den.is_finite() {
            // x sits on a target point with epsilon = 0: the point itself
            let nearest = self
                .target
                .components
                .iter()
                .min_by(|p, q| dist2(x, &p.mean).total_cmp(&dist2(x, &q.mean)))
                .expect("nonempty");
            return (nearest.mean.clone(), h);
        }
        (s_num.iter().map(|v| v / s_den).collect(), h)
    }

    /// Posterior draws of `X1` for a continuous target.
    fn sampled_one_step(&self, x: &[f64], post: &JointPosterior) -> Result<(Vec<f64>, Vec<f64>, f64)> {
        let d = self.dim();
        let n = self.cfg.posterior_samples.max(1);
        let picker = WeightedIndex::new(&post.probs).map_err(|_| Error::DegeneratePosterior)?;
        let mut rng = ChaCha8Rng::seed_from_u64(self.cfg.seed);
        let mut s_num = vec![0.0; d];
        let mut s_den = 0.0;
        let mut w2 = 0.0;
        let mut h = vec![0.0; d];
        let mut mean = vec![0.0; d];
        let mut draw = vec![0.0; d];
        let per_b = post.n_source * post.n_nodes;
        for _ in 0..n {
            let k = picker.sample(&mut rng);
            let (b, rest) = (k / per_b, k % per_b);
            let (a, q) = (rest / post.n_nodes, rest % post.n_nodes);
            let var = self.conditional(x, a, b, self.ts[q], &mut mean);
            let sd = var.sqrt();
            for (dj, m) in draw.iter_mut().zip(&mean) {
                *dj = m + sd * rng.sample::<f64, _>(StandardNormal);
            }
            let r2 = dist2(x, &draw);
            let w = 1.0 / (r2 + self.cfg.epsilon);
            let a_de = 1.0 / (r2 + self.cfg.c0).sqrt();
            for j in 0..d {
                s_num[j] += w * draw[j];
                h[j] += a_de * (x[j] - draw[j]);
            }
            s_den += w;
            w2 += w * w;
        }
        let s_hat = s_num.iter().map(|v| v / s_den).collect();
        h.iter_mut().for_each(|v| *v /= n as f64);
        Ok((s_hat, h, s_den * s_den / w2))
    }
}

/// Posterior over the points of `dataset` at `x`, standard normal source.
pub fn posterior_index(x: &[f64], dataset: &PointCloud, t_dist: TimeDistribution, quad: QuadratureSpec) -> Result<Vec<f64>> {
    let cfg = OracleConfig { t_dist, quad, ..OracleConfig::default() };
    Oracle::for_points(dataset, cfg)?.posterior_index(x)
}

pub fn fm_minimizer(
    x: &[f64],
    dataset: &PointCloud,
    t_dist: TimeDistribution,
    quad: QuadratureSpec,
    weight: FmWeight,
) -> Result<Vec<f64>> {
    let cfg = OracleConfig { t_dist, quad, ..OracleConfig::default() };
    Oracle::for_points(dataset, cfg)?.fm_minimizer(x, weight)
}

/// `(s_hat, s_hat - x)`.
pub fn osl_minimizer(
    x: &[f64],
    dataset: &PointCloud,
    t_dist: TimeDistribution,
    quad: QuadratureSpec,
    epsilon: f64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let cfg = OracleConfig { t_dist, quad, epsilon, ..OracleConfig::default() };
    let r = Oracle::for_points(dataset, cfg)?.report(x)?;
    Ok((r.s_hat, r.f_os))
}

pub fn del_minimizer(x: &[f64], dataset: &PointCloud, t_dist: TimeDistribution, quad: QuadratureSpec, c0: f64) -> Result<Vec<f64>> {
    let cfg = OracleConfig { t_dist, quad, c0, ..OracleConfig::default() };
    Ok(Oracle::for_points(dataset, cfg)?.report(x)?.h_de)
}

/// `s_hat` from given posterior weights: `sum pi_i w_i s_i / sum pi_i w_i`
/// with `w_i = 1 / (|x - s_i|^2 + epsilon)`.
pub fn one_step_estimate(x: &[f64], points: &PointCloud, pi: &[f64], epsilon: f64) -> Vec<f64> {
    let d = points.dim();
    let mut num = vec![0.0; d];
    let mut den = 0.0;
    for (p, s) in pi.iter().zip(points.iter()) {
        let w = p / (dist2(x, s) + epsilon);
        for (n, sj) in num.iter_mut().zip(s) {
            *n += w * sj;
        }
        den += w;
    }
    num.iter().map(|v| v / den).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::CloudLabel;
    use crate::vecops::norm;

    fn cloud(dim: usize, pts: &[f64]) -> PointCloud {
        PointCloud::new(dim, pts.to_vec(), CloudLabel::Target, 0).unwrap()
    }

    fn quad() -> QuadratureSpec {
        QuadratureSpec::for_time(&TimeDistribution::default(), 64)
    }

    #[test]
    fn symmetric_pair_splits_evenly() {
        let data = cloud(2, &[1.0, 2.0, -1.0, -2.0]);
        let pi = posterior_index(&[0.0, 0.0], &data, TimeDistribution::default(), quad()).unwrap();
        assert!((pi[0] - 0.5).abs() < 1e-14 && (pi[1] - 0.5).abs() < 1e-14);
        let single = cloud(2, &[3.0, 1.0]);
        assert_eq!(posterior_index(&[0.3, 0.1], &single, TimeDistribution::default(), quad()).unwrap(), vec![1.0]);
    }

    #[test]
    fn single_point_fm_vanishes_at_the_point() {
        let data = cloud(2, &[1.0, -1.0]);
        let g = fm_minimizer(&[1.0, -1.0], &data, TimeDistribution::default(), quad(), FmWeight::None).unwrap();
        assert!(norm(&g) < 1e-12);
    }

    #[test]
    fn one_step_single_point_and_midpoint() {
        let data = cloud(2, &[2.0, 5.0]);
        for eps in [1e-6, 0.01, 10.0] {
            let (s, _) = osl_minimizer(&[0.0, 0.0], &data, TimeDistribution::default(), quad(), eps).unwrap();
            assert!(dist2(&s, &[2.0, 5.0]) < 1e-24);
        }
        let pair = cloud(2, &[1.0, 1.0, 1.0, -1.0]);
        let (s, _) = osl_minimizer(&[0.0, 0.0], &pair, TimeDistribution::default(), quad(), 0.01).unwrap();
        assert!(dist2(&s, &[1.0, 0.0]) < 1e-24);
    }

    #[test]
    fn one_step_inverse_distance_weights() {
        let data = cloud(2, &[1.0, 0.0, 0.0, 5.0]);
        let s = one_step_estimate(&[0.0, 0.0], &data, &[0.5, 0.5], 0.0);
        let expect = [25.0 / 26.0, 5.0 / 26.0];
        assert!(dist2(&s, &expect) < 1e-28);
    }

    #[test]
    fn eikonal_minimizer_norms() {
        let single = cloud(1, &[0.0]);
        let c0 = 0.09;
        let h = del_minimizer(&[0.3], &single, TimeDistribution::default(), quad(), c0).unwrap();
        assert!((norm(&h) - 1.0 / 2f64.sqrt()).abs() < 1e-14);

        // large offset: h ~ (x - E_pi[s]) / sqrt(c0)
        let data = cloud(2, &[1.0, 0.0, -0.5, 2.0, 0.3, -1.0]);
        let x = [0.2, 0.4];
        let big = 1e8;
        let h = del_minimizer(&x, &data, TimeDistribution::default(), quad(), big).unwrap();
        let pi = posterior_index(&x, &data, TimeDistribution::default(), quad()).unwrap();
        let mut mean = [0.0; 2];
        for (p, s) in pi.iter().zip(data.iter()) {
            mean[0] += p * s[0];
            mean[1] += p * s[1];
        }
        for j in 0..2 {
            let series = (x[j] - mean[j]) / big.sqrt();
            assert!((h[j] - series).abs() <= 1e-6 * series.abs());
        }
    }

    #[test]
    fn quadrature_nodes_at_one_rejected() {
        let data = cloud(1, &[0.0]);
        let q = QuadratureSpec { t_max: 1.0, ..quad() };
        assert!(matches!(posterior_index(&[0.5], &data, TimeDistribution::default(), q), Err(Error::Config(_))));
    }

    #[test]
    fn continuous_target_reduces_to_points_as_std_vanishes() {
        let spec = GmmSpec::eight_gaussians(2.0, 1e-9);
        let pts: Vec<f64> = spec.components.iter().flat_map(|c| c.mean.clone()).collect();
        let data = cloud(2, &pts);
        let cfg = OracleConfig::default();
        let a = Oracle::new(GmmSpec::standard_normal(2), OracleTarget::from_gmm(&spec).unwrap(), cfg).unwrap();
        let b = Oracle::for_points(&data, cfg).unwrap();
        let x = [0.4, -0.3];
        let (ra, rb) = (a.report(&x).unwrap(), b.report(&x).unwrap());
        for (u, v) in ra.g_fm.iter().zip(&rb.g_fm) {
            assert!((u - v).abs() < 1e-6);
        }
        // sampled, so only agrees to Monte Carlo accuracy
        for (u, v) in ra.s_hat.iter().zip(&rb.s_hat) {
            assert!((u - v).abs() < 0.05, "{u} vs {v}");
        }
        assert!(ra.ess.unwrap() > 100.0);
    }
}
