//! Brute-force Monte Carlo estimates of the same minimizers.
//!
//! Draws `(I, S, T)` from the generative process and weights each draw by the
//! density of the source point it implies, `x0 = (x - t s) / (1 - t)`, times
//! the Jacobian `(1 - t)^-d`. No quadrature and no closed-form posterior are
//! involved, so agreement with [`super::Oracle`] checks both.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::data::{GmmSpec, PointCloud, TimeDistribution};
use crate::error::{Error, Result};
use crate::vecops::dist2;

/// Below this effective sample size an estimate carries a warning.
pub const MIN_ESS: f64 = 200.0;

/// Self-normalized estimate with per-coordinate standard errors.
#[derive(Debug, Clone, PartialEq)]
pub struct McEstimate {
    pub mean: Vec<f64>,
    pub se: Vec<f64>,
}

impl McEstimate {
    /// Largest `|mean - reference| / se` over coordinates.
    pub fn max_z(&self, reference: &[f64]) -> f64 {
        self.mean
            .iter()
            .zip(&self.se)
            .zip(reference)
            .map(|((m, s), r)| if *s > 0.0 { (m - r).abs() / s } else if m == r { 0.0 } else { f64::INFINITY })
            .fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct McReport {
    pub pi: McEstimate,
    pub g_fm: McEstimate,
    pub g_rfm: McEstimate,
    pub s_hat: McEstimate,
    pub h_de: McEstimate,
    pub ess: f64,
    pub low_ess: bool,
}

/// What the target draws come from.
#[derive(Debug, Clone, Copy)]
pub enum TargetDraws<'a> {
    Points(&'a PointCloud),
    Mixture(&'a GmmSpec),
}

impl TargetDraws<'_> {
    fn dim(&self) -> usize {
        match self {
            TargetDraws::Points(c) => c.dim(),
            TargetDraws::Mixture(g) => g.dim(),
        }
    }

    fn n_labels(&self) -> usize {
        match self {
            TargetDraws::Points(c) => c.len(),
            TargetDraws::Mixture(g) => g.components.len(),
        }
    }
}

/// Weighted accumulation of a vector statistic.
struct Accumulator {
    values: Vec<f64>,
    dim: usize,
}

impl Accumulator {
    fn new(dim: usize, n: usize) -> Self {
        Self { values: Vec::with_capacity(dim * n), dim }
    }

    fn push(&mut self, v: &[f64]) {
        self.values.extend_from_slice(v);
    }

    fn estimate(&self, weights: &[f64]) -> McEstimate {
        let total: f64 = weights.iter().sum();
        let mut mean = vec![0.0; self.dim];
        for (w, v) in weights.iter().zip(self.values.chunks_exact(self.dim)) {
            for (m, vj) in mean.iter_mut().zip(v) {
                *m += w * vj;
            }
        }
        mean.iter_mut().for_each(|m| *m /= total);
        let mut var = vec![0.0; self.dim];
        for (w, v) in weights.iter().zip(self.values.chunks_exact(self.dim)) {
            for ((s, vj), m) in var.iter_mut().zip(v).zip(&mean) {
                *s += w * w * (vj - m) * (vj - m);
            }
        }
        let se = var.iter().map(|s| s.sqrt() / total).collect();
        McEstimate { mean, se }
    }
}

pub fn monte_carlo_report<R: Rng + ?Sized>(
    x: &[f64],
    target: TargetDraws<'_>,
    source: &GmmSpec,
    t_dist: &TimeDistribution,
    epsilon: f64,
    c0: f64,
    samples: usize,
    rng: &mut R,
) -> Result<McReport> {
    source.validate()?;
    t_dist.validate()?;
    let d = target.dim();
    if x.len() != d || source.dim() != d {
        return Err(Error::Shape { expected: d, got: x.len() });
    }
    if samples == 0 {
        return Err(Error::Argument("need at least one sample".into()));
    }
    let labels = target.n_labels();
    let picker = match target {
        TargetDraws::Points(_) => None,
        TargetDraws::Mixture(g) => {
            g.validate()?;
            Some(WeightedIndex::new(g.components.iter().map(|c| c.weight)).map_err(|e| Error::Config(e.to_string()))?)
        }
    };

    let mut log_w = Vec::with_capacity(samples);
    let mut one_minus_t = Vec::with_capacity(samples);
    let mut omega = Vec::with_capacity(samples);
    let mut pi = Accumulator::new(labels, samples);
    let mut delta = Accumulator::new(d, samples);
    let mut s_acc = Accumulator::new(d, samples);
    let mut h_acc = Accumulator::new(d, samples);
    let mut s = vec![0.0; d];
    let mut indicator = vec![0.0; labels];
    let mut x0 = vec![0.0; d];
    let mut h = vec![0.0; d];
    for _ in 0..samples {
        let label = match (target, &picker) {
            (TargetDraws::Points(c), _) => {
                let i = rng.random_range(0..c.len());
                s.copy_from_slice(c.point(i));
                i
            }
            (TargetDraws::Mixture(g), Some(p)) => {
                let b = p.sample(rng);
                let comp = &g.components[b];
                for (sj, m) in s.iter_mut().zip(&comp.mean) {
                    *sj = m + comp.std * rng.sample::<f64, _>(StandardNormal);
                }
                b
            }
            _ => unreachable!("mixture draws always have a picker"),
        };
        let t = t_dist.sample(rng);
        let one = 1.0 - t;
        for j in 0..d {
            x0[j] = (x[j] - t * s[j]) / one;
        }
        log_w.push(source.log_density(&x0) - d as f64 * one.ln());
        one_minus_t.push(one);

        indicator.iter_mut().for_each(|v| *v = 0.0);
        indicator[label] = 1.0;
        pi.push(&indicator);
        let r2 = dist2(x, &s);
        for j in 0..d {
            h[j] = (x[j] - s[j]) / (r2 + c0).sqrt();
            x0[j] = s[j] - x0[j];
        }
        delta.push(&x0);
        s_acc.push(&s);
        h_acc.push(&h);
        omega.push(1.0 / (r2 + epsilon));
    }

    let max = log_w.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return Err(Error::DegeneratePosterior);
    }
    let w: Vec<f64> = log_w.iter().map(|l| (l - max).exp()).collect();
    let w_rfm: Vec<f64> = w.iter().zip(&one_minus_t).map(|(w, o)| w / (o * o)).collect();
    let w_os: Vec<f64> = w.iter().zip(&omega).map(|(w, o)| w * o).collect();
    let sum: f64 = w.iter().sum();
    let sum_sq: f64 = w.iter().map(|v| v * v).sum();
    let ess = sum * sum / sum_sq;
    Ok(McReport {
        pi: pi.estimate(&w),
        g_fm: delta.estimate(&w),
        g_rfm: delta.estimate(&w_rfm),
        s_hat: s_acc.estimate(&w_os),
        h_de: h_acc.estimate(&w),
        ess,
        low_ess: ess < MIN_ESS,
    })
}
