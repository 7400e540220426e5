//! Training objectives: one-step loss, directional eikonal loss, their
//! weighted sum, and (reweighted) flow matching for comparison.
//!
//! Every loss is written once as a function of the field outputs `(u, v)` on
//! a batch, returning its adjoints too. The same code path serves plain
//! evaluation on any [`Field`] and exact parameter gradients through
//! [`crate::field::loss_gradients`].

use std::cell::Cell;
use std::io::Write;

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::data::PairBatch;
use crate::error::{Error, Result};
use crate::field::{Field, Objective};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FmWeight {
    #[default]
    None,
    /// `w(t) = (1 - t)^-2`
    InverseOneMinusTSq,
}

impl FmWeight {
    pub fn weight(self, t: f64) -> f64 {
        match self {
            FmWeight::None => 1.0,
            FmWeight::InverseOneMinusTSq => 1.0 / ((1.0 - t) * (1.0 - t)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LossConfig {
    pub epsilon: f64,
    pub c0: f64,
    pub lambda1: f64,
    pub lambda2: f64,
    pub fm_weight_mode: FmWeight,
    /// Divide the one-step residual by `|x - s|^2 + epsilon`.
    pub normalize_osl: bool,
    /// Permit `epsilon = c0 = 0` for the unstabilized ablation.
    pub allow_zero_offsets: bool,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            epsilon: 0.01,
            c0: 0.01,
            lambda1: 0.1,
            lambda2: 1.0,
            fm_weight_mode: FmWeight::None,
            normalize_osl: true,
            allow_zero_offsets: false,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = |v: f64| if self.allow_zero_offsets { v >= 0.0 } else { v > 0.0 };
        if !ok(self.epsilon) || !self.epsilon.is_finite() {
            return Err(Error::Config(format!("epsilon must be positive, got {}", self.epsilon)));
        }
        if !ok(self.c0) || !self.c0.is_finite() {
            return Err(Error::Config(format!("c0 must be positive, got {}", self.c0)));
        }
        if !(self.lambda1 >= 0.0) || !(self.lambda2 >= 0.0) {
            return Err(Error::Config("loss weights must be nonnegative".into()));
        }
        Ok(())
    }
}

/// Loss values for one batch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossTerms {
    pub osl: f64,
    pub del: f64,
    pub total: f64,
}

/// Norm of the directional target `r / sqrt(r^2 + c0)` for `r = |x - s|`.
pub fn eikonal_target_norm(r: f64, c0: f64) -> f64 {
    r / (r * r + c0).sqrt()
}

/// `x - u(x) v(x)` for any field.
pub fn denoise(field: &dyn Field, x: &[f64]) -> Result<Vec<f64>> {
    if x.len() != field.dim() {
        return Err(Error::Shape { expected: field.dim(), got: x.len() });
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Domain("non-finite input to denoise".into()));
    }
    let (u, v) = field.eval_flat(x)?;
    Ok(x.iter().zip(&v).map(|(xi, vi)| xi - u[0] * vi).collect())
}

/// Weighted one-step and eikonal terms with adjoints w.r.t. `u` and `v`.
fn combined_terms(
    batch: &PairBatch,
    u: &[f64],
    v: ArrayView2<f64>,
    cfg: &LossConfig,
) -> (LossTerms, Vec<f64>, Array2<f64>) {
    let n = batch.len();
    let d = batch.dim();
    let inv_n = 1.0 / n as f64;
    let mut du = vec![0.0; n];
    let mut dv = Array2::zeros((n, d));
    let (mut osl, mut del) = (0.0, 0.0);
    let mut resid = vec![0.0; d];
    for i in 0..n {
        let x = batch.x.row(i);
        let s = batch.s_data.row(i);
        let vi = v.row(i);
        let mut r2 = 0.0;
        let mut num = 0.0;
        for j in 0..d {
            let diff = x[j] - s[j];
            r2 += diff * diff;
            resid[j] = diff - u[i] * vi[j];
            num += resid[j] * resid[j];
        }
        let den = if cfg.normalize_osl { r2 + cfg.epsilon } else { 1.0 };
        osl += num / den;
        let a = cfg.lambda1 * 2.0 * inv_n / den;
        let scale = 1.0 / (r2 + cfg.c0).sqrt();
        let b = cfg.lambda2 * 2.0 * inv_n;
        let mut du_i = 0.0;
        for j in 0..d {
            du_i -= a * resid[j] * vi[j];
            let e = vi[j] - (x[j] - s[j]) * scale;
            del += e * e;
            dv[[i, j]] = -a * u[i] * resid[j] + b * e;
        }
        du[i] = du_i;
    }
    osl *= inv_n;
    del *= inv_n;
    let terms = LossTerms { osl, del, total: cfg.lambda1 * osl + cfg.lambda2 * del };
    (terms, du, dv)
}

fn fm_terms(batch: &PairBatch, v: ArrayView2<f64>, weight: FmWeight) -> Result<(f64, Array2<f64>)> {
    let n = batch.len();
    let inv_n = 1.0 / n as f64;
    let mut dv = Array2::zeros(v.raw_dim());
    let mut total = 0.0;
    for i in 0..n {
        let t = batch.t[i];
        if !(t < 1.0) {
            return Err(Error::Domain(format!("pair {i} has t = {t}, expected t < 1")));
        }
        let w = weight.weight(t);
        for j in 0..batch.dim() {
            let e = v[[i, j]] - (batch.s_data[[i, j]] - batch.x0[[i, j]]);
            total += w * e * e;
            dv[[i, j]] = 2.0 * w * e * inv_n;
        }
    }
    Ok((total * inv_n, dv))
}

fn eval_on(field: &dyn Field, batch: &PairBatch) -> Result<(Vec<f64>, Array2<f64>)> {
    if batch.is_empty() {
        return Err(Error::Argument("empty pair batch".into()));
    }
    if batch.dim() != field.dim() {
        return Err(Error::Shape { expected: field.dim(), got: batch.dim() });
    }
    let x = batch.x.as_standard_layout();
    let (u, v) = field.eval_flat(x.as_slice().expect("standard layout"))?;
    Ok((u, Array2::from_shape_vec((batch.len(), batch.dim()), v).expect("shape")))
}

/// All loss terms under `cfg`.
pub fn loss_terms(field: &dyn Field, batch: &PairBatch, cfg: &LossConfig) -> Result<LossTerms> {
    cfg.validate()?;
    let (u, v) = eval_on(field, batch)?;
    Ok(combined_terms(batch, &u, v.view(), cfg).0)
}

/// Mean of `|denoise(x) - s|^2 / (|x - s|^2 + epsilon)`.
pub fn one_step_loss(field: &dyn Field, batch: &PairBatch, epsilon: f64) -> Result<f64> {
    let cfg = LossConfig { epsilon, lambda1: 1.0, lambda2: 0.0, ..LossConfig::default() };
    Ok(loss_terms(field, batch, &cfg)?.osl)
}

/// Mean of `|v(x) - (x - s) / sqrt(|x - s|^2 + c0)|^2`.
pub fn directional_eikonal_loss(field: &dyn Field, batch: &PairBatch, c0: f64) -> Result<f64> {
    let cfg = LossConfig { c0, lambda1: 0.0, lambda2: 1.0, ..LossConfig::default() };
    Ok(loss_terms(field, batch, &cfg)?.del)
}

/// `lambda1 · one_step + lambda2 · eikonal`.
pub fn combined_loss(field: &dyn Field, batch: &PairBatch, cfg: &LossConfig) -> Result<f64> {
    Ok(loss_terms(field, batch, cfg)?.total)
}

/// Mean of `w(t) |v(x) - (s - x0)|^2`, with `v` the field's direction output.
pub fn flow_matching_loss(field: &dyn Field, batch: &PairBatch, weight: FmWeight) -> Result<f64> {
    let (_, v) = eval_on(field, batch)?;
    Ok(fm_terms(batch, v.view(), weight)?.0)
}

/// The weighted one-step + eikonal objective as an [`Objective`].
pub struct CombinedObjective<'a> {
    pub batch: &'a PairBatch,
    pub cfg: LossConfig,
    last: Cell<Option<LossTerms>>,
}

impl<'a> CombinedObjective<'a> {
    pub fn new(batch: &'a PairBatch, cfg: LossConfig) -> Self {
        Self { batch, cfg, last: Cell::new(None) }
    }

    /// Terms from the most recent evaluation.
    pub fn last_terms(&self) -> Option<LossTerms> {
        self.last.get()
    }
}

impl Objective for CombinedObjective<'_> {
    fn inputs(&self) -> ArrayView2<'_, f64> {
        self.batch.x.view()
    }

    fn value_and_adjoints(&self, u: &[f64], v: ArrayView2<f64>) -> Result<(f64, Vec<f64>, Array2<f64>)> {
        self.cfg.validate()?;
        let (terms, du, dv) = combined_terms(self.batch, u, v, &self.cfg);
        if !terms.osl.is_finite() {
            return Err(Error::Numeric { context: "one-step loss term".into() });
        }
        if !terms.del.is_finite() {
            return Err(Error::Numeric { context: "eikonal loss term".into() });
        }
        self.last.set(Some(terms));
        Ok((terms.total, du, dv))
    }
}

/// Flow matching on the direction output as an [`Objective`].
pub struct FlowMatchingObjective<'a> {
    pub batch: &'a PairBatch,
    pub weight: FmWeight,
}

impl Objective for FlowMatchingObjective<'_> {
    fn inputs(&self) -> ArrayView2<'_, f64> {
        self.batch.x.view()
    }

    fn value_and_adjoints(&self, u: &[f64], v: ArrayView2<f64>) -> Result<(f64, Vec<f64>, Array2<f64>)> {
        let (value, dv) = fm_terms(self.batch, v, self.weight)?;
        Ok((value, vec![0.0; u.len()], dv))
    }
}

/// One row of the training log.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogRow {
    pub step: usize,
    pub osl: f64,
    pub del: f64,
    pub total: f64,
    pub grad_norm: f64,
}

pub fn write_log_csv<W: Write>(rows: &[LogRow], mut w: W) -> Result<()> {
    writeln!(w, "step,osl,del,total,grad_norm")?;
    for r in rows {
        writeln!(w, "{},{},{},{},{}", r.step, r.osl, r.del, r.total, r.grad_norm)?;
    }
    Ok(())
}
