//! Paths that follow a minimizer's denoising direction, with the curves used
//! to compare them: turning angles, target log-density and outlierness.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};
use statrs::function::gamma::ln_gamma;

use super::montecarlo::MIN_ESS;
use super::posterior::{MinimizerReport, Oracle};
use crate::data::GmmSpec;
use crate::error::{Error, Result};
use crate::samplers::Trajectory;
use crate::vecops::{angle, dist2, norm};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MinimizerKind {
    Fm,
    Rfm,
    Osl,
    Del,
}

impl MinimizerKind {
    pub const ALL: [MinimizerKind; 4] = [MinimizerKind::Fm, MinimizerKind::Rfm, MinimizerKind::Osl, MinimizerKind::Del];

    pub fn name(self) -> &'static str {
        match self {
            MinimizerKind::Fm => "fm",
            MinimizerKind::Rfm => "rfm",
            MinimizerKind::Osl => "osl",
            MinimizerKind::Del => "del",
        }
    }
}

/// Direction that moves `x` toward the data under each minimizer.
pub fn denoising_direction(report: &MinimizerReport, kind: MinimizerKind) -> Vec<f64> {
    match kind {
        MinimizerKind::Fm => report.g_fm.clone(),
        MinimizerKind::Rfm => report.g_rfm.clone(),
        MinimizerKind::Osl => report.f_os.clone(),
        MinimizerKind::Del => report.h_de.iter().map(|v| -v).collect(),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleTrajectory {
    /// `u_values` holds the norm of the denoising direction at each state.
    pub trajectory: Trajectory,
    /// Angle between consecutive steps, radians.
    pub turning_angles: Vec<f64>,
    /// Target log-density per state; empty for point-set targets.
    pub log_density: Vec<f64>,
    /// Outlierness per state; empty for point-set targets.
    pub outlierness: Vec<f64>,
    pub min_ess: Option<f64>,
    /// Some posterior estimate had fewer than [`MIN_ESS`] effective samples.
    pub ess_warning: bool,
}

impl OracleTrajectory {
    pub fn mean_turning_angle(&self) -> f64 {
        if self.turning_angles.is_empty() {
            return 0.0;
        }
        self.turning_angles.iter().sum::<f64>() / self.turning_angles.len() as f64
    }
}

/// `-ln P(chi2_D >= z2)`, switching to the leading terms of the asymptotic
/// tail once the survival function underflows.
pub fn chi2_neg_log_sf(z2: f64, dof: usize) -> f64 {
    let dist = ChiSquared::new(dof as f64).expect("positive degrees of freedom");
    let sf = dist.sf(z2);
    if sf > 1e-250 {
        return -sf.ln();
    }
    let a = 0.5 * dof as f64;
    let y = 0.5 * z2;
    let series = 1.0 + (a - 1.0) / y + (a - 1.0) * (a - 2.0) / (y * y);
    -((a - 1.0) * y.ln() - y - ln_gamma(a) + series.ln())
}

/// `-ln p` for the smallest per-component `z^2 = |x - mu|^2 / sigma^2`.
pub fn outlierness(x: &[f64], spec: &GmmSpec) -> f64 {
    let z2 = spec
        .components
        .iter()
        .map(|c| dist2(x, &c.mean) / (c.std * c.std))
        .fold(f64::INFINITY, f64::min);
    chi2_neg_log_sf(z2, x.len())
}

/// Iterate `x <- x + eta · direction(x)` for `steps` steps.
pub fn oracle_trajectory(oracle: &Oracle, x0: &[f64], kind: MinimizerKind, eta: f64, steps: usize) -> Result<OracleTrajectory> {
    if !(eta >= 0.0 && eta.is_finite()) {
        return Err(Error::Argument("eta must be nonnegative".into()));
    }
    let density = oracle.target().as_gmm();
    let mut x = x0.to_vec();
    let mut traj = Trajectory::default();
    let mut log_density = Vec::new();
    let mut outlier = Vec::new();
    let mut min_ess: Option<f64> = None;
    let mut prev_step: Option<Vec<f64>> = None;
    let mut turning = Vec::new();
    for k in 0..=steps {
        let report = oracle.report(&x)?;
        traj.nfe += 1;
        if let Some(e) = report.ess {
            min_ess = Some(min_ess.map_or(e, |m: f64| m.min(e)));
        }
        let dir = denoising_direction(&report, kind);
        traj.states.push(x.clone());
        traj.u_values.push(norm(&dir));
        if let Some(spec) = &density {
            log_density.push(spec.log_density(&x));
            outlier.push(outlierness(&x, spec));
        }
        if k == steps {
            break;
        }
        let step: Vec<f64> = dir.iter().map(|v| eta * v).collect();
        if let Some(prev) = &prev_step {
            turning.push(angle(prev, &step).unwrap_or(0.0));
        }
        let next: Vec<f64> = x.iter().zip(&step).map(|(a, b)| a + b).collect();
        if next.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteState { step: k + 1 });
        }
        traj.step_norms.push(norm(&step));
        x = next;
        prev_step = Some(step);
    }
    Ok(OracleTrajectory {
        trajectory: traj,
        turning_angles: turning,
        log_density,
        outlierness: outlier,
        min_ess,
        ess_warning: min_ess.is_some_and(|e| e < MIN_ESS),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tail_switch_is_continuous() {
        // just below and above the switch point the two forms agree
        let dof = 8;
        for z2 in [50.0, 100.0, 400.0] {
            let dist = ChiSquared::new(dof as f64).unwrap();
            let exact = -dist.sf(z2).ln();
            let a = 0.5 * dof as f64;
            let y = 0.5 * z2;
            let series = 1.0 + (a - 1.0) / y + (a - 1.0) * (a - 2.0) / (y * y);
            let approx = -((a - 1.0) * y.ln() - y - ln_gamma(a) + series.ln());
            assert!((exact - approx).abs() / exact < 1e-3, "z2={z2}: {exact} vs {approx}");
        }
        assert!(chi2_neg_log_sf(1e5, 8).is_finite());
        assert!(chi2_neg_log_sf(1e5, 8) > chi2_neg_log_sf(1e4, 8));
    }

    #[test]
    fn outlierness_small_at_component_mean() {
        let spec = GmmSpec::default_8d_target();
        let at_mean = outlierness(&spec.components[0].mean, &spec);
        assert!(at_mean.abs() < 1e-12);
        let far = outlierness(&[0.0; 8], &spec);
        assert!(far > 10.0);
    }
}
