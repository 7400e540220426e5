//! Angles between the denoising directions of the minimizers.

use super::posterior::MinimizerReport;
use crate::error::{Error, Result};
use crate::vecops::angle;

/// Below this the additivity ratio is not meaningful.
const DEGENERATE_ANGLE: f64 = 1e-9;

/// Pairwise angles in radians between `f` (one-step), `g` (flow matching)
/// and `h` (negated eikonal, i.e. pointing toward the data).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AngleReport {
    pub angle_os_fm: f64,
    pub angle_os_de: f64,
    pub angle_fm_de: f64,
    /// `angle(f, g) / (angle(f, h) + angle(g, h))`
    pub additivity_ratio: f64,
    /// `f` and `g` coincide or all three are collinear.
    pub degenerate: bool,
}

pub fn angle_triplet(f: &[f64], g: &[f64], h: &[f64]) -> Result<AngleReport> {
    let fg = angle(f, g).ok_or(Error::UndefinedAngle("one-step or flow-matching direction"))?;
    let fh = angle(f, h).ok_or(Error::UndefinedAngle("one-step or eikonal direction"))?;
    let gh = angle(g, h).ok_or(Error::UndefinedAngle("flow-matching or eikonal direction"))?;
    let den = fh + gh;
    let degenerate = fg < DEGENERATE_ANGLE || den < DEGENERATE_ANGLE;
    let additivity_ratio = if den > 0.0 { fg / den } else { 0.0 };
    Ok(AngleReport { angle_os_fm: fg, angle_os_de: fh, angle_fm_de: gh, additivity_ratio, degenerate })
}

/// Uses `f_os`, `g_fm` and `-h_de`.
pub fn angle_analysis(report: &MinimizerReport) -> Result<AngleReport> {
    let h: Vec<f64> = report.h_de.iter().map(|v| -v).collect();
    angle_triplet(&report.f_os, &report.g_fm, &h)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn planar_bisector_is_additive() {
        let r = angle_triplet(&[1.0, 0.0], &[0.0, 1.0], &[1.0, 1.0]).unwrap();
        assert!((r.additivity_ratio - 1.0).abs() < 1e-15);
        assert!(!r.degenerate);
        let r = angle_triplet(&[1.0, 0.0], &[0.0, 1.0], &[0.9, 0.1]).unwrap();
        assert!((r.additivity_ratio - 1.0).abs() < 1e-15);
    }

    #[test]
    fn outside_the_wedge_is_subadditive() {
        let r = angle_triplet(&[1.0, 0.0], &[0.0, 1.0], &[-1.0, 1.0]).unwrap();
        assert!(r.additivity_ratio < 1.0);
    }

    #[test]
    fn coincident_directions_flagged() {
        let r = angle_triplet(&[1.0, 1.0], &[2.0, 2.0], &[1.0, 0.0]).unwrap();
        assert_eq!(r.additivity_ratio, 0.0);
        assert!(r.degenerate);
        assert!(matches!(angle_triplet(&[0.0, 0.0], &[1.0, 0.0], &[1.0, 1.0]), Err(Error::UndefinedAngle(_))));
    }
}
