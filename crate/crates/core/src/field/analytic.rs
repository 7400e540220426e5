//! Closed-form members of the radial family `±sqrt(|x - s(x)|^2 + C)` for a
//! finite target set, where `s(x)` is the closest target point.

use super::Field;
use crate::error::{Error, Result};
use crate::vecops::dist2;

#[derive(Debug, Clone)]
pub struct RadialField {
    dim: usize,
    points: Vec<f64>,
    offset: f64,
    sign: f64,
}

impl RadialField {
    /// `points` is a flat `n × dim` slice; `offset` is `C >= 0`.
    pub fn new(dim: usize, points: Vec<f64>, offset: f64, positive: bool) -> Result<Self> {
        if dim == 0 || points.is_empty() || points.len() % dim != 0 {
            return Err(Error::Argument("radial field needs a nonempty point set".into()));
        }
        if !(offset >= 0.0) {
            return Err(Error::Argument("offset C must be nonnegative".into()));
        }
        Ok(Self { dim, points, offset, sign: if positive { 1.0 } else { -1.0 } })
    }

    /// Unsigned field to the origin.
    pub fn origin(dim: usize, offset: f64) -> Self {
        Self::new(dim, vec![0.0; dim], offset, true).expect("valid origin field")
    }

    pub fn closest(&self, x: &[f64]) -> &[f64] {
        self.points
            .chunks_exact(self.dim)
            .min_by(|a, b| dist2(x, a).total_cmp(&dist2(x, b)))
            .expect("nonempty")
    }

    pub fn value_and_gradient(&self, x: &[f64]) -> Result<(f64, Vec<f64>)> {
        let s = self.closest(x);
        let d = self.sign * (dist2(x, s) + self.offset).sqrt();
        if d == 0.0 {
            return Err(Error::SingularFamily);
        }
        Ok((d, x.iter().zip(s).map(|(xi, si)| (xi - si) / d).collect()))
    }
}

impl Field for RadialField {
    fn dim(&self) -> usize {
        self.dim
    }

    fn eval_flat(&self, xs: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        let mut u = Vec::with_capacity(xs.len() / self.dim);
        let mut v = Vec::with_capacity(xs.len());
        for x in xs.chunks_exact(self.dim) {
            let s = self.closest(x);
            let d = self.sign * (dist2(x, s) + self.offset).sqrt();
            u.push(d);
            if d == 0.0 {
                // x on the set with C = 0: treat the gradient as zero.
                v.extend(std::iter::repeat_n(0.0, self.dim));
            } else {
                v.extend(x.iter().zip(s).map(|(xi, si)| (xi - si) / d));
            }
        }
        Ok((u, v))
    }

    fn is_conservative(&self) -> bool {
        true
    }
}
