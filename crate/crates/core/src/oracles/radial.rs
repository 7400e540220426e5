//! Members of the radial family `d = ±sqrt(|x - s|^2 + C)` all project
//! `x` onto `s` through `x - d ∇d`.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Branch {
    Positive,
    Negative,
}

impl Branch {
    fn sign(self) -> f64 {
        match self {
            Branch::Positive => 1.0,
            Branch::Negative => -1.0,
        }
    }
}

/// `|x - d(x) ∇d(x) - s|` for the family member with offset `C` and `branch`.
pub fn radial_family_check(x: &[f64], s_closest: &[f64], offset: f64, branch: Branch) -> Result<f64> {
    if x.len() != s_closest.len() {
        return Err(Error::Shape { expected: x.len(), got: s_closest.len() });
    }
    if !(offset >= 0.0) {
        return Err(Error::Argument("offset C must be nonnegative".into()));
    }
    let r2: f64 = x.iter().zip(s_closest).map(|(a, b)| (a - b) * (a - b)).sum();
    let d = branch.sign() * (r2 + offset).sqrt();
    if d == 0.0 {
        return Err(Error::SingularFamily);
    }
    let mut resid = 0.0;
    for (xi, si) in x.iter().zip(s_closest) {
        // ∇d = sign (x - s) / sqrt(r2 + C) = (x - s) / d
        let grad = (xi - si) / d;
        let projected = xi - d * grad;
        resid += (projected - si) * (projected - si);
    }
    Ok(resid.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn worked_cases() {
        assert_eq!(radial_family_check(&[3.0], &[0.0], 0.0, Branch::Positive).unwrap(), 0.0);
        assert_eq!(radial_family_check(&[3.0], &[0.0], 7.0, Branch::Positive).unwrap(), 0.0);
        assert!(matches!(radial_family_check(&[1.0], &[1.0], 0.0, Branch::Negative), Err(Error::SingularFamily)));
    }
}
