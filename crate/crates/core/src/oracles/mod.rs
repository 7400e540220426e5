//! Bayes-optimal directions of each training objective at a fixed query
//! point, their Monte Carlo cross-checks, and analyses built on them.

mod angles;
mod montecarlo;
mod posterior;
mod quadrature;
mod radial;
mod trajectory;

pub use angles::{angle_analysis, angle_triplet, AngleReport};
pub use montecarlo::{monte_carlo_report, McEstimate, McReport, TargetDraws, MIN_ESS};
pub use posterior::{
    del_minimizer, fm_minimizer, one_step_estimate, osl_minimizer, posterior_index, JointPosterior, MinimizerReport,
    Oracle, OracleConfig, OracleTarget, TargetComponent,
};
pub use quadrature::{gauss_legendre_unit, QuadratureScheme, QuadratureSpec};
pub use radial::{radial_family_check, Branch};
pub use trajectory::{
    chi2_neg_log_sf, denoising_direction, oracle_trajectory, outlierness, MinimizerKind, OracleTrajectory,
};
