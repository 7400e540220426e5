//! Marching a point toward the data through a [`Field`]: sphere tracing,
//! gradient descent (fixed budget or adaptive stop), unadjusted Langevin and
//! tempered HMC. Every field evaluation is counted in [`Trajectory::nfe`].

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{CloudLabel, PointCloud};
use crate::error::{Error, Result};
use crate::field::Field;
use crate::vecops::{dist2, dot};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplerKind {
    SphereTracing,
    GradientDescent,
    AdaptiveGd,
    Ula,
    Hmc,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SamplerConfig {
    pub kind: SamplerKind,
    pub eta: f64,
    pub max_steps: usize,
    /// Stop once `u` drops below this value; 0 disables the rule. Ignored by
    /// the adaptive sampler.
    pub stop_threshold: f64,
    pub patience: usize,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            kind: SamplerKind::SphereTracing,
            eta: 1.0,
            max_steps: 100,
            stop_threshold: default_stop_threshold(0.01),
            patience: 10,
        }
    }
}

/// `1.05 · sqrt(c0)`, just above the floor of the smoothed distance.
pub fn default_stop_threshold(c0: f64) -> f64 {
    1.05 * c0.sqrt()
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        // eta = 0 is allowed and gives a constant trajectory.
        if !(self.eta >= 0.0 && self.eta.is_finite()) {
            return Err(Error::Config(format!("eta must be nonnegative, got {}", self.eta)));
        }
        if self.max_steps == 0 {
            return Err(Error::Config("max_steps must be at least 1".into()));
        }
        if !(self.stop_threshold >= 0.0) {
            return Err(Error::Config("stop_threshold must be nonnegative".into()));
        }
        if self.patience == 0 {
            return Err(Error::Config("patience must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HmcConfig {
    pub mass: f64,
    pub sigma: f64,
    pub leapfrog_steps: usize,
    pub leapfrog_eps: f64,
    pub n_proposals: usize,
    pub seed: u64,
}

impl Default for HmcConfig {
    fn default() -> Self {
        Self { mass: 1.0, sigma: 0.25, leapfrog_steps: 5, leapfrog_eps: 0.2, n_proposals: 16, seed: 0 }
    }
}

impl HmcConfig {
    pub fn validate(&self) -> Result<()> {
        let pos = |v: f64| v > 0.0 && v.is_finite();
        if !pos(self.mass) || !pos(self.sigma) || !pos(self.leapfrog_eps) {
            return Err(Error::Config("mass, sigma and leapfrog_eps must be positive".into()));
        }
        if self.leapfrog_steps == 0 || self.n_proposals == 0 {
            return Err(Error::Config("leapfrog_steps and n_proposals must be at least 1".into()));
        }
        Ok(())
    }

    /// Evaluations used by [`hmc_refine`]: one at the start, then each
    /// proposal evaluates its starting point plus every leapfrog position.
    pub fn nfe(&self) -> usize {
        1 + self.n_proposals * (self.leapfrog_steps + 1)
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Trajectory {
    pub states: Vec<Vec<f64>>,
    pub u_values: Vec<f64>,
    /// `|x_{k+1} - x_k|`, one per transition.
    pub step_norms: Vec<f64>,
    pub nfe: usize,
    pub stopped_early: bool,
    pub accept_count: usize,
    /// Set when HMC used a direction head that is not a true gradient.
    pub non_conservative_potential: bool,
}

impl Trajectory {
    pub fn final_state(&self) -> &[f64] {
        self.states.last().expect("trajectory has at least one state")
    }

    pub fn steps(&self) -> usize {
        self.states.len() - 1
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let d = self.states.first().map_or(0, Vec::len);
        let coords: Vec<String> = (0..d).map(|j| format!("x{j}")).collect();
        writeln!(w, "step,u,step_norm,{}", coords.join(","))?;
        for (k, x) in self.states.iter().enumerate() {
            let step_norm = if k == 0 { 0.0 } else { self.step_norms[k - 1] };
            let xs: Vec<String> = x.iter().map(|v| v.to_string()).collect();
            writeln!(w, "{k},{},{step_norm},{}", self.u_values[k], xs.join(","))?;
        }
        Ok(())
    }
}

/// Evaluates one point and counts the call.
struct Counter<'a> {
    field: &'a dyn Field,
    nfe: usize,
}

impl Counter<'_> {
    fn eval(&mut self, x: &[f64]) -> Result<(f64, Vec<f64>)> {
        self.nfe += 1;
        let (u, v) = self.field.eval_flat(x)?;
        Ok((u[0], v))
    }
}

fn check_start(field: &dyn Field, x0: &[f64]) -> Result<()> {
    if x0.len() != field.dim() {
        return Err(Error::Shape { expected: field.dim(), got: x0.len() });
    }
    if x0.iter().any(|v| !v.is_finite()) {
        return Err(Error::Domain("non-finite starting point".into()));
    }
    Ok(())
}

#[derive(Clone, Copy, PartialEq)]
enum Rule {
    SphereTracing,
    Descent,
    Adaptive,
}

/// Shared loop for the deterministic samplers. With `defer_last`, the state
/// reached by the final step is recorded without evaluating it, so a
/// following HMC phase can supply its `u`.
fn march(field: &dyn Field, x0: &[f64], cfg: &SamplerConfig, rule: Rule, defer_last: bool) -> Result<Trajectory> {
    cfg.validate()?;
    check_start(field, x0)?;
    let mut counter = Counter { field, nfe: 0 };
    let mut x = x0.to_vec();
    let (mut u, mut v) = counter.eval(&x)?;
    let mut traj = Trajectory { states: vec![x.clone()], u_values: vec![u], ..Trajectory::default() };
    let mut rising = 0usize;
    for step in 1..=cfg.max_steps {
        if rule != Rule::Adaptive && cfg.stop_threshold > 0.0 && u < cfg.stop_threshold {
            traj.stopped_early = true;
            break;
        }
        let scale = match rule {
            Rule::SphereTracing => cfg.eta * u,
            Rule::Descent | Rule::Adaptive => cfg.eta,
        };
        let next: Vec<f64> = x.iter().zip(&v).map(|(xi, vi)| xi - scale * vi).collect();
        if next.iter().any(|c| !c.is_finite()) {
            return Err(Error::NonFiniteState { step });
        }
        traj.step_norms.push(dist2(&next, &x).sqrt());
        traj.states.push(next.clone());
        x = next;
        if defer_last && step == cfg.max_steps {
            break;
        }
        let prev = u;
        (u, v) = counter.eval(&x)?;
        if !u.is_finite() || v.iter().any(|c| !c.is_finite()) {
            return Err(Error::NonFiniteState { step });
        }
        traj.u_values.push(u);
        if rule == Rule::Adaptive {
            rising = if u > prev { rising + 1 } else { 0 };
            if rising >= cfg.patience {
                traj.stopped_early = step < cfg.max_steps;
                break;
            }
        }
    }
    traj.nfe = counter.nfe;
    Ok(traj)
}

/// `x <- x - eta u(x) v(x)`.
pub fn sphere_trace(field: &dyn Field, x0: &[f64], cfg: &SamplerConfig) -> Result<Trajectory> {
    march(field, x0, cfg, Rule::SphereTracing, false)
}

/// `x <- x - eta v(x)`.
pub fn grad_descent(field: &dyn Field, x0: &[f64], cfg: &SamplerConfig) -> Result<Trajectory> {
    march(field, x0, cfg, Rule::Descent, false)
}

/// Gradient descent that stops after `patience` consecutive increases of `u`.
pub fn adaptive_gd(field: &dyn Field, x0: &[f64], cfg: &SamplerConfig) -> Result<Trajectory> {
    march(field, x0, cfg, Rule::Adaptive, false)
}

/// One leapfrog trajectory on the energy `u / sigma^2` with unit-free
/// momentum. Returns the end point, end momentum, `u` and `v` there.
pub fn leapfrog(
    field: &dyn Field,
    x: &[f64],
    p: &[f64],
    v_start: &[f64],
    hmc: &HmcConfig,
) -> Result<(Vec<f64>, Vec<f64>, f64, Vec<f64>)> {
    let mut counter = Counter { field, nfe: 0 };
    leapfrog_counted(&mut counter, x, p, v_start, hmc)
}

fn leapfrog_counted(
    counter: &mut Counter<'_>,
    x: &[f64],
    p: &[f64],
    v_start: &[f64],
    hmc: &HmcConfig,
) -> Result<(Vec<f64>, Vec<f64>, f64, Vec<f64>)> {
    let inv_var = 1.0 / (hmc.sigma * hmc.sigma);
    let half = 0.5 * hmc.leapfrog_eps;
    let mut x = x.to_vec();
    let mut p = p.to_vec();
    let mut g = v_start.to_vec();
    let mut u = f64::NAN;
    for _ in 0..hmc.leapfrog_steps {
        for (pi, gi) in p.iter_mut().zip(&g) {
            *pi -= half * gi * inv_var;
        }
        for (xi, pi) in x.iter_mut().zip(&p) {
            *xi += hmc.leapfrog_eps * pi / hmc.mass;
        }
        (u, g) = counter.eval(&x)?;
        for (pi, gi) in p.iter_mut().zip(&g) {
            *pi -= half * gi * inv_var;
        }
    }
    Ok((x, p, u, g))
}

fn hamiltonian(u: f64, p: &[f64], hmc: &HmcConfig) -> f64 {
    u / (hmc.sigma * hmc.sigma) + dot(p, p) / (2.0 * hmc.mass)
}

/// Metropolis acceptance probability for an energy change; `NaN` maps to 0.
pub fn acceptance_probability(h_start: f64, h_end: f64) -> f64 {
    let a = (h_start - h_end).exp().min(1.0);
    if a.is_nan() {
        0.0
    } else {
        a
    }
}

/// Append `n_proposals` HMC transitions to `traj`, starting from its last
/// state. If that state's `u` is still missing, the first proposal's
/// evaluation supplies it.
fn hmc_phase<R: Rng + ?Sized>(
    counter: &mut Counter<'_>,
    traj: &mut Trajectory,
    hmc: &HmcConfig,
    rng: &mut R,
) -> Result<()> {
    hmc.validate()?;
    let mut x = traj.final_state().to_vec();
    let step0 = traj.steps();
    for k in 0..hmc.n_proposals {
        let (u, v) = counter.eval(&x)?;
        if traj.u_values.len() < traj.states.len() {
            traj.u_values.push(u);
        }
        let p: Vec<f64> = (0..x.len())
            .map(|_| hmc.mass.sqrt() * rng.sample::<f64, _>(StandardNormal))
            .collect();
        let h_start = hamiltonian(u, &p, hmc);
        let (xq, pq, uq, _) = leapfrog_counted(counter, &x, &p, &v, hmc)?;
        let h_end = hamiltonian(uq, &pq, hmc);
        let accept = acceptance_probability(h_start, h_end);
        let draw: f64 = rng.random();
        let (next, u_next) = if draw < accept && xq.iter().all(|c| c.is_finite()) {
            traj.accept_count += 1;
            (xq, uq)
        } else {
            (x.clone(), u)
        };
        if next.iter().any(|c| !c.is_finite()) {
            return Err(Error::NonFiniteState { step: step0 + k + 1 });
        }
        traj.step_norms.push(dist2(&next, &x).sqrt());
        traj.states.push(next.clone());
        traj.u_values.push(u_next);
        x = next;
    }
    if !counter.field.is_conservative() {
        traj.non_conservative_potential = true;
    }
    Ok(())
}

/// Tempered HMC targeting `exp(-u / sigma^2)`.
pub fn hmc_refine<R: Rng + ?Sized>(field: &dyn Field, x_init: &[f64], hmc: &HmcConfig, rng: &mut R) -> Result<Trajectory> {
    hmc.validate()?;
    check_start(field, x_init)?;
    let mut counter = Counter { field, nfe: 0 };
    let (u, _) = counter.eval(x_init)?;
    let mut traj = Trajectory { states: vec![x_init.to_vec()], u_values: vec![u], ..Trajectory::default() };
    hmc_phase(&mut counter, &mut traj, hmc, rng)?;
    traj.nfe = counter.nfe;
    Ok(traj)
}

/// Deterministic sampler for `cfg.max_steps` followed by HMC from its end
/// point. With one sphere-tracing step and HMC defaults this costs 97
/// evaluations.
pub fn march_then_hmc<R: Rng + ?Sized>(
    field: &dyn Field,
    x0: &[f64],
    cfg: &SamplerConfig,
    hmc: &HmcConfig,
    rng: &mut R,
) -> Result<Trajectory> {
    hmc.validate()?;
    let rule = match cfg.kind {
        SamplerKind::SphereTracing => Rule::SphereTracing,
        SamplerKind::GradientDescent => Rule::Descent,
        SamplerKind::AdaptiveGd => Rule::Adaptive,
        other => return Err(Error::Config(format!("{other:?} cannot precede HMC"))),
    };
    let mut traj = march(field, x0, cfg, rule, true)?;
    let mut counter = Counter { field, nfe: traj.nfe };
    hmc_phase(&mut counter, &mut traj, hmc, rng)?;
    traj.nfe = counter.nfe;
    Ok(traj)
}

/// Unadjusted Langevin on `u / sigma^2`:
/// `x <- x - eta v / sigma^2 + noise_scale · sqrt(2 eta) xi`.
pub fn ula_refine<R: Rng + ?Sized>(
    field: &dyn Field,
    x_init: &[f64],
    cfg: &SamplerConfig,
    sigma: f64,
    noise_scale: f64,
    rng: &mut R,
) -> Result<Trajectory> {
    cfg.validate()?;
    check_start(field, x_init)?;
    if !(sigma > 0.0) || !(noise_scale >= 0.0) {
        return Err(Error::Config("sigma must be positive and noise_scale nonnegative".into()));
    }
    let drift = cfg.eta * (1.0 / (sigma * sigma));
    let kick = noise_scale * (2.0 * cfg.eta).sqrt();
    let mut counter = Counter { field, nfe: 0 };
    let mut x = x_init.to_vec();
    let (u, mut v) = counter.eval(&x)?;
    let mut traj = Trajectory { states: vec![x.clone()], u_values: vec![u], ..Trajectory::default() };
    for step in 1..=cfg.max_steps {
        let next: Vec<f64> = x
            .iter()
            .zip(&v)
            .map(|(xi, vi)| xi - drift * vi + kick * rng.sample::<f64, _>(StandardNormal))
            .collect();
        if next.iter().any(|c| !c.is_finite()) {
            return Err(Error::NonFiniteState { step });
        }
        traj.step_norms.push(dist2(&next, &x).sqrt());
        x = next;
        let (u, g) = counter.eval(&x)?;
        v = g;
        traj.states.push(x.clone());
        traj.u_values.push(u);
    }
    traj.non_conservative_potential = !field.is_conservative();
    traj.nfe = counter.nfe;
    Ok(traj)
}

/// A complete sampling recipe for one chain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SamplingPlan {
    pub sampler: SamplerConfig,
    pub hmc: HmcConfig,
    /// Run HMC after the deterministic sampler.
    pub then_hmc: bool,
    pub ula_noise_scale: f64,
}

impl Default for SamplingPlan {
    fn default() -> Self {
        Self {
            sampler: SamplerConfig::default(),
            hmc: HmcConfig::default(),
            then_hmc: false,
            ula_noise_scale: 1.0,
        }
    }
}

impl SamplingPlan {
    /// One sphere-tracing jump with `eta = 1`, then HMC with defaults.
    pub fn jump_then_hmc() -> Self {
        Self {
            sampler: SamplerConfig { max_steps: 1, stop_threshold: 0.0, ..SamplerConfig::default() },
            then_hmc: true,
            ..Self::default()
        }
    }
}

/// Independent RNG stream for chain `index` under `master_seed`.
pub fn chain_rng(master_seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(index as u64);
    rng
}

pub fn run_chain<R: Rng + ?Sized>(field: &dyn Field, x0: &[f64], plan: &SamplingPlan, rng: &mut R) -> Result<Trajectory> {
    let cfg = &plan.sampler;
    match (cfg.kind, plan.then_hmc) {
        (SamplerKind::Hmc, _) => hmc_refine(field, x0, &plan.hmc, rng),
        (SamplerKind::Ula, _) => ula_refine(field, x0, cfg, plan.hmc.sigma, plan.ula_noise_scale, rng),
        (_, true) => march_then_hmc(field, x0, cfg, &plan.hmc, rng),
        (SamplerKind::SphereTracing, false) => sphere_trace(field, x0, cfg),
        (SamplerKind::GradientDescent, false) => grad_descent(field, x0, cfg),
        (SamplerKind::AdaptiveGd, false) => adaptive_gd(field, x0, cfg),
    }
}

/// Run one chain per row of `starts` in parallel. Chain `i` draws from
/// [`chain_rng`]`(plan.hmc.seed, i)`, so results do not depend on scheduling.
pub fn run_chains(field: &dyn Field, starts: &PointCloud, plan: &SamplingPlan) -> Result<Vec<Trajectory>> {
    (0..starts.len())
        .into_par_iter()
        .map(|i| {
            let mut rng = chain_rng(plan.hmc.seed, i);
            run_chain(field, starts.point(i), plan, &mut rng)
        })
        .collect()
}

/// Final states of a set of chains.
pub fn final_cloud(trajectories: &[Trajectory], seed: u64) -> Result<PointCloud> {
    let dim = trajectories.first().map_or(0, |t| t.final_state().len());
    let pts: Vec<f64> = trajectories.iter().flat_map(|t| t.final_state().iter().copied()).collect();
    PointCloud::new(dim, pts, CloudLabel::Generated, seed)
}

/// `{eta/2, eta, 2 eta, 4 eta}`.
pub fn step_size_grid(eta: f64) -> [f64; 4] {
    [0.5 * eta, eta, 2.0 * eta, 4.0 * eta]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::RadialField;

    /// `u = |x - a|` in 1D with a constant direction `v = -1`, so gradient
    /// descent walks right at speed `eta` and `u` starts rising past `a`.
    struct Valley {
        a: f64,
    }

    impl Field for Valley {
        fn dim(&self) -> usize {
            1
        }
        fn eval_flat(&self, xs: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
            Ok((xs.iter().map(|x| (x - self.a).abs()).collect(), vec![-1.0; xs.len()]))
        }
        fn is_conservative(&self) -> bool {
            false
        }
    }

    fn cfg(eta: f64, steps: usize) -> SamplerConfig {
        SamplerConfig { eta, max_steps: steps, stop_threshold: 0.0, ..SamplerConfig::default() }
    }

    #[test]
    fn sphere_trace_exact_projection() {
        let f = RadialField::origin(1, 0.0);
        let t = sphere_trace(&f, &[3.0], &cfg(1.0, 5)).unwrap();
        assert_eq!(t.states[1], vec![0.0]);
        assert!(t.states.iter().skip(1).all(|s| s[0] == 0.0));
    }

    #[test]
    fn sphere_trace_half_step_halves() {
        let f = RadialField::origin(1, 0.0);
        let t = sphere_trace(&f, &[3.0], &cfg(0.5, 10)).unwrap();
        for w in t.step_norms.windows(2) {
            assert!((w[1] / w[0] - 0.5).abs() < 1e-12);
        }
        assert!((t.step_norms[0] - 1.5).abs() < 1e-15);
    }

    #[test]
    fn zero_step_size_is_constant() {
        let f = RadialField::origin(2, 0.01);
        let t = sphere_trace(&f, &[1.0, 2.0], &cfg(0.0, 7)).unwrap();
        assert!(t.states.iter().all(|s| s == &vec![1.0, 2.0]));
        assert_eq!(t.nfe, 8);
    }

    #[test]
    fn gradient_descent_unit_steps() {
        // unit-norm gradient far from the set: every step has length eta
        let f = RadialField::origin(2, 0.0);
        let t = grad_descent(&f, &[30.0, 40.0], &cfg(0.7, 20)).unwrap();
        assert!(t.step_norms.iter().all(|n| (n - 0.7).abs() < 1e-12));
    }

    #[test]
    fn gradient_descent_smoothed_overshoot_bounded() {
        let f = RadialField::origin(1, 0.01);
        let t = grad_descent(&f, &[1.0], &cfg(0.1, 30)).unwrap();
        let xs: Vec<f64> = t.states.iter().map(|s| s[0]).collect();
        let mut k = 0;
        while k + 1 < xs.len() && xs[k + 1] < xs[k] && xs[k + 1] > 0.0 {
            k += 1;
        }
        assert!(k >= 8, "monotone approach for most of the way");
        assert!(xs.last().unwrap().abs() <= 0.1);
    }

    #[test]
    fn stop_threshold_ends_run() {
        let f = RadialField::origin(1, 0.01);
        let c = SamplerConfig { eta: 0.5, max_steps: 100, ..SamplerConfig::default() };
        let t = sphere_trace(&f, &[5.0], &c).unwrap();
        assert!(t.stopped_early);
        assert!(*t.u_values.last().unwrap() < c.stop_threshold);
        assert_eq!(t.nfe, t.states.len());
    }

    #[test]
    fn adaptive_stops_after_patience_rises() {
        for k in [3usize, 7, 20] {
            for patience in [1usize, 4, 10] {
                let f = Valley { a: k as f64 - 0.75 };
                let c = SamplerConfig { patience, ..cfg(1.0, 200) };
                let t = adaptive_gd(&f, &[0.0], &c).unwrap();
                assert!(t.stopped_early);
                assert_eq!(t.steps(), k + patience - 1);
            }
        }
    }

    #[test]
    fn adaptive_runs_full_budget_when_decreasing() {
        let f = Valley { a: 1e6 };
        let t = adaptive_gd(&f, &[0.0], &cfg(1.0, 50)).unwrap();
        assert!(!t.stopped_early);
        assert_eq!(t.steps(), 50);
    }

    #[test]
    fn hmc_default_budget_is_97() {
        let f = RadialField::origin(2, 0.01);
        let mut rng = chain_rng(1, 0);
        let t = hmc_refine(&f, &[1.0, 1.0], &HmcConfig::default(), &mut rng).unwrap();
        assert_eq!(t.nfe, 97);
        assert_eq!(HmcConfig::default().nfe(), 97);
        assert_eq!(t.states.len(), 17);
        assert_eq!(t.u_values.len(), 17);

        let mut rng = chain_rng(1, 0);
        let p = march_then_hmc(&f, &[1.0, 1.0], &SamplingPlan::jump_then_hmc().sampler, &HmcConfig::default(), &mut rng)
            .unwrap();
        assert_eq!(p.nfe, 97);
        assert_eq!(p.states.len(), 18);
        assert_eq!(p.u_values.len(), 18);
    }

    #[test]
    fn rejected_proposals_keep_state() {
        let f = RadialField::origin(2, 0.01);
        // a huge step makes nearly every proposal fly off and get rejected
        let hmc = HmcConfig { leapfrog_eps: 50.0, n_proposals: 40, ..HmcConfig::default() };
        let mut rng = chain_rng(3, 0);
        let t = hmc_refine(&f, &[0.1, 0.0], &hmc, &mut rng).unwrap();
        assert!(t.accept_count < 40);
        for k in 1..t.states.len() {
            if t.step_norms[k - 1] == 0.0 {
                assert_eq!(t.states[k], t.states[k - 1]);
                assert_eq!(t.u_values[k], t.u_values[k - 1]);
            }
        }
    }

    #[test]
    fn acceptance_is_a_probability() {
        for (a, b) in [(0.0, 1.0), (1.0, 0.0), (f64::NAN, 0.0), (0.0, f64::INFINITY), (3.0, 3.0)] {
            let p = acceptance_probability(a, b);
            assert!((0.0..=1.0).contains(&p));
        }
    }

    #[test]
    fn ula_without_noise_is_scaled_descent() {
        let f = RadialField::origin(2, 0.01);
        let c = cfg(0.01, 25);
        let sigma = 0.5;
        let mut rng = chain_rng(0, 0);
        let ula = ula_refine(&f, &[1.0, -2.0], &c, sigma, 0.0, &mut rng).unwrap();
        let gd = grad_descent(&f, &[1.0, -2.0], &SamplerConfig { eta: 0.01 * (1.0 / (sigma * sigma)), ..c }).unwrap();
        assert_eq!(ula.states, gd.states);
    }

    #[test]
    fn seeded_chains_reproduce() {
        let f = RadialField::origin(2, 0.01);
        let starts = crate::data::gmm_sample(&crate::data::GmmSpec::standard_normal(2), 32, 5).unwrap();
        let plan = SamplingPlan::jump_then_hmc();
        let a = run_chains(&f, &starts, &plan).unwrap();
        let b = run_chains(&f, &starts, &plan).unwrap();
        assert_eq!(a, b);
        let ula = SamplingPlan { sampler: SamplerConfig { kind: SamplerKind::Ula, eta: 0.001, ..cfg(0.001, 10) }, ..plan };
        assert_eq!(run_chains(&f, &starts, &ula).unwrap(), run_chains(&f, &starts, &ula).unwrap());
    }

    #[test]
    fn trajectory_csv_layout() {
        let f = RadialField::origin(1, 0.0);
        let t = sphere_trace(&f, &[2.0], &cfg(0.5, 1)).unwrap();
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "step,u,step_norm,x0\n0,2,0,2\n1,1,1,1\n");
    }

    #[test]
    fn errors_surface() {
        let f = RadialField::origin(2, 0.0);
        assert!(matches!(sphere_trace(&f, &[1.0], &cfg(1.0, 1)), Err(Error::Shape { .. })));
        assert!(matches!(sphere_trace(&f, &[f64::NAN, 0.0], &cfg(1.0, 1)), Err(Error::Domain(_))));
        assert!(sphere_trace(&f, &[1.0, 0.0], &cfg(1.0, 0)).is_err());
        assert_eq!(step_size_grid(0.2), [0.1, 0.2, 0.4, 0.8]);
    }
}
