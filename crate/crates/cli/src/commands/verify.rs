//! Invariant and oracle checks that need no trained model.

use distmarch::data::{
    couple, eight_gaussians, two_moons, CloudLabel, CouplingStrategy, GmmSpec, PairBatch, PairSampler, PointCloud,
    TimeDistribution, TrainingPair,
};
use distmarch::field::{
    init_field, input_gradient_error, load_checkpoint, param_gradient_error, save_checkpoint, Activation, Field,
    FieldConfig, FieldMode, RadialField,
};
use distmarch::losses::{
    combined_loss, denoise, directional_eikonal_loss, eikonal_target_norm, one_step_loss, CombinedObjective, FlowMatchingObjective,
    FmWeight, LossConfig,
};
use distmarch::metrics::{chamfer, coverage_curve, distance_mape, hausdorff, w2};
use distmarch::oracles::{
    angle_triplet, chi2_neg_log_sf, monte_carlo_report, one_step_estimate, radial_family_check, Branch, Oracle, OracleConfig,
    QuadratureSpec, TargetDraws,
};
use distmarch::samplers::{hmc_refine, run_chain, sphere_trace, HmcConfig, SamplerConfig, SamplingPlan};
use distmarch::trainer::{train, TrainConfig};
use distmarch::Result;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{num, Csv, Ctx, Outputs};
use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerifyFile {
    /// Monte Carlo samples per query for the closed-form cross-check.
    pub mc_samples: Option<usize>,
}

pub struct Check {
    pub name: String,
    pub value: f64,
    pub tolerance: f64,
    pub passed: bool,
}

/// Passes when `value < tolerance`.
fn below(name: &str, value: f64, tolerance: f64) -> Check {
    Check { name: name.into(), value, tolerance, passed: value < tolerance }
}

fn outcome(name: &str, result: Result<Check>) -> Check {
    result.unwrap_or_else(|e| {
        eprintln!("{name}: {e}");
        Check { name: name.into(), value: f64::NAN, tolerance: f64::NAN, passed: false }
    })
}

/// Field with a fixed output everywhere.
struct Constant {
    u: f64,
    v: Vec<f64>,
}

impl Field for Constant {
    fn dim(&self) -> usize {
        self.v.len()
    }

    fn eval_flat(&self, xs: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        let n = xs.len() / self.v.len();
        Ok((vec![self.u; n], self.v.repeat(n)))
    }

    fn is_conservative(&self) -> bool {
        false
    }
}

/// `factor · u` of an inner field.
struct Scaled<'a> {
    inner: &'a dyn Field,
    factor: f64,
}

impl Field for Scaled<'_> {
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn eval_flat(&self, xs: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        let (u, v) = self.inner.eval_flat(xs)?;
        Ok((u.into_iter().map(|x| x * self.factor).collect(), v))
    }

    fn is_conservative(&self) -> bool {
        false
    }
}

fn cloud(dim: usize, points: &[f64]) -> Result<PointCloud> {
    PointCloud::new(dim, points.to_vec(), CloudLabel::Target, 0)
}

fn single_pair(x: &[f64], s: &[f64], t: f64) -> Result<PairBatch> {
    PairBatch::from_pairs(&[TrainingPair { x: x.to_vec(), s_data: s.to_vec(), x0: x.to_vec(), t, target_index: 0 }])
}

fn eight_points() -> Result<PointCloud> {
    cloud(2, &[1.0, 0.2, -0.5, 1.1, 0.3, -1.4, 2.0, 1.5, -1.8, -0.4, 0.0, 2.2, 1.4, -0.9, -1.1, 1.9])
}

pub fn run_checks(seed: u64, mc_samples: usize, scratch: &std::path::Path) -> Vec<Check> {
    let mut checks = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    // Projection invariance of the radial family.
    for offset in [0.0, 1.0, 7.0] {
        for branch in [Branch::Positive, Branch::Negative] {
            let name = format!("radial_projection_c{offset}_{branch:?}").to_lowercase();
            let mut worst: f64 = 0.0;
            for dim in [1usize, 2, 8] {
                for _ in 0..200 {
                    let x: Vec<f64> = (0..dim).map(|_| 3.0 * rng.sample::<f64, _>(StandardNormal)).collect();
                    let s: Vec<f64> = (0..dim).map(|_| 3.0 * rng.sample::<f64, _>(StandardNormal)).collect();
                    worst = worst.max(radial_family_check(&x, &s, offset, branch).unwrap_or(f64::INFINITY));
                }
            }
            checks.push(below(&name, worst, 1e-10));
        }
    }

    checks.push(outcome("denoise_exact_distance", (|| {
        let f = RadialField::origin(1, 0.0);
        Ok(below("denoise_exact_distance", denoise(&f, &[3.0])?[0].abs(), 1e-12))
    })()));
    checks.push(outcome("denoise_offset_seven", (|| {
        let f = RadialField::origin(1, 7.0);
        Ok(below("denoise_offset_seven", denoise(&f, &[3.0])?[0].abs(), 1e-12))
    })()));

    checks.push(outcome("one_step_loss_hand_value", (|| {
        let b = single_pair(&[1.0, 0.0], &[0.0, 0.0], 0.5)?;
        let zero = one_step_loss(&Constant { u: 1.0, v: vec![1.0, 0.0] }, &b, 4.0)?;
        let tilted = one_step_loss(&Constant { u: 1.0, v: vec![0.0, 1.0] }, &b, 4.0)?;
        Ok(below("one_step_loss_hand_value", zero.abs() + (tilted - 0.4).abs(), 1e-12))
    })()));
    checks.push(outcome("eikonal_target_norm", (|| {
        let b = single_pair(&[0.1, 0.0], &[0.0, 0.0], 0.5)?;
        // Zero prediction: the loss is the squared target norm, 1/2 here.
        let loss = directional_eikonal_loss(&Constant { u: 1.0, v: vec![0.0, 0.0] }, &b, 0.01)?;
        let err = (eikonal_target_norm(0.1, 0.01) - 0.5f64.sqrt()).abs() + (loss - 0.5).abs();
        Ok(below("eikonal_target_norm", err, 1e-12))
    })()));
    checks.push(outcome("combined_loss_weights", (|| {
        let b = single_pair(&[1.0, 0.0], &[0.0, 0.0], 0.5)?;
        let f = Constant { u: 1.0, v: vec![0.0, 1.0] };
        let cfg = LossConfig { epsilon: 4.0, c0: 0.01, ..LossConfig::default() };
        let expected = 0.1 * one_step_loss(&f, &b, 4.0)? + directional_eikonal_loss(&f, &b, 0.01)?;
        Ok(below("combined_loss_weights", (combined_loss(&f, &b, &cfg)? - expected).abs(), 1e-12))
    })()));

    // Exact gradients.
    checks.push(outcome("input_gradient_gradient_mode", (|| {
        let mut worst: f64 = 0.0;
        for s in 0..10 {
            for act in [Activation::Swish, Activation::Tanh] {
                let cfg = FieldConfig { hidden_widths: vec![16, 16], activation: act, ..FieldConfig::mlp(3, seed + s) };
                let m = init_field(cfg)?;
                for _ in 0..10 {
                    let x: Vec<f64> = (0..3).map(|_| rng.sample(StandardNormal)).collect();
                    worst = worst.max(input_gradient_error(&m, &x, 1e-5)?);
                }
            }
        }
        Ok(below("input_gradient_gradient_mode", worst, 1e-5))
    })()));
    let moons = two_moons(128, 0.1, seed);
    for mode in [FieldMode::Gradient, FieldMode::Direct] {
        for loss in ["combined", "osl", "del", "fm"] {
            let name = format!("param_gradient_{loss}_{mode:?}").to_lowercase();
            checks.push(outcome(&name, (|| {
                let target = moons.as_ref().map_err(|e| distmarch::Error::Argument(e.to_string()))?;
                let batch = PairSampler::new(target, TimeDistribution::default(), CouplingStrategy::Random).sample(16, &mut rng)?;
                let cfg = FieldConfig { hidden_widths: vec![16, 16], mode, ..FieldConfig::mlp(2, seed + 7) };
                let model = init_field(cfg)?;
                let coords: Vec<usize> = (0..20).map(|_| rng.random_range(0..model.param_count())).collect();
                let loss_cfg = match loss {
                    "osl" => LossConfig { lambda2: 0.0, ..LossConfig::default() },
                    "del" => LossConfig { lambda1: 0.0, ..LossConfig::default() },
                    _ => LossConfig::default(),
                };
                let err = if loss == "fm" {
                    param_gradient_error(&model, &FlowMatchingObjective { batch: &batch, weight: FmWeight::InverseOneMinusTSq }, &coords, 1e-5)?
                } else {
                    param_gradient_error(&model, &CombinedObjective::new(&batch, loss_cfg), &coords, 1e-5)?
                };
                Ok(below(&name, err, 1e-4))
            })()));
        }
    }

    // Closed-form oracles.
    checks.push(outcome("posterior_symmetric_pair", (|| {
        let o = Oracle::for_points(&cloud(2, &[1.0, 0.5, -1.0, -0.5])?, OracleConfig::default())?;
        let pi = o.posterior_index(&[0.0, 0.0])?;
        Ok(below("posterior_symmetric_pair", (pi[0] - 0.5).abs() + (pi[1] - 0.5).abs(), 1e-12))
    })()));
    checks.push(outcome("one_step_weights_hand_value", (|| {
        let pts = cloud(2, &[1.0, 0.0, 0.0, 5.0])?;
        let s = one_step_estimate(&[0.0, 0.0], &pts, &[0.5, 0.5], 0.0);
        let err = (s[0] - 25.0 / 26.0).abs() + (s[1] - 5.0 / 26.0).abs();
        Ok(below("one_step_weights_hand_value", err, 1e-12))
    })()));
    checks.push(outcome("quadrature_convergence", (|| {
        let data = eight_points()?;
        let t = TimeDistribution::default();
        let a = Oracle::for_points(&data, OracleConfig { quad: QuadratureSpec::for_time(&t, 64), ..OracleConfig::default() })?;
        let b = Oracle::for_points(&data, OracleConfig { quad: QuadratureSpec::for_time(&t, 128), ..OracleConfig::default() })?;
        let mut worst: f64 = 0.0;
        for x in [[0.0, 0.0], [0.7, -0.3], [2.5, 2.5], [-3.0, 1.0]] {
            for (p, q) in a.posterior_index(&x)?.iter().zip(b.posterior_index(&x)?) {
                worst = worst.max((p - q).abs() / q);
            }
        }
        Ok(below("quadrature_convergence", worst, 1e-6))
    })()));
    match mc_cross_check(mc_samples, &mut rng) {
        Ok(list) => checks.extend(list),
        Err(e) => checks.push(outcome("minimizers_vs_monte_carlo", Err(e))),
    }
    checks.push(outcome("angle_additivity_planar", (|| {
        let r = angle_triplet(&[1.0, 0.0], &[0.0, 1.0], &[0.8, 0.3])?;
        let d = angle_triplet(&[1.0, 1.0], &[2.0, 2.0], &[1.0, 0.0])?;
        let ok = d.degenerate && d.additivity_ratio == 0.0;
        Ok(below("angle_additivity_planar", (r.additivity_ratio - 1.0).abs() + if ok { 0.0 } else { 1.0 }, 1e-12))
    })()));
    checks.push(below("outlierness_at_zero", chi2_neg_log_sf(0.0, 8).abs(), 1e-12));

    // Samplers.
    checks.push(outcome("sphere_trace_one_step", (|| {
        let cfg = SamplerConfig { eta: 1.0, max_steps: 1, stop_threshold: 0.0, ..SamplerConfig::default() };
        let t = sphere_trace(&RadialField::origin(1, 0.0), &[3.0], &cfg)?;
        Ok(below("sphere_trace_one_step", t.final_state()[0].abs(), 1e-12))
    })()));
    checks.push(outcome("hmc_default_nfe", (|| {
        let f = RadialField::new(2, vec![0.0, 0.0, 2.0, 1.0], 0.01, true)?;
        let t = run_chain(&f, &[3.0, -1.0], &SamplingPlan::jump_then_hmc(), &mut rng)?;
        Ok(below("hmc_default_nfe", (t.nfe as f64 - 97.0).abs(), 0.5))
    })()));
    checks.push(outcome("hmc_small_step_acceptance", (|| {
        let f = RadialField::new(2, vec![0.0, 0.0, 2.0, 1.0], 0.01, true)?;
        let hmc = HmcConfig { leapfrog_eps: 1e-4, n_proposals: 1000, ..HmcConfig::default() };
        let t = hmc_refine(&f, &[1.0, 0.3], &hmc, &mut rng)?;
        Ok(below("hmc_small_step_acceptance", 1.0 - t.accept_count as f64 / 1000.0, 1e-3))
    })()));

    // Data.
    checks.push(outcome("minibatch_ot_example", (|| {
        let a = couple(&[0.0, 0.0, 10.0, 0.0], &[9.0, 0.0, 1.0, 0.0], 2, CouplingStrategy::MinibatchOt);
        Ok(below("minibatch_ot_example", if a == [1, 0] { 0.0 } else { 1.0 }, 0.5))
    })()));
    checks.push(outcome("moons_zero_noise_on_arcs", (|| {
        let c = two_moons(200, 0.0, seed)?;
        let worst = c
            .iter()
            .map(|p| {
                let upper = ((p[0] * p[0] + p[1] * p[1]).sqrt() - 1.0).abs();
                let lower = (((p[0] - 1.0).powi(2) + (p[1] - 0.5).powi(2)).sqrt() - 1.0).abs();
                upper.min(lower)
            })
            .fold(0.0, f64::max);
        Ok(below("moons_zero_noise_on_arcs", worst, 1e-12))
    })()));
    checks.push(outcome("eight_gaussians_tiny_std", (|| {
        let c = eight_gaussians(400, 2.0, 1e-12, seed)?;
        let centers = GmmSpec::eight_gaussians(2.0, 1.0);
        let worst = c
            .iter()
            .map(|p| centers.components.iter().map(|k| distmarch::vecops::dist2(p, &k.mean).sqrt()).fold(f64::INFINITY, f64::min))
            .fold(0.0, f64::max);
        Ok(below("eight_gaussians_tiny_std", worst, 1e-9))
    })()));

    // Metrics.
    checks.push(outcome("metric_brute_force_three_points", (|| {
        let mut worst: f64 = 0.0;
        for _ in 0..20 {
            let a: Vec<f64> = (0..6).map(|_| rng.sample(StandardNormal)).collect();
            let b: Vec<f64> = (0..6).map(|_| rng.sample(StandardNormal)).collect();
            let (ca, cb) = (cloud(2, &a)?, cloud(2, &b)?);
            let d = |i: usize, j: usize| distmarch::vecops::dist2(ca.point(i), cb.point(j));
            let perms = [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];
            let brute_w2 = perms.iter().map(|p| (0..3).map(|i| d(i, p[i])).sum::<f64>() / 3.0).fold(f64::INFINITY, f64::min).sqrt();
            let nn_ab: Vec<f64> = (0..3).map(|i| (0..3).map(|j| d(i, j)).fold(f64::INFINITY, f64::min)).collect();
            let nn_ba: Vec<f64> = (0..3).map(|j| (0..3).map(|i| d(i, j)).fold(f64::INFINITY, f64::min)).collect();
            let brute_hd = nn_ab.iter().chain(&nn_ba).copied().fold(0.0, f64::max).sqrt();
            let brute_cd = nn_ab.iter().sum::<f64>() / 3.0 + nn_ba.iter().sum::<f64>() / 3.0;
            worst = worst
                .max((w2(&ca, &cb, 2048, 0)?.0 - brute_w2).abs())
                .max((hausdorff(&ca, &cb)? - brute_hd).abs())
                .max((chamfer(&ca, &cb)? - brute_cd).abs());
        }
        Ok(below("metric_brute_force_three_points", worst, 1e-12))
    })()));
    checks.push(outcome("metrics_zero_on_identical", (|| {
        let a = two_moons(300, 0.1, seed)?;
        let v = w2(&a, &a, 2048, 0)?.0.abs() + hausdorff(&a, &a)? + chamfer(&a, &a)?;
        Ok(below("metrics_zero_on_identical", v, 1e-12))
    })()));
    checks.push(outcome("coverage_single_target", (|| {
        let c = coverage_curve(&cloud(3, &[0.5, -1.0, 2.0])?, 64, &[0.0, 0.5, 1.0], 1, seed)?;
        let err = c.coverage.iter().map(|v| (v - 1.0).abs()).sum::<f64>();
        Ok(below("coverage_single_target", err, 1e-12))
    })()));
    checks.push(outcome("mape_exact_and_doubled", (|| {
        let target = two_moons(64, 0.1, seed)?;
        let batch = PairSampler::new(&target, TimeDistribution::default(), CouplingStrategy::Random).sample(256, &mut rng)?;
        let exact = RadialField::new(2, target.as_flat().to_vec(), 0.01, true)?;
        // Pairs are scored against their own target, which is not always the
        // nearest one, so only compare pairs where it is.
        let near: Vec<TrainingPair> = batch
            .pairs()
            .into_iter()
            .filter(|p| exact.closest(&p.x) == p.s_data.as_slice())
            .collect();
        let near = PairBatch::from_pairs(&near)?;
        let a = distance_mape(&exact, &near, 0.01, 5)?;
        let b = distance_mape(&Scaled { inner: &exact, factor: 2.0 }, &near, 0.01, 5)?;
        Ok(below("mape_exact_and_doubled", a.median_u.abs() + (b.median_u - 100.0).abs(), 1e-9))
    })()));

    // Training and checkpoints.
    checks.push(outcome("training_is_deterministic", (|| {
        let target = two_moons(64, 0.1, seed)?;
        let cfg = TrainConfig { epochs: 3, batch_size: 16, seed, ..TrainConfig::default() };
        let field = FieldConfig { hidden_widths: vec![16, 16], ..FieldConfig::mlp(2, seed) };
        let a = train(init_field(field.clone())?, &target, &cfg)?.model;
        let b = train(init_field(field)?, &target, &cfg)?.model;
        Ok(below("training_is_deterministic", if a.params() == b.params() { 0.0 } else { 1.0 }, 0.5))
    })()));
    checks.push(outcome("checkpoint_round_trip", (|| {
        let m = init_field(FieldConfig { mode: FieldMode::Direct, hidden_widths: vec![8], ..FieldConfig::mlp(2, seed) })?;
        let path = scratch.join("verify_checkpoint.json");
        save_checkpoint(&m, &path)?;
        let back = load_checkpoint(&path)?;
        let _ = std::fs::remove_file(&path);
        Ok(below("checkpoint_round_trip", if back == m { 0.0 } else { 1.0 }, 0.5))
    })()));
    checks
}

fn mc_cross_check(samples: usize, rng: &mut ChaCha8Rng) -> Result<Vec<Check>> {
    let data = eight_points()?;
    let cfg = OracleConfig::default();
    let oracle = Oracle::for_points(&data, cfg)?;
    let source = GmmSpec::standard_normal(2);
    let mut worst = [0.0f64; 5];
    for x in [[0.4, 0.3], [-0.9, 1.0], [1.5, -0.5]] {
        let exact = oracle.report(&x)?;
        let mc = monte_carlo_report(&x, TargetDraws::Points(&data), &source, &cfg.t_dist, cfg.epsilon, cfg.c0, samples, rng)?;
        let pairs = [(&mc.pi, &exact.pi), (&mc.g_fm, &exact.g_fm), (&mc.g_rfm, &exact.g_rfm), (&mc.s_hat, &exact.s_hat), (&mc.h_de, &exact.h_de)];
        for (w, (est, reference)) in worst.iter_mut().zip(pairs) {
            *w = w.max(est.max_z(reference));
        }
    }
    let names = ["mc_posterior_index", "mc_flow_matching", "mc_rectified_flow_matching", "mc_one_step", "mc_eikonal"];
    Ok(names.iter().zip(worst).map(|(n, z)| below(n, z, 4.0)).collect())
}

pub fn run(ctx: &Ctx) -> CliResult<()> {
    let loaded = ctx.load::<VerifyFile>("runs/verify")?;
    let samples = loaded.body.mc_samples.unwrap_or(200_000);
    if samples == 0 {
        return Err(CliError::config("mc_samples", "must be at least 1"));
    }
    let checks = run_checks(loaded.seed, samples, &loaded.out);
    let mut csv = Csv::new(&["check", "passed", "value", "tolerance"]);
    let mut failed = 0;
    for c in &checks {
        println!("{} {} (value {:.3e}, tolerance {:.1e})", if c.passed { "PASS" } else { "FAIL" }, c.name, c.value, c.tolerance);
        csv.row(&[c.name.clone(), c.passed.to_string(), num(c.value), num(c.tolerance)]);
        failed += usize::from(!c.passed);
    }
    println!("{} checks, {} failed", checks.len(), failed);
    let mut outputs = Outputs::new(&loaded.out);
    outputs.write("verify.csv", &csv.into_bytes())?;
    outputs.finish("verify", &loaded)?;
    if failed > 0 {
        return Err(CliError::ChecksFailed(failed));
    }
    Ok(())
}
