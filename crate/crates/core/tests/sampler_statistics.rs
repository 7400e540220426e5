use distmarch::data::{CloudLabel, PointCloud};
use distmarch::field::{Field, RadialField};
use distmarch::samplers::*;
use distmarch::Result;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// `u = |x|^2 / 2`, so `exp(-u / sigma^2)` is `N(0, sigma^2 I)`.
struct Harmonic {
    dim: usize,
}

impl Field for Harmonic {
    fn dim(&self) -> usize {
        self.dim
    }

    fn eval_flat(&self, xs: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        let u = xs.chunks_exact(self.dim).map(|x| 0.5 * x.iter().map(|v| v * v).sum::<f64>()).collect();
        Ok((u, xs.to_vec()))
    }

    fn is_conservative(&self) -> bool {
        true
    }
}

#[test]
fn hmc_samples_the_tempered_gaussian() {
    let field = Harmonic { dim: 2 };
    let hmc = HmcConfig { n_proposals: 64, ..HmcConfig::default() };
    let mut sum_sq = 0.0;
    let mut count = 0usize;
    let mut accepted = 0usize;
    for chain in 0..2000 {
        let mut rng = chain_rng(17, chain);
        let t = hmc_refine(&field, &[0.0, 0.0], &hmc, &mut rng).unwrap();
        accepted += t.accept_count;
        for x in t.final_state() {
            sum_sq += x * x;
            count += 1;
        }
    }
    let var = sum_sq / count as f64;
    let target = hmc.sigma * hmc.sigma;
    // Variance of the sample variance of a Gaussian is 2 sigma^4 / n.
    let se = target * (2.0 / count as f64).sqrt();
    assert!((var - target).abs() < 4.0 * se, "variance {var} vs {target}");
    assert!(accepted > 2000 * 64 / 2);
}

#[test]
fn small_leapfrog_steps_conserve_energy() {
    let field = Harmonic { dim: 3 };
    let hmc = HmcConfig { leapfrog_eps: 1e-4, n_proposals: 1000, ..HmcConfig::default() };
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let t = hmc_refine(&field, &[0.3, -0.2, 0.1], &hmc, &mut rng).unwrap();
    assert!(t.accept_count as f64 / 1000.0 > 0.999);
    assert_eq!(t.nfe, hmc.nfe());
}

#[test]
fn ula_matches_the_discrete_stationary_variance() {
    let field = Harmonic { dim: 1 };
    let eta = 0.01;
    let cfg = SamplerConfig { kind: SamplerKind::Ula, eta, max_steps: 1_000_000, ..SamplerConfig::default() };
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let t = ula_refine(&field, &[0.0], &cfg, 1.0, 1.0, &mut rng).unwrap();
    let burn = 10_000;
    let xs: Vec<f64> = t.states[burn..].iter().map(|s| s[0]).collect();
    let mean = xs.iter().sum::<f64>() / xs.len() as f64;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / xs.len() as f64;
    // AR(1) with coefficient 1 - eta and innovation variance 2 eta.
    let expected = 2.0 * eta / (1.0 - (1.0 - eta).powi(2));
    assert!((var - expected).abs() / expected < 0.05, "{var} vs {expected}");
}

#[test]
fn marching_on_the_radial_field_reaches_the_offset_floor() {
    let offset = 0.01_f64;
    let points = vec![0.0, 0.0, 3.0, 1.0, -2.0, 2.0];
    let field = RadialField::new(2, points, offset, true).unwrap();
    for (kind, eta) in [(SamplerKind::SphereTracing, 0.5), (SamplerKind::GradientDescent, 0.05)] {
        let cfg = SamplerConfig { kind, eta, max_steps: 400, stop_threshold: 0.0, patience: 10 };
        for x0 in [[5.0, 5.0], [-4.0, 0.5], [1.2, -3.0]] {
            let t = match kind {
                SamplerKind::SphereTracing => sphere_trace(&field, &x0, &cfg),
                _ => grad_descent(&field, &x0, &cfg),
            }
            .unwrap();
            let u = *t.u_values.last().unwrap();
            // |v| <= 1 everywhere for this field.
            assert!((u - offset.sqrt()).abs() <= eta, "{kind:?} from {x0:?} ended at u = {u}");
        }
    }
}

#[test]
fn chains_are_reproducible_and_seed_sensitive() {
    let field = Harmonic { dim: 2 };
    let starts = PointCloud::new(2, vec![1.0, 0.0, 0.0, 1.0, -1.0, -1.0], CloudLabel::Source, 0).unwrap();
    let mut plan = SamplingPlan::jump_then_hmc();
    let a = run_chains(&field, &starts, &plan).unwrap();
    let b = run_chains(&field, &starts, &plan).unwrap();
    assert_eq!(a, b);
    plan.hmc.seed = 1;
    let c = run_chains(&field, &starts, &plan).unwrap();
    assert_ne!(a, c);
}
