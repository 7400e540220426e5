use distmarch::data::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF};

fn three_component_mixture() -> GmmSpec {
    let comp = |x: f64, std: f64, weight: f64| GmmComponent { mean: vec![x, -x], std, weight };
    GmmSpec { components: vec![comp(-3.0, 0.5, 0.2), comp(0.0, 1.0, 0.5), comp(4.0, 0.25, 0.3)] }
}

#[test]
fn component_counts_match_weights() {
    let spec = three_component_mixture();
    let n = 200_000;
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let (_, labels) = spec.sample_with_components(n, &mut rng).unwrap();
    let mut counts = [0usize; 3];
    for &k in &labels {
        counts[k] += 1;
    }
    let stat: f64 = spec
        .components
        .iter()
        .zip(counts)
        .map(|(c, obs)| {
            let expected = c.weight * n as f64;
            (obs as f64 - expected).powi(2) / expected
        })
        .sum();
    let p = 1.0 - ChiSquared::new(2.0).unwrap().cdf(stat);
    assert!(p > 1e-3, "chi-square {stat}, p {p}, counts {counts:?}");
}

#[test]
fn sample_mean_within_clt_bounds() {
    let spec = three_component_mixture();
    let n = 100_000;
    let cloud = gmm_sample(&spec, n, 5).unwrap();
    let mean = cloud.mean();
    let expected = spec.mean();
    for j in 0..2 {
        let var: f64 = cloud.iter().map(|p| (p[j] - mean[j]).powi(2)).sum::<f64>() / n as f64;
        let se = (var / n as f64).sqrt();
        assert!((mean[j] - expected[j]).abs() < 4.0 * se, "coordinate {j}: {} vs {}", mean[j], expected[j]);
    }
}

#[test]
fn pair_sources_follow_the_source_mixture() {
    let target = two_moons(4096, TOY_MOONS_NOISE, 2).unwrap();
    let source = GmmSpec::eight_gaussians(TOY_SOURCE_RADIUS, TOY_SOURCE_STD);
    let sampler = PairSampler::new(&target, TimeDistribution::default(), CouplingStrategy::Random).with_source(source);
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut sum = [0.0; 2];
    let mut sum_sq = 0.0;
    let mut n = 0usize;
    for _ in 0..40 {
        let batch = sampler.sample(512, &mut rng).unwrap();
        for row in batch.x0.rows() {
            sum[0] += row[0];
            sum[1] += row[1];
            sum_sq += row[0] * row[0] + row[1] * row[1];
            n += 1;
        }
    }
    // Mean zero by symmetry; E|x0|^2 = r^2 + 2 std^2.
    let se = ((TOY_SOURCE_RADIUS.powi(2) / 2.0) / n as f64).sqrt();
    for s in sum {
        assert!((s / n as f64).abs() < 4.0 * se);
    }
    let second = sum_sq / n as f64;
    let expected = TOY_SOURCE_RADIUS.powi(2) + 2.0 * TOY_SOURCE_STD.powi(2);
    assert!((second - expected).abs() / expected < 0.01, "{second} vs {expected}");
}

#[test]
fn couplings_reproduce_per_seed() {
    let target = two_moons(256, TOY_MOONS_NOISE, 4).unwrap();
    for coupling in [
        CouplingStrategy::Random,
        CouplingStrategy::MinibatchOt,
        CouplingStrategy::MinibatchClosestWithReplacement,
        CouplingStrategy::MinibatchClosestWithoutReplacement,
    ] {
        let a = sample_pairs(&target, 64, TimeDistribution::default(), coupling, 3).unwrap();
        let b = sample_pairs(&target, 64, TimeDistribution::default(), coupling, 3).unwrap();
        let c = sample_pairs(&target, 64, TimeDistribution::default(), coupling, 4).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }
}

#[test]
fn without_replacement_uses_each_target_once() {
    let target = two_moons(512, TOY_MOONS_NOISE, 6).unwrap();
    let pairs = sample_pairs(&target, 256, TimeDistribution::default(), CouplingStrategy::MinibatchClosestWithoutReplacement, 1).unwrap();
    let mut idx: Vec<usize> = pairs.iter().map(|p| p.target_index).collect();
    idx.sort_unstable();
    idx.dedup();
    assert_eq!(idx.len(), 256);
}
