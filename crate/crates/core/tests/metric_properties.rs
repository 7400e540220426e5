use distmarch::data::{gmm_sample, GmmSpec, PointCloud};
use distmarch::metrics::*;

fn edges() -> Vec<f64> {
    (0..=10).map(|k| k as f64 / 10.0).collect()
}

#[test]
fn coverage_is_reproducible_and_bounded() {
    let target = gmm_sample(&GmmSpec::standard_normal(16), 300, 1).unwrap();
    let a = coverage_curve(&target, 500, &edges(), 8, 7).unwrap();
    let b = coverage_curve(&target, 500, &edges(), 8, 7).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.t_bins.len(), 10);
    assert_eq!(a.coverage.len(), 10);
    for (c, m) in a.coverage.iter().zip(&a.topk_mass) {
        assert!((0.0..=1.0).contains(c));
        assert!((0.0..=1.0).contains(m));
    }
}

#[test]
fn topk_mass_shrinks_on_supersets() {
    let spec = GmmSpec::standard_normal(16);
    let mut shrinks = 0;
    for trial in 0..20u64 {
        let big = gmm_sample(&spec, 1200, 100 + trial).unwrap();
        let small = big.select(&(0..300).collect::<Vec<_>>()).unwrap();
        let curve = |t: &PointCloud| coverage_curve(t, 1000, &[0.0, 0.2], 8, trial).unwrap().topk_mass[0];
        if curve(&big) <= curve(&small) {
            shrinks += 1;
        }
    }
    assert!(shrinks > 10, "only {shrinks}/20 trials");
}

#[test]
fn identical_clouds_score_zero() {
    let a = gmm_sample(&GmmSpec::standard_normal(3), 200, 2).unwrap();
    let r = cloud_metrics(&a, &a, W2_EXACT_CAP, 0).unwrap();
    assert_eq!(r.hausdorff, 0.0);
    assert_eq!(r.chamfer, 0.0);
    assert!(r.w2.abs() < 1e-12);
    assert_eq!(r.w2_method, W2Method::Exact);
}
