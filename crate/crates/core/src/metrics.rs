//! Point-cloud distances, distance-estimation error and nearest-neighbor
//! coverage.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::assignment::min_cost_assignment;
use crate::data::{CloudLabel, PairBatch, PointCloud};
use crate::error::{Error, Result};
use crate::field::Field;
use crate::vecops::dist2;

/// Largest cloud matched exactly by [`w2`].
pub const W2_EXACT_CAP: usize = 2048;

fn check_dims(a: &PointCloud, b: &PointCloud) -> Result<()> {
    if a.dim() != b.dim() {
        return Err(Error::Shape { expected: a.dim(), got: b.dim() });
    }
    Ok(())
}

/// For each query point, `(index, squared distance)` of its nearest
/// reference point. Ties go to the lowest index.
pub fn nearest_neighbors(query: &PointCloud, reference: &PointCloud) -> Result<Vec<(usize, f64)>> {
    check_dims(query, reference)?;
    let d = query.dim();
    Ok(query
        .as_flat()
        .par_chunks_exact(d)
        .map(|q| nearest_in(q, reference.as_flat(), d))
        .collect())
}

fn nearest_in(q: &[f64], reference: &[f64], d: usize) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (j, r) in reference.chunks_exact(d).enumerate() {
        let dd = dist2(q, r);
        if dd < best.1 {
            best = (j, dd);
        }
    }
    best
}

fn directed_sq(a: &PointCloud, b: &PointCloud) -> Result<Vec<f64>> {
    Ok(nearest_neighbors(a, b)?.into_iter().map(|(_, d)| d).collect())
}

pub fn hausdorff(a: &PointCloud, b: &PointCloud) -> Result<f64> {
    let ab = directed_sq(a, b)?.into_iter().fold(0.0, f64::max);
    let ba = directed_sq(b, a)?.into_iter().fold(0.0, f64::max);
    Ok(ab.max(ba).sqrt())
}

/// Symmetric mean of squared nearest-neighbor distances.
pub fn chamfer(a: &PointCloud, b: &PointCloud) -> Result<f64> {
    let ab = directed_sq(a, b)?;
    let ba = directed_sq(b, a)?;
    Ok(ab.iter().sum::<f64>() / ab.len() as f64 + ba.iter().sum::<f64>() / ba.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum W2Method {
    Exact,
    /// Mean of exact values over disjoint random subsamples.
    Subsampled,
}

impl W2Method {
    pub fn name(self) -> &'static str {
        match self {
            W2Method::Exact => "exact",
            W2Method::Subsampled => "subsampled",
        }
    }
}

fn exact_w2(a: &[f64], b: &[f64], d: usize) -> f64 {
    let n = a.len() / d;
    let mut cost = vec![0.0; n * n];
    cost.par_chunks_exact_mut(n).zip(a.par_chunks_exact(d)).for_each(|(row, p)| {
        for (c, q) in row.iter_mut().zip(b.chunks_exact(d)) {
            *c = dist2(p, q);
        }
    });
    let (_, total) = min_cost_assignment(&cost, n);
    (total.max(0.0) / n as f64).sqrt()
}

/// Wasserstein-2 distance between equal-size clouds with uniform weights.
///
/// Up to `cap` points the optimal matching is solved exactly. Larger clouds
/// are shuffled with `seed` and split into `ceil(n / cap)` disjoint chunks of
/// equal size, and the exact values are averaged.
pub fn w2(a: &PointCloud, b: &PointCloud, cap: usize, seed: u64) -> Result<(f64, W2Method)> {
    check_dims(a, b)?;
    if a.len() != b.len() {
        return Err(Error::Shape { expected: a.len(), got: b.len() });
    }
    if cap == 0 {
        return Err(Error::Argument("w2 cap must be positive".into()));
    }
    let (n, d) = (a.len(), a.dim());
    if n <= cap {
        return Ok((exact_w2(a.as_flat(), b.as_flat(), d), W2Method::Exact));
    }
    let chunks = n.div_ceil(cap);
    let size = n / chunks;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut ia: Vec<usize> = (0..n).collect();
    let mut ib: Vec<usize> = (0..n).collect();
    ia.shuffle(&mut rng);
    ib.shuffle(&mut rng);
    let gather = |cloud: &PointCloud, idx: &[usize]| -> Vec<f64> { idx.iter().flat_map(|&i| cloud.point(i).to_vec()).collect() };
    let mut total = 0.0;
    for k in 0..chunks {
        let range = k * size..(k + 1) * size;
        total += exact_w2(&gather(a, &ia[range.clone()]), &gather(b, &ib[range]), d);
    }
    Ok((total / chunks as f64, W2Method::Subsampled))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub w2: f64,
    pub hausdorff: f64,
    pub chamfer: f64,
    pub n_a: usize,
    pub n_b: usize,
    pub w2_method: W2Method,
}

pub fn cloud_metrics(a: &PointCloud, b: &PointCloud, cap: usize, seed: u64) -> Result<MetricReport> {
    let (w2, w2_method) = w2(a, b, cap, seed)?;
    Ok(MetricReport { w2, hausdorff: hausdorff(a, b)?, chamfer: chamfer(a, b)?, n_a: a.len(), n_b: b.len(), w2_method })
}

/// Errors of one distance bin, in percent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapeBin {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
    /// `u` against `sqrt(d^2 + c0)`.
    pub u_mean: f64,
    pub u_std: f64,
    /// `|u v|` against `d`.
    pub step_mean: f64,
    pub step_std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapeReport {
    pub bins: Vec<MapeBin>,
    /// Indices of bins with no pairs; they are left out of `bins`.
    pub empty_bins: Vec<usize>,
    pub median_u: f64,
    pub median_step: f64,
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

fn median(xs: &mut [f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    xs.sort_by(f64::total_cmp);
    let m = xs.len() / 2;
    if xs.len() % 2 == 1 {
        xs[m]
    } else {
        0.5 * (xs[m - 1] + xs[m])
    }
}

/// Percentage errors of the predicted distance and step length, binned by
/// the true distance `|x - s_data|` into `n_bins` equal-width bins.
pub fn distance_mape(field: &dyn Field, batch: &PairBatch, c0: f64, n_bins: usize) -> Result<MapeReport> {
    if batch.is_empty() || n_bins == 0 {
        return Err(Error::Argument("need pairs and at least one bin".into()));
    }
    let d = field.dim();
    if batch.dim() != d {
        return Err(Error::Shape { expected: d, got: batch.dim() });
    }
    let xs: Vec<f64> = batch.x.iter().copied().collect();
    let (u, v) = field.eval_flat(&xs)?;
    let n = batch.len();
    let mut dist = Vec::with_capacity(n);
    let mut err_u = Vec::with_capacity(n);
    let mut err_step = Vec::with_capacity(n);
    for i in 0..n {
        let x = batch.x.row(i);
        let s = batch.s_data.row(i);
        let r = x.iter().zip(s.iter()).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        let truth = (r * r + c0).sqrt();
        let step = u[i].abs() * v[i * d..(i + 1) * d].iter().map(|c| c * c).sum::<f64>().sqrt();
        dist.push(r);
        err_u.push(100.0 * (u[i] - truth).abs() / truth);
        err_step.push(if r > 0.0 { 100.0 * (step - r).abs() / r } else { f64::NAN });
    }
    let top = dist.iter().cloned().fold(0.0, f64::max);
    let width = if top > 0.0 { top / n_bins as f64 } else { 1.0 };
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); n_bins];
    for (i, r) in dist.iter().enumerate() {
        let k = ((r / width) as usize).min(n_bins - 1);
        members[k].push(i);
    }
    let mut bins = Vec::new();
    let mut empty_bins = Vec::new();
    for (k, idx) in members.iter().enumerate() {
        if idx.is_empty() {
            empty_bins.push(k);
            continue;
        }
        let eu: Vec<f64> = idx.iter().map(|&i| err_u[i]).collect();
        let es: Vec<f64> = idx.iter().map(|&i| err_step[i]).filter(|e| e.is_finite()).collect();
        let (u_mean, u_std) = mean_std(&eu);
        let (step_mean, step_std) = mean_std(&es);
        bins.push(MapeBin {
            lo: k as f64 * width,
            hi: (k + 1) as f64 * width,
            count: idx.len(),
            u_mean,
            u_std,
            step_mean,
            step_std,
        });
    }
    let mut step_finite: Vec<f64> = err_step.into_iter().filter(|e| e.is_finite()).collect();
    Ok(MapeReport { bins, empty_bins, median_u: median(&mut err_u), median_step: median(&mut step_finite) })
}

/// Share of `counts` held by its `k` largest entries.
pub fn topk_mass(counts: &[usize], k: usize) -> f64 {
    let total: usize = counts.iter().sum();
    if total == 0 {
        return 0.0;
    }
    let mut sorted = counts.to_vec();
    sorted.sort_unstable_by(|a, b| b.cmp(a));
    sorted.iter().take(k).sum::<usize>() as f64 / total as f64
}

/// Noised samples drawn in one time bin, with the target each came from and
/// the target nearest to it.
#[derive(Debug, Clone, PartialEq)]
pub struct BinAssignments {
    pub source_index: Vec<usize>,
    pub nearest_index: Vec<usize>,
}

/// Interpolate `n` standard normal draws toward uniformly chosen targets with
/// `t ~ U[lo, hi)` and find each sample's nearest target.
pub fn bin_assignments<R: Rng + ?Sized>(target: &PointCloud, n: usize, lo: f64, hi: f64, rng: &mut R) -> Result<BinAssignments> {
    if !(0.0..1.0).contains(&lo) || !(hi > lo && hi <= 1.0) {
        return Err(Error::Argument(format!("invalid time bin [{lo}, {hi})")));
    }
    let d = target.dim();
    let mut xs = Vec::with_capacity(n * d);
    let mut source_index = Vec::with_capacity(n);
    for _ in 0..n {
        let i = rng.random_range(0..target.len());
        let t = lo + (hi - lo) * rng.random::<f64>();
        for &s in target.point(i) {
            let x0: f64 = rng.sample(StandardNormal);
            xs.push((1.0 - t) * x0 + t * s);
        }
        source_index.push(i);
    }
    let nearest_index = xs.par_chunks_exact(d).map(|x| nearest_in(x, target.as_flat(), d).0).collect();
    Ok(BinAssignments { source_index, nearest_index })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageCurve {
    /// Bin midpoints.
    pub t_bins: Vec<f64>,
    pub coverage: Vec<f64>,
    pub topk_mass: Vec<f64>,
}

/// Coverage and top-`k` concentration of nearest-target assignments per
/// time bin. `t_edges` holds the `m + 1` bin edges.
pub fn coverage_curve(target: &PointCloud, n_per_bin: usize, t_edges: &[f64], k: usize, seed: u64) -> Result<CoverageCurve> {
    if t_edges.len() < 2 || n_per_bin == 0 {
        return Err(Error::Argument("need at least one time bin and one sample".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut curve = CoverageCurve { t_bins: Vec::new(), coverage: Vec::new(), topk_mass: Vec::new() };
    for w in t_edges.windows(2) {
        let bin = bin_assignments(target, n_per_bin, w[0], w[1], &mut rng)?;
        let mut hits = vec![0usize; target.len()];
        for &j in &bin.nearest_index {
            hits[j] += 1;
        }
        curve.t_bins.push(0.5 * (w[0] + w[1]));
        curve.coverage.push(hits.iter().filter(|&&h| h > 0).count() as f64 / target.len() as f64);
        curve.topk_mass.push(topk_mass(&hits, k));
    }
    Ok(curve)
}

/// Points `c e_1 + z_i` with `z_i ~ N(0, I)` and `c = offset * sqrt(dim)`.
/// Their norms spread with the projection on `e_1`, so the few points with
/// the smallest norm end up nearest to most isotropic noise.
pub fn hub_cloud(n: usize, dim: usize, offset: f64, seed: u64) -> Result<PointCloud> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let shift = offset * (dim as f64).sqrt();
    let mut points = Vec::with_capacity(n * dim);
    for _ in 0..n {
        for j in 0..dim {
            let z: f64 = rng.sample(StandardNormal);
            points.push(if j == 0 { z + shift } else { z });
        }
    }
    PointCloud::new(dim, points, CloudLabel::Target, seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn cloud(dim: usize, pts: &[f64]) -> PointCloud {
        PointCloud::new(dim, pts.to_vec(), CloudLabel::Generated, 0).unwrap()
    }

    #[test]
    fn hausdorff_examples() {
        let a = cloud(1, &[0.0]);
        assert_eq!(hausdorff(&a, &a).unwrap(), 0.0);
        assert_eq!(hausdorff(&a, &cloud(1, &[3.0])).unwrap(), 3.0);
        assert_eq!(hausdorff(&cloud(1, &[0.0, 10.0]), &a).unwrap(), 10.0);
    }

    #[test]
    fn chamfer_examples() {
        let a = cloud(1, &[0.0]);
        assert_eq!(chamfer(&a, &a).unwrap(), 0.0);
        assert_eq!(chamfer(&a, &cloud(1, &[3.0])).unwrap(), 18.0);
    }

    #[test]
    fn chamfer_single_displacement_bound() {
        let pts: Vec<f64> = (0..20).map(|i| i as f64).collect();
        let a = cloud(1, &pts);
        let mut moved = pts.clone();
        let delta = 0.3;
        moved[7] += delta;
        let b = cloud(1, &moved);
        assert!(chamfer(&a, &b).unwrap() <= 2.0 * delta * delta / 20.0 + 1e-15);
    }

    #[test]
    fn w2_singletons_and_identity() {
        let a = cloud(2, &[0.0, 0.0]);
        let b = cloud(2, &[3.0, 4.0]);
        assert!((w2(&a, &b, 8, 0).unwrap().0 - 5.0).abs() < 1e-15);
        let c = cloud(2, &[1.0, 2.0, 3.0, 4.0, -1.0, 0.5]);
        assert_eq!(w2(&c, &c, 8, 0).unwrap(), (0.0, W2Method::Exact));
        assert!(w2(&a, &c, 8, 0).is_err());
    }

    #[test]
    fn w2_subsamples_above_cap() {
        let a = cloud(1, &(0..10).map(|i| i as f64).collect::<Vec<_>>());
        let b = cloud(1, &(0..10).map(|i| i as f64 + 1.0).collect::<Vec<_>>());
        let (v, m) = w2(&a, &b, 4, 1).unwrap();
        assert_eq!(m, W2Method::Subsampled);
        assert!(v > 0.0 && v.is_finite());
        assert_eq!(w2(&a, &b, 4, 1).unwrap(), (v, m));
    }

    #[test]
    fn topk_mass_examples() {
        assert_eq!(topk_mass(&[5, 0, 3, 2], 1), 0.5);
        assert_eq!(topk_mass(&[5, 0, 3, 2], 10), 1.0);
        assert_eq!(topk_mass(&[0, 0], 1), 0.0);
    }

    #[test]
    fn single_point_target_fully_covered() {
        let target = cloud(3, &[1.0, 2.0, 3.0]);
        let c = coverage_curve(&target, 50, &[0.0, 0.3, 0.7, 1.0], 1, 4).unwrap();
        assert!(c.coverage.iter().all(|&v| v == 1.0));
        assert!(c.topk_mass.iter().all(|&v| v == 1.0));
    }

    #[test]
    fn late_bin_finds_own_target() {
        // spacing 10, noise at most ~0.01 * 5
        let pts: Vec<f64> = (0..40).flat_map(|i| [10.0 * i as f64, 0.0]).collect();
        let target = cloud(2, &pts);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let bin = bin_assignments(&target, 30, 0.99, 1.0, &mut rng).unwrap();
        assert_eq!(bin.source_index, bin.nearest_index);
        let mut distinct = bin.source_index.clone();
        distinct.sort_unstable();
        distinct.dedup();
        // same seed, same draws
        let c = coverage_curve(&target, 30, &[0.99, 1.0], 3, 2).unwrap();
        assert_eq!(c.coverage[0], distinct.len() as f64 / 40.0);
    }

    fn small_cloud(n: usize) -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(-5.0..5.0f64, 2 * n)
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn metrics_symmetric(a in small_cloud(6), b in small_cloud(6)) {
            let (a, b) = (cloud(2, &a), cloud(2, &b));
            prop_assert_eq!(hausdorff(&a, &b).unwrap(), hausdorff(&b, &a).unwrap());
            prop_assert!((chamfer(&a, &b).unwrap() - chamfer(&b, &a).unwrap()).abs() < 1e-12);
            prop_assert!((w2(&a, &b, 16, 0).unwrap().0 - w2(&b, &a, 16, 0).unwrap().0).abs() < 1e-12);
        }

        #[test]
        fn hausdorff_bounds_chamfer(a in small_cloud(5), b in small_cloud(7)) {
            let (a, b) = (cloud(2, &a), cloud(2, &b));
            let h = hausdorff(&a, &b).unwrap();
            prop_assert!(chamfer(&a, &b).unwrap() <= 2.0 * h * h + 1e-12);
            for (_, d) in nearest_neighbors(&a, &b).unwrap() {
                prop_assert!(d.sqrt() <= h + 1e-12);
            }
        }

        #[test]
        fn w2_triangle_inequality(a in small_cloud(16), b in small_cloud(16), c in small_cloud(16)) {
            let (a, b, c) = (cloud(2, &a), cloud(2, &b), cloud(2, &c));
            let ab = w2(&a, &b, 16, 0).unwrap().0;
            let bc = w2(&b, &c, 16, 0).unwrap().0;
            let ac = w2(&a, &c, 16, 0).unwrap().0;
            prop_assert!(ac <= ab + bc + 1e-9);
        }
    }
}
