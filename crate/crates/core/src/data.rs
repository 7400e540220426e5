//! Synthetic point clouds, Gaussian mixtures and the noised-pair generator.

use std::io::{BufRead, Write};

use ndarray::Array2;
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::index::sample as sample_indices;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::assignment::min_cost_assignment;
use crate::error::{Error, Result};
use crate::vecops::dist2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CloudLabel {
    Source,
    Target,
    Generated,
}

/// `n × dim` points stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    dim: usize,
    points: Vec<f64>,
    label: CloudLabel,
    seed: u64,
}

impl PointCloud {
    pub fn new(dim: usize, points: Vec<f64>, label: CloudLabel, seed: u64) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Argument("point dimension must be positive".into()));
        }
        if points.is_empty() || points.len() % dim != 0 {
            return Err(Error::Argument(format!(
                "expected a nonempty multiple of {dim} coordinates, got {}",
                points.len()
            )));
        }
        if points.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("point cloud contains a non-finite coordinate".into()));
        }
        Ok(Self { dim, points, label, seed })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.points.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn label(&self) -> CloudLabel {
        self.label
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i * self.dim..(i + 1) * self.dim]
    }

    pub fn iter(&self) -> std::slice::ChunksExact<'_, f64> {
        self.points.chunks_exact(self.dim)
    }

    pub fn as_flat(&self) -> &[f64] {
        &self.points
    }

    pub fn into_flat(self) -> Vec<f64> {
        self.points
    }

    pub fn mean(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.dim];
        for p in self.iter() {
            for (a, b) in m.iter_mut().zip(p) {
                *a += b;
            }
        }
        let n = self.len() as f64;
        m.iter_mut().for_each(|a| *a /= n);
        m
    }

    /// Rows `indices` as a new cloud with the same label.
    pub fn select(&self, indices: &[usize]) -> Result<Self> {
        let mut pts = Vec::with_capacity(indices.len() * self.dim);
        for &i in indices {
            pts.extend_from_slice(self.point(i));
        }
        Self::new(self.dim, pts, self.label, self.seed)
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let header: Vec<String> = (0..self.dim).map(|j| format!("x{j}")).collect();
        writeln!(w, "{}", header.join(","))?;
        for p in self.iter() {
            let row: Vec<String> = p.iter().map(|v| v.to_string()).collect();
            writeln!(w, "{}", row.join(","))?;
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(r: R, label: CloudLabel, seed: u64) -> Result<Self> {
        let mut lines = r.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::Argument("empty CSV".into()))??;
        let dim = header.split(',').count();
        for (j, name) in header.split(',').enumerate() {
            if name.trim() != format!("x{j}") {
                return Err(Error::Argument(format!("unexpected CSV header column {name:?}")));
            }
        }
        let mut pts = Vec::new();
        for (row, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let before = pts.len();
            for field in line.split(',') {
                let v: f64 = field.trim().parse().map_err(|_| {
                    Error::Argument(format!("row {}: cannot parse {field:?}", row + 1))
                })?;
                pts.push(v);
            }
            if pts.len() - before != dim {
                return Err(Error::Argument(format!("row {}: expected {dim} columns", row + 1)));
            }
        }
        Self::new(dim, pts, label, seed)
    }
}

/// One isotropic Gaussian component `N(mean, std^2 I)` with mixture weight.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GmmComponent {
    pub mean: Vec<f64>,
    pub std: f64,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GmmSpec {
    pub components: Vec<GmmComponent>,
}

impl GmmSpec {
    pub fn standard_normal(dim: usize) -> Self {
        Self { components: vec![GmmComponent { mean: vec![0.0; dim], std: 1.0, weight: 1.0 }] }
    }

    /// Equal-weight components on a circle at angles `k · 45°`.
    pub fn eight_gaussians(radius: f64, std: f64) -> Self {
        let components = (0..8)
            .map(|k| {
                let a = k as f64 * std::f64::consts::FRAC_PI_4;
                GmmComponent { mean: vec![radius * a.cos(), radius * a.sin()], std, weight: 0.125 }
            })
            .collect();
        Self { components }
    }

    /// Two components at `±4 e1` in 8D, `σ = 0.5`.
    pub fn default_8d_source() -> Self {
        let comp = |sign: f64| {
            let mut mean = vec![0.0; 8];
            mean[0] = 4.0 * sign;
            GmmComponent { mean, std: 0.5, weight: 0.5 }
        };
        Self { components: vec![comp(1.0), comp(-1.0)] }
    }

    /// Four components at `4(±e2 ± e3)` in 8D, `σ = 0.5`.
    pub fn default_8d_target() -> Self {
        let mut components = Vec::with_capacity(4);
        for a in [1.0, -1.0] {
            for b in [1.0, -1.0] {
                let mut mean = vec![0.0; 8];
                mean[1] = 4.0 * a;
                mean[2] = 4.0 * b;
                components.push(GmmComponent { mean, std: 0.5, weight: 0.25 });
            }
        }
        Self { components }
    }

    pub fn dim(&self) -> usize {
        self.components.first().map_or(0, |c| c.mean.len())
    }

    pub fn validate(&self) -> Result<()> {
        let Some(first) = self.components.first() else {
            return Err(Error::Config("mixture needs at least one component".into()));
        };
        let dim = first.mean.len();
        if dim == 0 {
            return Err(Error::Config("mixture dimension must be positive".into()));
        }
        for (k, c) in self.components.iter().enumerate() {
            if c.mean.len() != dim {
                return Err(Error::Config(format!("component {k} has dimension {}", c.mean.len())));
            }
            if c.mean.iter().any(|v| !v.is_finite()) {
                return Err(Error::Config(format!("component {k} mean is not finite")));
            }
            if !(c.std > 0.0 && c.std.is_finite()) {
                return Err(Error::Config(format!("component {k} std must be positive")));
            }
            if !(c.weight >= 0.0 && c.weight.is_finite()) {
                return Err(Error::Config(format!("component {k} weight must be nonnegative")));
            }
        }
        let total: f64 = self.components.iter().map(|c| c.weight).sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!("weights sum to {total}, expected 1")));
        }
        Ok(())
    }

    pub fn mean(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.dim()];
        for c in &self.components {
            for (a, b) in m.iter_mut().zip(&c.mean) {
                *a += c.weight * b;
            }
        }
        m
    }

    /// Log of each component's weighted density at `x`.
    pub fn component_log_densities(&self, x: &[f64]) -> Vec<f64> {
        let d = x.len() as f64;
        self.components
            .iter()
            .map(|c| {
                let var = c.std * c.std;
                c.weight.ln()
                    - 0.5 * d * (2.0 * std::f64::consts::PI * var).ln()
                    - 0.5 * dist2(x, &c.mean) / var
            })
            .collect()
    }

    pub fn log_density(&self, x: &[f64]) -> f64 {
        crate::vecops::log_sum_exp(&self.component_log_densities(x))
    }

    /// Draw `n` points; also returns the component of each draw.
    pub fn sample_with_components<R: Rng + ?Sized>(
        &self,
        n: usize,
        rng: &mut R,
    ) -> Result<(Vec<f64>, Vec<usize>)> {
        self.validate()?;
        let dim = self.dim();
        let picker = WeightedIndex::new(self.components.iter().map(|c| c.weight))
            .map_err(|e| Error::Config(format!("mixture weights: {e}")))?;
        let mut pts = Vec::with_capacity(n * dim);
        let mut comps = Vec::with_capacity(n);
        for _ in 0..n {
            let k = picker.sample(rng);
            let c = &self.components[k];
            for &m in &c.mean {
                let z: f64 = rng.sample(StandardNormal);
                pts.push(m + c.std * z);
            }
            comps.push(k);
        }
        Ok((pts, comps))
    }
}

/// 8-Gaussians source geometry used by the 2D toy pipeline.
pub const TOY_SOURCE_RADIUS: f64 = 5.0;
pub const TOY_SOURCE_STD: f64 = 0.316_227_766_016_837_94;
/// Jitter of the two-moons target used by the 2D toy pipeline.
pub const TOY_MOONS_NOISE: f64 = 0.1;

pub fn gmm_sample(spec: &GmmSpec, n: usize, seed: u64) -> Result<PointCloud> {
    if n == 0 {
        return Err(Error::Argument("n must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (pts, _) = spec.sample_with_components(n, &mut rng)?;
    PointCloud::new(spec.dim(), pts, CloudLabel::Source, seed)
}

pub fn eight_gaussians(n: usize, radius: f64, std: f64, seed: u64) -> Result<PointCloud> {
    if !(radius > 0.0) || !(std > 0.0) {
        return Err(Error::Argument("radius and std must be positive".into()));
    }
    gmm_sample(&GmmSpec::eight_gaussians(radius, std), n, seed)
}

/// Two interleaved unit half-circles: the upper arc `(cos θ, sin θ)` and the
/// lower arc `(1 - cos θ, 1/2 - sin θ)`, `θ ~ U[0, π]`, first half upper.
pub fn two_moons(n: usize, noise_std: f64, seed: u64) -> Result<PointCloud> {
    if n == 0 {
        return Err(Error::Argument("n must be at least 1".into()));
    }
    if !(noise_std >= 0.0 && noise_std.is_finite()) {
        return Err(Error::Argument("noise_std must be nonnegative".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_upper = n - n / 2;
    let mut pts = Vec::with_capacity(2 * n);
    for i in 0..n {
        let theta = rng.random_range(0.0..=std::f64::consts::PI);
        let (x, y) = if i < n_upper {
            (theta.cos(), theta.sin())
        } else {
            (1.0 - theta.cos(), 0.5 - theta.sin())
        };
        let nx: f64 = rng.sample(StandardNormal);
        let ny: f64 = rng.sample(StandardNormal);
        pts.push(x + noise_std * nx);
        pts.push(y + noise_std * ny);
    }
    PointCloud::new(2, pts, CloudLabel::Target, seed)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TimeKind {
    Uniform,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeDistribution {
    pub kind: TimeKind,
    pub t_min: f64,
    pub t_max: f64,
}

impl Default for TimeDistribution {
    fn default() -> Self {
        Self { kind: TimeKind::Uniform, t_min: 0.0, t_max: 0.999 }
    }
}

impl TimeDistribution {
    pub fn uniform(t_min: f64, t_max: f64) -> Result<Self> {
        let d = Self { kind: TimeKind::Uniform, t_min, t_max };
        d.validate()?;
        Ok(d)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.t_min) || !(self.t_max > 0.0 && self.t_max <= 1.0) {
            return Err(Error::Config(format!(
                "time range [{}, {}] must lie in [0, 1]",
                self.t_min, self.t_max
            )));
        }
        if !(self.t_min < self.t_max) {
            return Err(Error::Config("t_min must be below t_max".into()));
        }
        Ok(())
    }

    pub fn density(&self, t: f64) -> f64 {
        if t >= self.t_min && t <= self.t_max {
            1.0 / (self.t_max - self.t_min)
        } else {
            0.0
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        rng.random_range(self.t_min..self.t_max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CouplingStrategy {
    Random,
    MinibatchOt,
    MinibatchClosestWithReplacement,
    MinibatchClosestWithoutReplacement,
}

/// One noised sample `x = (1 - t) x0 + t s_data`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingPair {
    pub x: Vec<f64>,
    pub s_data: Vec<f64>,
    pub x0: Vec<f64>,
    pub t: f64,
    pub target_index: usize,
}

/// A batch of pairs in matrix form (`n × dim` each).
#[derive(Debug, Clone, PartialEq)]
pub struct PairBatch {
    pub x: Array2<f64>,
    pub s_data: Array2<f64>,
    pub x0: Array2<f64>,
    pub t: Vec<f64>,
    pub target_index: Vec<usize>,
}

impl PairBatch {
    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.x.ncols()
    }

    pub fn pair(&self, i: usize) -> TrainingPair {
        TrainingPair {
            x: self.x.row(i).to_vec(),
            s_data: self.s_data.row(i).to_vec(),
            x0: self.x0.row(i).to_vec(),
            t: self.t[i],
            target_index: self.target_index[i],
        }
    }

    pub fn pairs(&self) -> Vec<TrainingPair> {
        (0..self.len()).map(|i| self.pair(i)).collect()
    }

    pub fn from_pairs(pairs: &[TrainingPair]) -> Result<Self> {
        let first = pairs.first().ok_or_else(|| Error::Argument("empty pair list".into()))?;
        let d = first.x.len();
        let n = pairs.len();
        let mut x = Vec::with_capacity(n * d);
        let mut s = Vec::with_capacity(n * d);
        let mut x0 = Vec::with_capacity(n * d);
        for p in pairs {
            if p.x.len() != d || p.s_data.len() != d || p.x0.len() != d {
                return Err(Error::Shape { expected: d, got: p.x.len() });
            }
            x.extend_from_slice(&p.x);
            s.extend_from_slice(&p.s_data);
            x0.extend_from_slice(&p.x0);
        }
        Ok(Self {
            x: Array2::from_shape_vec((n, d), x).expect("shape"),
            s_data: Array2::from_shape_vec((n, d), s).expect("shape"),
            x0: Array2::from_shape_vec((n, d), x0).expect("shape"),
            t: pairs.iter().map(|p| p.t).collect(),
            target_index: pairs.iter().map(|p| p.target_index).collect(),
        })
    }

    /// Build a batch from explicit `(x0, s, t)` triples.
    pub fn interpolate(x0: Array2<f64>, s_data: Array2<f64>, t: Vec<f64>, target_index: Vec<usize>) -> Self {
        let mut x = x0.clone();
        for (i, mut row) in x.rows_mut().into_iter().enumerate() {
            let ti = t[i];
            for (j, v) in row.iter_mut().enumerate() {
                *v = (1.0 - ti) * *v + ti * s_data[[i, j]];
            }
        }
        Self { x, s_data, x0, t, target_index }
    }
}

/// Pair each row of `sources` with a row of `targets` (both `n × dim` flat).
/// Returns `assignment[i]` = target row paired with source `i`.
pub fn couple(sources: &[f64], targets: &[f64], dim: usize, strategy: CouplingStrategy) -> Vec<usize> {
    let n = sources.len() / dim;
    let m = targets.len() / dim;
    let src = |i: usize| &sources[i * dim..(i + 1) * dim];
    let tgt = |j: usize| &targets[j * dim..(j + 1) * dim];
    match strategy {
        CouplingStrategy::Random => (0..n).collect(),
        CouplingStrategy::MinibatchOt => {
            debug_assert_eq!(n, m);
            let mut cost = Vec::with_capacity(n * n);
            for i in 0..n {
                for j in 0..n {
                    cost.push(dist2(src(i), tgt(j)));
                }
            }
            min_cost_assignment(&cost, n).0
        }
        CouplingStrategy::MinibatchClosestWithReplacement => (0..n)
            .map(|i| nearest(src(i), (0..m).map(|j| (j, tgt(j)))))
            .collect(),
        CouplingStrategy::MinibatchClosestWithoutReplacement => {
            // Shortest remaining pair first, so late sources are not left with
            // whatever targets happen to be unused. Bit patterns of nonnegative
            // floats sort like the floats themselves.
            let mut pairs: Vec<(u64, usize)> = Vec::with_capacity(n * m);
            for i in 0..n {
                for j in 0..m {
                    pairs.push((dist2(src(i), tgt(j)).to_bits(), i * m + j));
                }
            }
            pairs.sort_unstable();
            let mut assignment = vec![usize::MAX; n];
            let mut used = vec![false; m];
            let mut left = n;
            for (_, ij) in pairs {
                let (i, j) = (ij / m, ij % m);
                if assignment[i] == usize::MAX && !used[j] {
                    assignment[i] = j;
                    used[j] = true;
                    left -= 1;
                    if left == 0 {
                        break;
                    }
                }
            }
            assignment
        }
    }
}

/// Index of the candidate closest to `x`; ties go to the lowest index.
fn nearest<'a>(x: &[f64], candidates: impl Iterator<Item = (usize, &'a [f64])>) -> usize {
    let mut best = (usize::MAX, f64::INFINITY);
    for (j, c) in candidates {
        let d = dist2(x, c);
        if d < best.1 {
            best = (j, d);
        }
    }
    best.0
}

/// Draws noised training pairs from a target cloud.
#[derive(Debug, Clone)]
pub struct PairSampler<'a> {
    pub target: &'a PointCloud,
    pub source: GmmSpec,
    pub t_dist: TimeDistribution,
    pub coupling: CouplingStrategy,
}

impl<'a> PairSampler<'a> {
    /// Standard normal source.
    pub fn new(target: &'a PointCloud, t_dist: TimeDistribution, coupling: CouplingStrategy) -> Self {
        Self { target, source: GmmSpec::standard_normal(target.dim()), t_dist, coupling }
    }

    pub fn with_source(mut self, source: GmmSpec) -> Self {
        self.source = source;
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.t_dist.validate()?;
        self.source.validate()?;
        if self.source.dim() != self.target.dim() {
            return Err(Error::Shape { expected: self.target.dim(), got: self.source.dim() });
        }
        Ok(())
    }

    pub fn sample<R: Rng + ?Sized>(&self, batch: usize, rng: &mut R) -> Result<PairBatch> {
        self.validate()?;
        if batch == 0 {
            return Err(Error::Argument("batch must be at least 1".into()));
        }
        let d = self.target.dim();
        let n_target = self.target.len();
        let (x0, _) = self.source.sample_with_components(batch, rng)?;
        let drawn: Vec<usize> = match self.coupling {
            CouplingStrategy::MinibatchClosestWithoutReplacement => {
                if batch > n_target {
                    return Err(Error::Argument(format!(
                        "batch {batch} exceeds the {n_target} targets available without replacement"
                    )));
                }
                sample_indices(rng, n_target, batch).into_vec()
            }
            _ => (0..batch).map(|_| rng.random_range(0..n_target)).collect(),
        };
        let mut pool = Vec::with_capacity(batch * d);
        for &i in &drawn {
            pool.extend_from_slice(self.target.point(i));
        }
        let assignment = couple(&x0, &pool, d, self.coupling);
        let target_index: Vec<usize> = assignment.iter().map(|&j| drawn[j]).collect();
        let mut s = Vec::with_capacity(batch * d);
        for &i in &target_index {
            s.extend_from_slice(self.target.point(i));
        }
        let t: Vec<f64> = (0..batch).map(|_| self.t_dist.sample(rng)).collect();
        Ok(PairBatch::interpolate(
            Array2::from_shape_vec((batch, d), x0).expect("shape"),
            Array2::from_shape_vec((batch, d), s).expect("shape"),
            t,
            target_index,
        ))
    }
}

/// Standard normal source, seeded. See [`PairSampler`] for other sources.
pub fn sample_pairs(
    target: &PointCloud,
    batch: usize,
    t_dist: TimeDistribution,
    coupling: CouplingStrategy,
    seed: u64,
) -> Result<Vec<TrainingPair>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(PairSampler::new(target, t_dist, coupling).sample(batch, &mut rng)?.pairs())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    #[test]
    fn moons_without_noise_lie_on_arcs() {
        let c = two_moons(1001, 0.0, 3).unwrap();
        assert_eq!(c.len(), 1001);
        for (i, p) in c.iter().enumerate() {
            let r = if i < 501 {
                (p[0] * p[0] + p[1] * p[1]).sqrt()
            } else {
                ((p[0] - 1.0).powi(2) + (p[1] - 0.5).powi(2)).sqrt()
            };
            assert!((r - 1.0).abs() < 1e-12);
            if i < 501 {
                assert!(p[1] >= -1e-15);
            } else {
                assert!(p[1] <= 0.5 + 1e-15);
            }
        }
    }

    #[test]
    fn moons_even_split_and_seeded() {
        let a = two_moons(10000, 0.1, 9).unwrap();
        let b = two_moons(10000, 0.1, 9).unwrap();
        assert_eq!(a, b);
        let upper = a.iter().take(5000).count();
        assert_eq!(upper, 5000);
        assert!(two_moons(0, 0.1, 1).is_err());
    }

    #[test]
    fn eight_gaussians_tiny_std_hits_centers() {
        let c = eight_gaussians(400, 3.0, 1e-12, 1).unwrap();
        let spec = GmmSpec::eight_gaussians(3.0, 1e-12);
        for p in c.iter() {
            let best = spec
                .components
                .iter()
                .map(|k| dist2(p, &k.mean).sqrt())
                .fold(f64::INFINITY, f64::min);
            assert!(best < 1e-9);
        }
        for k in 0..8 {
            let a = &spec.components[k].mean;
            let b = &spec.components[(k + 1) % 8].mean;
            let ang = crate::vecops::angle(a, b).unwrap();
            assert!((ang - std::f64::consts::FRAC_PI_4).abs() < 1e-12);
        }
    }

    #[test]
    fn mixture_with_one_live_component() {
        let mut spec = GmmSpec::eight_gaussians(1.0, 0.1);
        for c in &mut spec.components {
            c.weight = 0.0;
        }
        spec.components[0].weight = 1.0;
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let (_, comps) = spec.sample_with_components(500, &mut rng).unwrap();
        assert!(comps.iter().all(|&k| k == 0));
    }

    #[test]
    fn invalid_mixtures_rejected() {
        let mut spec = GmmSpec::standard_normal(2);
        spec.components[0].weight = 0.5;
        assert!(spec.validate().is_err());
        let mut spec = GmmSpec::standard_normal(2);
        spec.components[0].std = 0.0;
        assert!(spec.validate().is_err());
        assert!(GmmSpec { components: vec![] }.validate().is_err());
        assert!(gmm_sample(&GmmSpec::standard_normal(2), 0, 1).is_err());
    }

    #[test]
    fn time_distribution_bounds() {
        assert!(TimeDistribution::uniform(0.5, 0.5).is_err());
        assert!(TimeDistribution::uniform(-0.1, 0.5).is_err());
        assert!(TimeDistribution::uniform(0.0, 1.1).is_err());
        TimeDistribution::default().validate().unwrap();
    }

    #[test]
    fn ot_on_two_points_uncrosses() {
        let x0 = [0.0, 0.0, 10.0, 0.0];
        let targets = [9.0, 0.0, 1.0, 0.0];
        assert_eq!(couple(&x0, &targets, 2, CouplingStrategy::MinibatchOt), vec![1, 0]);
    }

    #[test]
    fn closest_with_replacement_can_collapse() {
        let x0 = [0.0, 1.0, 2.0];
        let targets = [0.5, 100.0, 200.0];
        let a = couple(&x0, &targets, 1, CouplingStrategy::MinibatchClosestWithReplacement);
        assert_eq!(a, vec![0, 0, 0]);
        let b = couple(&x0, &targets, 1, CouplingStrategy::MinibatchClosestWithoutReplacement);
        assert_eq!(b, vec![0, 2, 1]);
    }

    #[test]
    fn without_replacement_takes_shortest_pair_first() {
        let x0 = [0.0, 1.0];
        let targets = [0.9, 5.0];
        let a = couple(&x0, &targets, 1, CouplingStrategy::MinibatchClosestWithoutReplacement);
        assert_eq!(a, vec![1, 0]);
    }

    #[test]
    fn without_replacement_needs_enough_targets() {
        let target = two_moons(4, 0.0, 1).unwrap();
        let r = sample_pairs(&target, 5, TimeDistribution::default(), CouplingStrategy::MinibatchClosestWithoutReplacement, 1);
        assert!(matches!(r, Err(Error::Argument(_))));
        assert!(sample_pairs(&target, 5, TimeDistribution::default(), CouplingStrategy::Random, 1).is_ok());
    }

    #[test]
    fn near_one_times_land_on_targets() {
        let target = two_moons(64, 0.1, 2).unwrap();
        let t = TimeDistribution::uniform(0.999 - 1e-9, 0.999).unwrap();
        for p in sample_pairs(&target, 64, t, CouplingStrategy::Random, 5).unwrap() {
            let bound = 0.001 * (crate::vecops::norm(&p.x0) + crate::vecops::norm(&p.s_data)) + 1e-12;
            assert!(dist2(&p.x, &p.s_data).sqrt() <= bound);
        }
    }

    #[test]
    fn csv_round_trip() {
        let c = two_moons(17, 0.1, 4).unwrap();
        let mut buf = Vec::new();
        c.write_csv(&mut buf).unwrap();
        assert!(buf.starts_with(b"x0,x1\n"));
        let back = PointCloud::read_csv(buf.as_slice(), CloudLabel::Target, 4).unwrap();
        assert_eq!(back, c);
        assert!(PointCloud::read_csv(&b"a,b\n1,2\n"[..], CloudLabel::Target, 0).is_err());
    }

    fn strategy() -> impl Strategy<Value = CouplingStrategy> {
        prop_oneof![
            Just(CouplingStrategy::Random),
            Just(CouplingStrategy::MinibatchOt),
            Just(CouplingStrategy::MinibatchClosestWithReplacement),
            Just(CouplingStrategy::MinibatchClosestWithoutReplacement),
        ]
    }

    proptest! {
        #[test]
        fn interpolation_identity_holds(seed in 0u64..500, coupling in strategy(), batch in 1usize..40) {
            let target = two_moons(64, 0.1, seed).unwrap();
            let pairs = sample_pairs(&target, batch, TimeDistribution::default(), coupling, seed).unwrap();
            prop_assert_eq!(pairs.len(), batch);
            for p in &pairs {
                prop_assert!(p.t >= 0.0 && p.t < 1.0);
                prop_assert_eq!(p.s_data.as_slice(), target.point(p.target_index));
                for j in 0..2 {
                    prop_assert_eq!(p.x[j], (1.0 - p.t) * p.x0[j] + p.t * p.s_data[j]);
                }
            }
        }

        #[test]
        fn ot_never_costs_more_than_random(seed in 0u64..500, batch in 1usize..24) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let x0: Vec<f64> = (0..batch * 3).map(|_| rng.sample(StandardNormal)).collect();
            let tg: Vec<f64> = (0..batch * 3).map(|_| rng.sample::<f64, _>(StandardNormal) + 1.0).collect();
            let cost = |a: &[usize]| -> f64 {
                a.iter().enumerate().map(|(i, &j)| dist2(&x0[i * 3..i * 3 + 3], &tg[j * 3..j * 3 + 3])).sum()
            };
            let ot = couple(&x0, &tg, 3, CouplingStrategy::MinibatchOt);
            let random = couple(&x0, &tg, 3, CouplingStrategy::Random);
            prop_assert!(cost(&ot) <= cost(&random) + 1e-12);
        }
    }
}
