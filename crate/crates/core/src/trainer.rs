//! Training loop: sample pairs, evaluate the combined loss, step the
//! optimizer.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{CouplingStrategy, GmmSpec, PairSampler, PointCloud, TimeDistribution};
use crate::error::{Error, Result};
use crate::field::{loss_gradients, FieldModel};
use crate::losses::{CombinedObjective, LogRow, LossConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    Adam,
    /// Adam with decoupled weight decay.
    Adamw,
    Sgd,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LrSchedule {
    Constant,
    /// Half-cosine from `lr` down to 0 over the run.
    Cosine,
}

impl LrSchedule {
    pub fn rate(self, base: f64, step: usize, total: usize) -> f64 {
        match self {
            LrSchedule::Constant => base,
            LrSchedule::Cosine => {
                let frac = step as f64 / total.max(1) as f64;
                0.5 * base * (1.0 + (std::f64::consts::PI * frac).cos())
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub optimizer: OptimizerKind,
    pub lr: f64,
    pub lr_schedule: LrSchedule,
    pub betas: (f64, f64),
    pub adam_eps: f64,
    pub weight_decay: f64,
    /// Global gradient norm cap; `None` disables clipping.
    pub grad_clip: Option<f64>,
    pub loss: LossConfig,
    pub coupling: CouplingStrategy,
    pub t_dist: TimeDistribution,
    /// Source distribution of `x0`; standard normal when absent.
    pub source: Option<GmmSpec>,
    pub seed: u64,
    /// Steps between checkpoints; 0 disables them.
    pub checkpoint_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 200,
            batch_size: 512,
            optimizer: OptimizerKind::Adam,
            lr: 1e-3,
            lr_schedule: LrSchedule::Constant,
            betas: (0.9, 0.999),
            adam_eps: 1e-8,
            weight_decay: 0.0,
            grad_clip: Some(10.0),
            loss: LossConfig::default(),
            coupling: CouplingStrategy::MinibatchClosestWithoutReplacement,
            t_dist: TimeDistribution::default(),
            source: None,
            seed: 0,
            checkpoint_every: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return Err(Error::Config("lr must be nonnegative".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        let (b1, b2) = self.betas;
        if !((0.0..1.0).contains(&b1) && (0.0..1.0).contains(&b2)) {
            return Err(Error::Config("betas must lie in [0, 1)".into()));
        }
        if !(self.adam_eps > 0.0) || !(self.weight_decay >= 0.0) {
            return Err(Error::Config("adam_eps must be positive and weight_decay nonnegative".into()));
        }
        if let Some(c) = self.grad_clip {
            if !(c > 0.0) {
                return Err(Error::Config("grad_clip must be positive".into()));
            }
        }
        self.loss.validate()?;
        self.t_dist.validate()?;
        if let Some(s) = &self.source {
            s.validate()?;
        }
        Ok(())
    }

    /// `epochs · max(1, n / batch_size)`.
    pub fn total_steps(&self, n_targets: usize) -> usize {
        self.epochs * (n_targets / self.batch_size).max(1)
    }
}

/// First-order optimizer state.
#[derive(Debug, Clone)]
pub struct Optimizer {
    kind: OptimizerKind,
    lr: f64,
    betas: (f64, f64),
    eps: f64,
    weight_decay: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    steps: i32,
}

impl Optimizer {
    pub fn new(kind: OptimizerKind, lr: f64, betas: (f64, f64), eps: f64, weight_decay: f64, n_params: usize) -> Self {
        Self { kind, lr, betas, eps, weight_decay, m: vec![0.0; n_params], v: vec![0.0; n_params], steps: 0 }
    }

    pub fn from_config(cfg: &TrainConfig, n_params: usize) -> Self {
        Self::new(cfg.optimizer, cfg.lr, cfg.betas, cfg.adam_eps, cfg.weight_decay, n_params)
    }

    pub fn set_lr(&mut self, lr: f64) {
        self.lr = lr;
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        assert_eq!(params.len(), grad.len(), "gradient length");
        let wd = self.weight_decay;
        match self.kind {
            OptimizerKind::Sgd => {
                for (p, g) in params.iter_mut().zip(grad) {
                    *p -= self.lr * (g + wd * *p);
                }
            }
            OptimizerKind::Adam | OptimizerKind::Adamw => {
                self.steps += 1;
                let (b1, b2) = self.betas;
                let c1 = 1.0 - b1.powi(self.steps);
                let c2 = 1.0 - b2.powi(self.steps);
                let coupled = self.kind == OptimizerKind::Adam;
                for i in 0..params.len() {
                    let g = if coupled { grad[i] + wd * params[i] } else { grad[i] };
                    self.m[i] = b1 * self.m[i] + (1.0 - b1) * g;
                    self.v[i] = b2 * self.v[i] + (1.0 - b2) * g * g;
                    let m_hat = self.m[i] / c1;
                    let v_hat = self.v[i] / c2;
                    if !coupled {
                        params[i] -= self.lr * wd * params[i];
                    }
                    params[i] -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
                }
            }
        }
    }
}

/// Rescale `grad` in place so its norm is at most `cap`; returns the norm
/// before clipping.
pub fn clip_grad_norm(grad: &mut [f64], cap: Option<f64>) -> f64 {
    let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
    if let Some(cap) = cap {
        if norm > cap {
            let s = cap / norm;
            grad.iter_mut().for_each(|g| *g *= s);
        }
    }
    norm
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: FieldModel,
    pub log: Vec<LogRow>,
}

pub fn train(model: FieldModel, target: &PointCloud, cfg: &TrainConfig) -> Result<TrainOutcome> {
    train_with_checkpoints(model, target, cfg, |_, _| Ok(()))
}

/// Like [`train`], calling `on_checkpoint(step, model)` every
/// `checkpoint_every` steps and after the last one.
///
/// A non-finite loss or update aborts with [`Error::NonFiniteLoss`] carrying
/// the parameters from before the failing step.
pub fn train_with_checkpoints<F>(mut model: FieldModel, target: &PointCloud, cfg: &TrainConfig, mut on_checkpoint: F) -> Result<TrainOutcome>
where
    F: FnMut(usize, &FieldModel) -> Result<()>,
{
    cfg.validate()?;
    if target.dim() != model.input_dim() {
        return Err(Error::Shape { expected: model.input_dim(), got: target.dim() });
    }
    let mut sampler = PairSampler::new(target, cfg.t_dist, cfg.coupling);
    if let Some(source) = &cfg.source {
        sampler = sampler.with_source(source.clone());
    }
    sampler.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut opt = Optimizer::from_config(cfg, model.param_count());
    let total = cfg.total_steps(target.len());
    let mut log = Vec::with_capacity(total);
    for step in 0..total {
        let batch = sampler.sample(cfg.batch_size, &mut rng)?;
        let objective = CombinedObjective::new(&batch, cfg.loss);
        let (value, mut grad) = match loss_gradients(&model, &objective) {
            Ok(r) => r,
            Err(Error::Numeric { .. }) => return Err(Error::NonFiniteLoss { step, last_good: Box::new(model) }),
            Err(e) => return Err(e),
        };
        let terms = objective.last_terms().expect("evaluated objective");
        let grad_norm = clip_grad_norm(&mut grad, cfg.grad_clip);
        let previous = model.params().to_vec();
        opt.set_lr(cfg.lr_schedule.rate(cfg.lr, step, total));
        opt.step(model.params_mut(), &grad);
        if model.params().iter().any(|p| !p.is_finite()) {
            model.params_mut().copy_from_slice(&previous);
            return Err(Error::NonFiniteLoss { step, last_good: Box::new(model) });
        }
        log.push(LogRow { step, osl: terms.osl, del: terms.del, total: value, grad_norm });
        let done = step + 1;
        if (cfg.checkpoint_every > 0 && done % cfg.checkpoint_every == 0) || done == total {
            on_checkpoint(done, &model)?;
        }
    }
    Ok(TrainOutcome { model, log })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::two_moons;
    use crate::field::{init_field, FieldConfig};

    #[test]
    fn adam_matches_hand_steps() {
        let mut opt = Optimizer::new(OptimizerKind::Adam, 0.1, (0.9, 0.999), 1e-8, 0.0, 3);
        let mut p = [1.0, -2.0, 0.5];
        // first step: m_hat = g, v_hat = g^2, so each moves by lr·sign(g)
        opt.step(&mut p, &[0.2, -0.4, 0.0]);
        let want1 = [1.0 - 0.1 * 0.2 / (0.2 + 1e-8), -2.0 + 0.1 * 0.4 / (0.4 + 1e-8), 0.5];
        for (a, b) in p.iter().zip(&want1) {
            assert!((a - b).abs() < 1e-15, "{a} vs {b}");
        }
        opt.step(&mut p, &[0.1, 0.3, 1.0]);
        let g1 = [0.2, -0.4, 0.0];
        let g2 = [0.1, 0.3, 1.0];
        for i in 0..3 {
            let m = 0.9 * (0.1 * g1[i]) + 0.1 * g2[i];
            let v = 0.999 * (0.001 * g1[i] * g1[i]) + 0.001 * g2[i] * g2[i];
            let m_hat = m / (1.0 - 0.81);
            let v_hat = v / (1.0 - 0.999f64 * 0.999);
            let want = want1[i] - 0.1 * m_hat / (v_hat.sqrt() + 1e-8);
            assert!((p[i] - want).abs() < 1e-14, "param {i}: {} vs {want}", p[i]);
        }
    }

    #[test]
    fn adamw_decays_independently_of_gradient() {
        let mut opt = Optimizer::new(OptimizerKind::Adamw, 0.1, (0.9, 0.999), 1e-8, 0.5, 1);
        let mut p = [2.0];
        opt.step(&mut p, &[0.0]);
        assert!((p[0] - 2.0 * (1.0 - 0.05)).abs() < 1e-15);
    }

    #[test]
    fn clipping_caps_norm() {
        let mut g = vec![3.0, 4.0];
        assert_eq!(clip_grad_norm(&mut g, Some(1.0)), 5.0);
        assert!((g[0] - 0.6).abs() < 1e-15 && (g[1] - 0.8).abs() < 1e-15);
        let mut g = vec![3.0, 4.0];
        clip_grad_norm(&mut g, None);
        assert_eq!(g, vec![3.0, 4.0]);
    }

    fn tiny() -> (FieldModel, PointCloud, TrainConfig) {
        let model = init_field(FieldConfig { hidden_widths: vec![16, 16], ..FieldConfig::mlp(2, 3) }).unwrap();
        let target = two_moons(128, 0.1, 1).unwrap();
        let cfg = TrainConfig { epochs: 5, batch_size: 32, seed: 4, ..TrainConfig::default() };
        (model, target, cfg)
    }

    #[test]
    fn zero_lr_keeps_params() {
        let (model, target, cfg) = tiny();
        let out = train(model.clone(), &target, &TrainConfig { lr: 0.0, ..cfg }).unwrap();
        assert_eq!(out.model.params(), model.params());
        assert_eq!(out.log.len(), 20);
    }

    #[test]
    fn training_is_deterministic() {
        let (model, target, cfg) = tiny();
        let a = train(model.clone(), &target, &cfg).unwrap();
        let b = train(model, &target, &cfg).unwrap();
        assert_eq!(a.model.params(), b.model.params());
        assert_eq!(a.log, b.log);
    }

    #[test]
    fn checkpoints_fire_on_schedule() {
        let (model, target, cfg) = tiny();
        let mut seen = Vec::new();
        train_with_checkpoints(model, &target, &TrainConfig { checkpoint_every: 6, ..cfg }, |s, _| {
            seen.push(s);
            Ok(())
        })
        .unwrap();
        assert_eq!(seen, vec![6, 12, 18, 20]);
    }

    #[test]
    fn blow_up_returns_last_good_model() {
        let (model, target, cfg) = tiny();
        let cfg = TrainConfig { optimizer: OptimizerKind::Sgd, lr: 1e300, grad_clip: None, ..cfg };
        match train(model, &target, &cfg) {
            Err(Error::NonFiniteLoss { last_good, .. }) => {
                assert!(last_good.params().iter().all(|p| p.is_finite()));
            }
            other => panic!("expected a non-finite loss, got {:?}", other.map(|o| o.log.len())),
        }
    }
}
