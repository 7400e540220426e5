//! Neural distance-like field `u(x)` with a direction field `v(x)`.
//!
//! Two modes are supported:
//!
//! * [`FieldMode::Gradient`]: a single scalar MLP; `v` is its exact
//!   input-gradient, built on the tape so that objectives involving `v`
//!   differentiate through it exactly.
//! * [`FieldMode::Direct`]: the scalar MLP plus an independent direction MLP
//!   of identical hidden widths whose output is multiplied by
//!   `output_scale`.

mod analytic;
mod checkpoint;
mod tape;

use ndarray::{Array2, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_finite, Error, Result};
use tape::{ParamRef, Tape};

pub use analytic::RadialField;
pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CHECKPOINT_FORMAT_VERSION};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Swish,
    Selu,
    Tanh,
}

const SELU_LAMBDA: f64 = 1.050_700_987_355_480_5;
const SELU_ALPHA: f64 = 1.673_263_242_354_377_3;

impl Activation {
    /// `order`-th derivative at `z`, for `order` in `0..=2`.
    #[inline]
    pub fn derivative(self, order: u8, z: f64) -> f64 {
        match self {
            Activation::Swish => {
                let s = 1.0 / (1.0 + (-z).exp());
                match order {
                    0 => z * s,
                    1 => s + z * s * (1.0 - s),
                    _ => s * (1.0 - s) * (2.0 + z * (1.0 - 2.0 * s)),
                }
            }
            Activation::Selu => {
                if z > 0.0 {
                    match order {
                        0 => SELU_LAMBDA * z,
                        1 => SELU_LAMBDA,
                        _ => 0.0,
                    }
                } else {
                    let e = SELU_LAMBDA * SELU_ALPHA * z.exp();
                    match order {
                        0 => e - SELU_LAMBDA * SELU_ALPHA,
                        _ => e,
                    }
                }
            }
            Activation::Tanh => {
                let t = z.tanh();
                match order {
                    0 => t,
                    1 => 1.0 - t * t,
                    _ => -2.0 * t * (1.0 - t * t),
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FieldMode {
    Gradient,
    Direct,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldConfig {
    pub input_dim: usize,
    pub hidden_widths: Vec<usize>,
    pub activation: Activation,
    pub mode: FieldMode,
    pub seed: u64,
    /// Multiplies the direction head (direct mode only).
    pub output_scale: f64,
}

impl FieldConfig {
    /// Three hidden layers of width 128 with swish, gradient mode.
    pub fn mlp(input_dim: usize, seed: u64) -> Self {
        Self {
            input_dim,
            hidden_widths: vec![128, 128, 128],
            activation: Activation::Swish,
            mode: FieldMode::Gradient,
            seed,
            output_scale: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 {
            return Err(Error::Config("input_dim must be at least 1".into()));
        }
        if self.hidden_widths.is_empty() {
            return Err(Error::Config("hidden_widths must be nonempty".into()));
        }
        if self.hidden_widths.iter().any(|&w| w == 0) {
            return Err(Error::Config("hidden widths must be positive".into()));
        }
        if !(self.output_scale > 0.0 && self.output_scale.is_finite()) {
            return Err(Error::Config("output_scale must be positive".into()));
        }
        Ok(())
    }
}

/// Parameter layout of one MLP inside the flat vector.
#[derive(Debug, Clone)]
struct Mlp {
    hidden: Vec<(ParamRef, ParamRef)>,
    out: (ParamRef, ParamRef),
}

impl Mlp {
    fn layout(input_dim: usize, widths: &[usize], out_dim: usize, offset: &mut usize) -> Self {
        let mut take = |rows: usize, cols: usize| {
            let r = ParamRef { offset: *offset, rows, cols };
            *offset += rows * cols;
            r
        };
        let mut fan_in = input_dim;
        let mut hidden = Vec::with_capacity(widths.len());
        for &w in widths {
            let wr = take(w, fan_in);
            let br = take(1, w);
            hidden.push((wr, br));
            fan_in = w;
        }
        let wr = take(out_dim, fan_in);
        let br = take(1, out_dim);
        Self { hidden, out: (wr, br) }
    }

    fn param_count(&self) -> usize {
        self.hidden.iter().chain(std::iter::once(&self.out)).map(|(w, b)| w.len() + b.len()).sum()
    }

    fn layers(&self) -> impl Iterator<Item = &(ParamRef, ParamRef)> {
        self.hidden.iter().chain(std::iter::once(&self.out))
    }
}

/// Field parameters plus their layout. Immutable after construction except
/// through [`FieldModel::params_mut`], which the trainer uses.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldModel {
    config: FieldConfig,
    params: Vec<f64>,
    scalar_net: Mlp,
    direction_net: Option<Mlp>,
}

impl PartialEq for Mlp {
    fn eq(&self, other: &Self) -> bool {
        self.hidden == other.hidden && self.out == other.out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FieldOutput {
    pub u: f64,
    pub v: Vec<f64>,
}

/// Per-pair objective consumed by [`loss_gradients`]: given the field's
/// outputs on a batch, return the loss and its adjoints with respect to `u`
/// (length `n`) and `v` (`n × dim`).
pub trait Objective {
    fn inputs(&self) -> ArrayView2<'_, f64>;
    fn value_and_adjoints(&self, u: &[f64], v: ArrayView2<f64>) -> Result<(f64, Vec<f64>, Array2<f64>)>;
}

/// Anything samplers can march through: a scalar `u` and a direction `v`.
pub trait Field: Sync {
    fn dim(&self) -> usize;

    /// Evaluate `n` points given as a flat row-major `n × dim` slice.
    fn eval_flat(&self, xs: &[f64]) -> Result<(Vec<f64>, Vec<f64>)>;

    /// Whether `v` is the exact gradient of `u`.
    fn is_conservative(&self) -> bool;
}

pub fn init_field(config: FieldConfig) -> Result<FieldModel> {
    config.validate()?;
    let (scalar_net, direction_net, n) = layout(&config);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut params = vec![0.0; n];
    // He-style uniform weights, zero biases.
    for net in std::iter::once(&scalar_net).chain(direction_net.as_ref()) {
        for (w, _b) in net.layers() {
            let limit = (6.0 / w.cols as f64).sqrt();
            for p in &mut params[w.offset..w.offset + w.len()] {
                *p = rng.random_range(-limit..limit);
            }
        }
    }
    Ok(FieldModel { config, params, scalar_net, direction_net })
}

fn layout(config: &FieldConfig) -> (Mlp, Option<Mlp>, usize) {
    let mut offset = 0;
    let scalar = Mlp::layout(config.input_dim, &config.hidden_widths, 1, &mut offset);
    let direction = match config.mode {
        FieldMode::Gradient => None,
        FieldMode::Direct => Some(Mlp::layout(
            config.input_dim,
            &config.hidden_widths,
            config.input_dim,
            &mut offset,
        )),
    };
    (scalar, direction, offset)
}

impl FieldModel {
    /// Rebuild a model from a config and a flat parameter vector.
    pub fn from_params(config: FieldConfig, params: Vec<f64>) -> Result<Self> {
        config.validate()?;
        let (scalar_net, direction_net, n) = layout(&config);
        if params.len() != n {
            return Err(Error::Shape { expected: n, got: params.len() });
        }
        check_finite(&params, || "field parameters".into())?;
        Ok(Self { config, params, scalar_net, direction_net })
    }

    pub fn config(&self) -> &FieldConfig {
        &self.config
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    pub fn scalar_param_count(&self) -> usize {
        self.scalar_net.param_count()
    }

    pub fn input_dim(&self) -> usize {
        self.config.input_dim
    }

    /// Record the forward computation for a batch. Returns `(tape, u, v)`.
    fn record<'a>(&'a self, x: Array2<f64>) -> (Tape<'a>, usize, usize) {
        let act = self.config.activation;
        let n = x.nrows();
        let mut tape = Tape::new(&self.params);
        let input = tape.input(x);

        let mut h = input;
        let mut pre = Vec::with_capacity(self.scalar_net.hidden.len());
        for &(w, b) in &self.scalar_net.hidden {
            let z = tape.affine(h, w, b);
            pre.push(z);
            h = tape.act(z, act, 0);
        }
        let (wo, bo) = self.scalar_net.out;
        let u = tape.affine(h, wo, bo);

        let v = match &self.direction_net {
            None => {
                // v = W1^T diag(a'(z1)) ... WL^T diag(a'(zL)) w_out, row by row.
                let last = *pre.last().expect("at least one hidden layer");
                let d_last = tape.act(last, act, 1);
                let mut g = tape.row_mul(d_last, wo);
                for l in (1..pre.len()).rev() {
                    let back = tape.mat_w(g, self.scalar_net.hidden[l].0);
                    let d = tape.act(pre[l - 1], act, 1);
                    g = tape.mul(back, d);
                }
                tape.mat_w(g, self.scalar_net.hidden[0].0)
            }
            Some(net) => {
                let mut h = input;
                for &(w, b) in &net.hidden {
                    let z = tape.affine(h, w, b);
                    h = tape.act(z, act, 0);
                }
                let (w, b) = net.out;
                let raw = tape.affine(h, w, b);
                tape.scale(raw, self.config.output_scale)
            }
        };
        debug_assert_eq!(tape.value(u).nrows(), n);
        (tape, u, v)
    }

    fn check_input(&self, x: ArrayView2<f64>) -> Result<()> {
        if x.ncols() != self.config.input_dim {
            return Err(Error::Shape { expected: self.config.input_dim, got: x.ncols() });
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("non-finite input to field".into()));
        }
        Ok(())
    }

    /// Evaluate a batch of points (`n × dim`). Returns `u` and `v` (`n × dim`).
    pub fn eval_batch(&self, x: ArrayView2<f64>) -> Result<(Vec<f64>, Array2<f64>)> {
        self.check_input(x)?;
        let (tape, u, v) = self.record(x.to_owned());
        Ok((tape.value(u).column(0).to_vec(), tape.value(v).clone()))
    }

    pub fn eval(&self, x: &[f64]) -> Result<FieldOutput> {
        let view = ArrayView2::from_shape((1, x.len()), x).expect("row view");
        if x.len() != self.config.input_dim {
            return Err(Error::Shape { expected: self.config.input_dim, got: x.len() });
        }
        let (u, v) = self.eval_batch(view)?;
        Ok(FieldOutput { u: u[0], v: v.row(0).to_vec() })
    }

    /// `x - u(x) v(x)`.
    pub fn denoise(&self, x: &[f64]) -> Result<Vec<f64>> {
        let out = self.eval(x)?;
        Ok(x.iter().zip(&out.v).map(|(xi, vi)| xi - out.u * vi).collect())
    }
}

impl Field for FieldModel {
    fn dim(&self) -> usize {
        self.config.input_dim
    }

    fn eval_flat(&self, xs: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        let d = self.config.input_dim;
        if xs.len() % d != 0 {
            return Err(Error::Shape { expected: d, got: xs.len() % d });
        }
        let view = ArrayView2::from_shape((xs.len() / d, d), xs).expect("flat view");
        let (u, v) = self.eval_batch(view)?;
        Ok((u, v.into_raw_vec_and_offset().0))
    }

    fn is_conservative(&self) -> bool {
        self.config.mode == FieldMode::Gradient
    }
}

/// Exact gradient of a batch objective with respect to the parameters.
///
/// In gradient mode the objective sees `v = ∇u`, so this differentiates
/// through the input-gradient (mixed second derivatives) by reversing the
/// tape that built `v`.
pub fn loss_gradients(model: &FieldModel, objective: &dyn Objective) -> Result<(f64, Vec<f64>)> {
    let x = objective.inputs();
    model.check_input(x)?;
    let (tape, u_node, v_node) = model.record(x.to_owned());
    let u = tape.value(u_node).column(0).to_vec();
    check_finite(&u, || "field output u".into())?;
    check_finite(tape.value(v_node).as_slice().unwrap_or(&[]), || "field output v".into())?;

    let (value, du, dv) = objective.value_and_adjoints(&u, tape.value(v_node).view())?;
    if !value.is_finite() {
        return Err(Error::Numeric { context: "loss value".into() });
    }
    check_finite(&du, || "loss adjoint d/du".into())?;

    let du = Array2::from_shape_vec((du.len(), 1), du).expect("column");
    let grad = tape.backward(vec![(u_node, du), (v_node, dv)], model.param_count());
    check_finite(&grad, || "parameter gradient".into())?;
    Ok((value, grad))
}

/// `|g - g_fd| / |g_fd|` over the parameter coordinates `coords`, with
/// central differences of step `h`.
pub fn param_gradient_error(model: &FieldModel, objective: &dyn Objective, coords: &[usize], h: f64) -> Result<f64> {
    let (_, grad) = loss_gradients(model, objective)?;
    let mut num = 0.0;
    let mut den = 0.0;
    for &k in coords {
        if k >= grad.len() {
            return Err(Error::Argument(format!("parameter index {k} out of range")));
        }
        let mut plus = model.clone();
        plus.params_mut()[k] += h;
        let mut minus = model.clone();
        minus.params_mut()[k] -= h;
        let fd = (loss_gradients(&plus, objective)?.0 - loss_gradients(&minus, objective)?.0) / (2.0 * h);
        num += (grad[k] - fd).powi(2);
        den += fd * fd;
    }
    Ok((num / den).sqrt())
}

/// `|v - ∇_fd u| / |∇_fd u|` at `x`, with central differences of step `h`.
pub fn input_gradient_error(model: &FieldModel, x: &[f64], h: f64) -> Result<f64> {
    let v = model.eval(x)?.v;
    let mut fd = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        let mut xp = x.to_vec();
        xp[i] += h;
        let mut xm = x.to_vec();
        xm[i] -= h;
        fd.push((model.eval(&xp)?.u - model.eval(&xm)?.u) / (2.0 * h));
    }
    let diff: Vec<f64> = v.iter().zip(&fd).map(|(a, b)| a - b).collect();
    Ok(crate::vecops::norm(&diff) / crate::vecops::norm(&fd))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::{Distribution, StandardNormal};

    fn small(mode: FieldMode, act: Activation, seed: u64) -> FieldModel {
        init_field(FieldConfig {
            input_dim: 3,
            hidden_widths: vec![7, 5],
            activation: act,
            mode,
            seed,
            output_scale: 0.7,
        })
        .unwrap()
    }

    #[test]
    fn same_seed_same_params() {
        let a = init_field(FieldConfig::mlp(2, 9)).unwrap();
        let b = init_field(FieldConfig::mlp(2, 9)).unwrap();
        assert_eq!(a.params(), b.params());
        let c = init_field(FieldConfig::mlp(2, 10)).unwrap();
        assert_ne!(a.params(), c.params());
    }

    #[test]
    fn param_count_by_layer_arithmetic() {
        let scalar = 2 * 128 + 128 + 2 * (128 * 128 + 128) + (128 + 1);
        let m = init_field(FieldConfig::mlp(2, 0)).unwrap();
        assert_eq!(m.param_count(), scalar);

        let mut cfg = FieldConfig::mlp(2, 0);
        cfg.mode = FieldMode::Direct;
        let m = init_field(cfg).unwrap();
        let direction = 2 * 128 + 128 + 2 * (128 * 128 + 128) + (128 * 2 + 2);
        assert_eq!(m.param_count(), scalar + direction);
        assert_eq!(m.scalar_param_count(), scalar);
    }

    #[test]
    fn invalid_configs_rejected() {
        let mut cfg = FieldConfig::mlp(2, 0);
        cfg.hidden_widths.clear();
        assert!(matches!(init_field(cfg), Err(Error::Config(_))));
        let cfg = FieldConfig::mlp(0, 0);
        assert!(matches!(init_field(cfg), Err(Error::Config(_))));
        let mut cfg = FieldConfig::mlp(2, 0);
        cfg.output_scale = 0.0;
        assert!(matches!(init_field(cfg), Err(Error::Config(_))));
    }

    #[test]
    fn eval_rejects_bad_inputs() {
        let m = small(FieldMode::Gradient, Activation::Swish, 1);
        assert!(matches!(m.eval(&[1.0, 2.0]), Err(Error::Shape { .. })));
        assert!(matches!(m.eval(&[1.0, f64::NAN, 0.0]), Err(Error::Domain(_))));
    }

    fn fd_gradient(m: &FieldModel, x: &[f64], h: f64) -> Vec<f64> {
        (0..x.len())
            .map(|i| {
                let mut xp = x.to_vec();
                let mut xm = x.to_vec();
                xp[i] += h;
                xm[i] -= h;
                (m.eval(&xp).unwrap().u - m.eval(&xm).unwrap().u) / (2.0 * h)
            })
            .collect()
    }

    #[test]
    fn gradient_mode_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for act in [Activation::Swish, Activation::Tanh, Activation::Selu] {
            for seed in 0..10 {
                let m = small(FieldMode::Gradient, act, seed);
                let x: Vec<f64> = (0..3).map(|_| StandardNormal.sample(&mut rng)).collect();
                let v = m.eval(&x).unwrap().v;
                let fd = fd_gradient(&m, &x, 1e-5);
                let err = crate::vecops::norm(&crate::vecops::sub(&v, &fd)) / crate::vecops::norm(&fd);
                assert!(err < 1e-5, "{act:?} seed {seed}: rel err {err}");
            }
        }
    }

    #[test]
    fn direct_mode_heads_are_separate() {
        let m = small(FieldMode::Direct, Activation::Swish, 3);
        let x = [0.3, -0.2, 1.1];
        let before = m.eval(&x).unwrap();
        let mut params = m.params().to_vec();
        for p in &mut params[m.scalar_param_count()..] {
            *p += 0.1;
        }
        let m2 = FieldModel::from_params(m.config().clone(), params).unwrap();
        let after = m2.eval(&x).unwrap();
        assert_eq!(before.u, after.u);
        assert_ne!(before.v, after.v);
    }

    #[test]
    fn batch_matches_single_calls() {
        let m = small(FieldMode::Gradient, Activation::Swish, 4);
        let xs = Array2::from_shape_fn((6, 3), |(i, j)| (i as f64 * 0.37 - j as f64 * 0.5).sin());
        let (u, v) = m.eval_batch(xs.view()).unwrap();
        for i in 0..6 {
            let single = m.eval(xs.row(i).as_slice().unwrap()).unwrap();
            assert!((single.u - u[i]).abs() < 1e-13);
            for j in 0..3 {
                assert!((single.v[j] - v[[i, j]]).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn activation_derivatives_match_finite_differences() {
        for act in [Activation::Swish, Activation::Tanh, Activation::Selu] {
            for &z in &[-2.3, -0.4, 0.7, 1.9] {
                for order in 0..2u8 {
                    let h = 1e-6;
                    let fd = (act.derivative(order, z + h) - act.derivative(order, z - h)) / (2.0 * h);
                    assert!((fd - act.derivative(order + 1, z)).abs() < 1e-6, "{act:?} {order} {z}");
                }
            }
        }
    }
}
