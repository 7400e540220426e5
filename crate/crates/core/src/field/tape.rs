//! Batched reverse-mode tape over row-major activations.
//!
//! Every node holds a `batch × width` matrix. Parameters are read from a flat
//! slice through [`ParamRef`] views, so the gradient of a scalar objective
//! lands in a flat vector with the same layout as the model parameters.
//!
//! The input-gradient of the scalar head is itself assembled from tape
//! primitives (`MatW`, `Act` with order 1, `RowMul`), so reversing the tape
//! through that branch yields exact mixed second derivatives. The only
//! derivative not expressed as a node is `act^(k+1)`, which is evaluated
//! directly during the reverse sweep.

use ndarray::{Array2, ArrayView2, Axis};

use super::Activation;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct ParamRef {
    pub offset: usize,
    pub rows: usize,
    pub cols: usize,
}

impl ParamRef {
    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    fn view<'a>(&self, params: &'a [f64]) -> ArrayView2<'a, f64> {
        ArrayView2::from_shape((self.rows, self.cols), &params[self.offset..self.offset + self.len()])
            .expect("parameter view shape")
    }
}

#[derive(Debug, Clone, Copy)]
enum Op {
    Input,
    /// `H W^T + b`
    Affine { h: usize, w: ParamRef, b: ParamRef },
    /// `G W`
    MatW { g: usize, w: ParamRef },
    /// elementwise `act^(order)(Z)`
    Act { z: usize, act: Activation, order: u8 },
    Mul { a: usize, b: usize },
    /// `A ⊙ w` with `w` a single broadcast row
    RowMul { a: usize, w: ParamRef },
    Scale { a: usize, c: f64 },
}

pub(crate) struct Tape<'p> {
    params: &'p [f64],
    ops: Vec<Op>,
    values: Vec<Array2<f64>>,
}

impl<'p> Tape<'p> {
    pub fn new(params: &'p [f64]) -> Self {
        Self { params, ops: Vec::new(), values: Vec::new() }
    }

    fn push(&mut self, op: Op, value: Array2<f64>) -> usize {
        self.ops.push(op);
        self.values.push(value);
        self.values.len() - 1
    }

    pub fn value(&self, node: usize) -> &Array2<f64> {
        &self.values[node]
    }

    pub fn input(&mut self, x: Array2<f64>) -> usize {
        self.push(Op::Input, x)
    }

    pub fn affine(&mut self, h: usize, w: ParamRef, b: ParamRef) -> usize {
        let wv = w.view(self.params);
        let bv = b.view(self.params);
        let mut y = self.values[h].dot(&wv.t());
        y += &bv;
        self.push(Op::Affine { h, w, b }, y)
    }

    pub fn mat_w(&mut self, g: usize, w: ParamRef) -> usize {
        let y = self.values[g].dot(&w.view(self.params));
        self.push(Op::MatW { g, w }, y)
    }

    pub fn act(&mut self, z: usize, act: Activation, order: u8) -> usize {
        let y = self.values[z].mapv(|v| act.derivative(order, v));
        self.push(Op::Act { z, act, order }, y)
    }

    pub fn mul(&mut self, a: usize, b: usize) -> usize {
        let y = &self.values[a] * &self.values[b];
        self.push(Op::Mul { a, b }, y)
    }

    pub fn row_mul(&mut self, a: usize, w: ParamRef) -> usize {
        let y = &self.values[a] * &w.view(self.params);
        self.push(Op::RowMul { a, w }, y)
    }

    pub fn scale(&mut self, a: usize, c: f64) -> usize {
        let y = &self.values[a] * c;
        self.push(Op::Scale { a, c }, y)
    }

    /// Reverse sweep from seeded adjoints. Returns the flat parameter gradient.
    pub fn backward(&self, seeds: Vec<(usize, Array2<f64>)>, n_params: usize) -> Vec<f64> {
        let mut adj: Vec<Option<Array2<f64>>> = vec![None; self.values.len()];
        for (node, seed) in seeds {
            accumulate(&mut adj[node], seed);
        }
        let mut grad = vec![0.0; n_params];

        for node in (0..self.ops.len()).rev() {
            let Some(dy) = adj[node].take() else { continue };
            match self.ops[node] {
                Op::Input => {}
                Op::Affine { h, w, b } => {
                    let wv = w.view(self.params);
                    if self.ops[h].needs_adjoint() {
                        accumulate(&mut adj[h], dy.dot(&wv));
                    }
                    add_into(&mut grad, w, &dy.t().dot(&self.values[h]));
                    add_into(&mut grad, b, &dy.sum_axis(Axis(0)).insert_axis(Axis(0)));
                }
                Op::MatW { g, w } => {
                    let wv = w.view(self.params);
                    if self.ops[g].needs_adjoint() {
                        accumulate(&mut adj[g], dy.dot(&wv.t()));
                    }
                    add_into(&mut grad, w, &self.values[g].t().dot(&dy));
                }
                Op::Act { z, act, order } => {
                    if self.ops[z].needs_adjoint() {
                        let zv = &self.values[z];
                        let mut dz = dy;
                        dz.zip_mut_with(zv, |d, &zz| *d *= act.derivative(order + 1, zz));
                        accumulate(&mut adj[z], dz);
                    }
                }
                Op::Mul { a, b } => {
                    if self.ops[a].needs_adjoint() {
                        accumulate(&mut adj[a], &dy * &self.values[b]);
                    }
                    if self.ops[b].needs_adjoint() {
                        accumulate(&mut adj[b], &dy * &self.values[a]);
                    }
                }
                Op::RowMul { a, w } => {
                    let wv = w.view(self.params);
                    if self.ops[a].needs_adjoint() {
                        accumulate(&mut adj[a], &dy * &wv);
                    }
                    let dw = (&dy * &self.values[a]).sum_axis(Axis(0)).insert_axis(Axis(0));
                    add_into(&mut grad, w, &dw);
                }
                Op::Scale { a, c } => {
                    if self.ops[a].needs_adjoint() {
                        accumulate(&mut adj[a], dy * c);
                    }
                }
            }
        }
        grad
    }
}

impl Op {
    fn needs_adjoint(&self) -> bool {
        !matches!(self, Op::Input)
    }
}

fn accumulate(slot: &mut Option<Array2<f64>>, value: Array2<f64>) {
    match slot {
        Some(existing) => *existing += &value,
        None => *slot = Some(value),
    }
}

fn add_into(grad: &mut [f64], p: ParamRef, g: &Array2<f64>) {
    debug_assert_eq!(g.dim(), (p.rows, p.cols));
    let dst = &mut grad[p.offset..p.offset + p.len()];
    for (d, s) in dst.iter_mut().zip(g.iter()) {
        *d += s;
    }
}
