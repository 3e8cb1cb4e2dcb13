//! Dense multi-layer perceptrons with exact reverse-mode gradients.
//!
//! Everything is `f64`. Weights are stored row-major with shape
//! `(out_dim, in_dim)`; batched inputs are matrices with one sample per row.
//! Batched products go through `matrixmultiply`, everything else is plain
//! loops.

use std::io::{Read, Write};
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Row-major dense matrix.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::shape("Matrix::from_vec", rows * cols, data.len()));
        }
        Ok(Self { rows, cols, data })
    }

    /// Stacks equally sized rows into a matrix.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            let r = r.as_ref();
            if r.len() != cols {
                return Err(Error::shape("Matrix::from_rows", cols, r.len()));
            }
            data.extend_from_slice(r);
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            data,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// `self · rhs`.
    pub fn matmul(&self, rhs: &Matrix) -> Result<Matrix> {
        if self.cols != rhs.rows {
            return Err(Error::shape("Matrix::matmul", self.cols, rhs.rows));
        }
        let mut out = Matrix::zeros(self.rows, rhs.cols);
        gemm(
            GemmOperand::new(&self.data, self.cols, 1),
            GemmOperand::new(&rhs.data, rhs.cols, 1),
            &mut out,
            self.rows,
            self.cols,
            false,
        );
        Ok(out)
    }
}

#[derive(Clone, Copy)]
struct GemmOperand<'a> {
    data: &'a [f64],
    row_stride: usize,
    col_stride: usize,
}

impl<'a> GemmOperand<'a> {
    fn new(data: &'a [f64], row_stride: usize, col_stride: usize) -> Self {
        Self {
            data,
            row_stride,
            col_stride,
        }
    }
}

/// `out (m×n) (+)= a (m×k) · b (k×n)` with arbitrary operand strides.
fn gemm(a: GemmOperand<'_>, b: GemmOperand<'_>, out: &mut Matrix, m: usize, k: usize, accumulate: bool) {
    let n = out.cols;
    debug_assert_eq!(out.rows, m);
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        if !accumulate {
            out.data.iter_mut().for_each(|v| *v = 0.0);
        }
        return;
    }
    debug_assert!(a.data.len() >= (m - 1) * a.row_stride + (k - 1) * a.col_stride + 1);
    debug_assert!(b.data.len() >= (k - 1) * b.row_stride + (n - 1) * b.col_stride + 1);
    let beta = if accumulate { 1.0 } else { 0.0 };
    // SAFETY: operand extents are checked above against the strides and
    // dimensions passed to the kernel; `out` is exclusively borrowed.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.data.as_ptr(),
            a.row_stride as isize,
            a.col_stride as isize,
            b.data.as_ptr(),
            b.row_stride as isize,
            b.col_stride as isize,
            beta,
            out.data.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Tanh,
    Identity,
}

impl Activation {
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::Tanh => x.tanh(),
            Activation::Identity => x,
        }
    }

    /// Derivative expressed through the pre-activation and the output.
    fn derivative(self, pre: f64, post: f64) -> f64 {
        match self {
            Activation::Relu => {
                if pre > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - post * post,
            Activation::Identity => 1.0,
        }
    }

    fn code(self) -> u8 {
        match self {
            Activation::Relu => 0,
            Activation::Tanh => 1,
            Activation::Identity => 2,
        }
    }

    fn from_code(code: u8) -> Result<Self> {
        match code {
            0 => Ok(Activation::Relu),
            1 => Ok(Activation::Tanh),
            2 => Ok(Activation::Identity),
            other => Err(Error::Checkpoint(format!("unknown activation code {other}"))),
        }
    }
}

/// One affine layer followed by an activation.
#[derive(Clone, Debug, PartialEq)]
pub struct Layer {
    /// `(out_dim, in_dim)`.
    pub weight: Matrix,
    pub bias: Vec<f64>,
    pub activation: Activation,
}

impl Layer {
    pub fn new(weight: Matrix, bias: Vec<f64>, activation: Activation) -> Result<Self> {
        if bias.len() != weight.rows() {
            return Err(Error::shape("Layer::new bias", weight.rows(), bias.len()));
        }
        Ok(Self {
            weight,
            bias,
            activation,
        })
    }

    pub fn in_dim(&self) -> usize {
        self.weight.cols()
    }

    pub fn out_dim(&self) -> usize {
        self.weight.rows()
    }
}

/// Feed-forward network parameters. The last layer is always linear.
#[derive(Clone, Debug, PartialEq)]
pub struct Mlp {
    layers: Vec<Layer>,
}

/// Intermediate values kept by [`Mlp::forward_trace`] for backprop.
#[derive(Clone, Debug)]
pub struct Trace {
    /// Input to each layer, `layers.len() + 1` entries (the last is the output).
    activations: Vec<Matrix>,
    /// Pre-activation of each layer.
    pre: Vec<Matrix>,
}

impl Trace {
    pub fn output(&self) -> &Matrix {
        self.activations.last().expect("trace always holds the input")
    }
}

/// Parameter gradients with the same layout as an [`Mlp`].
#[derive(Clone, Debug, PartialEq)]
pub struct ParamGrads {
    pub weights: Vec<Matrix>,
    pub biases: Vec<Vec<f64>>,
}

impl ParamGrads {
    pub fn zeros_like(mlp: &Mlp) -> Self {
        Self {
            weights: mlp
                .layers
                .iter()
                .map(|l| Matrix::zeros(l.out_dim(), l.in_dim()))
                .collect(),
            biases: mlp.layers.iter().map(|l| vec![0.0; l.out_dim()]).collect(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.weights.iter().all(Matrix::is_finite)
            && self.biases.iter().flatten().all(|v| v.is_finite())
    }

    /// Flattened in the same order as [`Mlp::flat_params`].
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for (w, b) in self.weights.iter().zip(&self.biases) {
            out.extend_from_slice(w.as_slice());
            out.extend_from_slice(b);
        }
        out
    }

    pub fn scale(&mut self, factor: f64) {
        for w in &mut self.weights {
            w.as_mut_slice().iter_mut().for_each(|v| *v *= factor);
        }
        for b in &mut self.biases {
            b.iter_mut().for_each(|v| *v *= factor);
        }
    }

    fn same_layout(&self, mlp: &Mlp) -> Result<()> {
        if self.weights.len() != mlp.layers.len() || self.biases.len() != mlp.layers.len() {
            return Err(Error::shape("gradient layers", mlp.layers.len(), self.weights.len()));
        }
        for ((w, b), l) in self.weights.iter().zip(&self.biases).zip(&mlp.layers) {
            if w.rows() != l.out_dim() || w.cols() != l.in_dim() {
                return Err(Error::shape(
                    "gradient weight",
                    l.out_dim() * l.in_dim(),
                    w.rows() * w.cols(),
                ));
            }
            if b.len() != l.out_dim() {
                return Err(Error::shape("gradient bias", l.out_dim(), b.len()));
            }
        }
        Ok(())
    }
}

impl Mlp {
    /// Builds a network with layer widths `dims` (input first), `hidden`
    /// activation between layers and a linear output. Weights are drawn
    /// uniformly in ±sqrt(6 / (fan_in + fan_out)); biases start at zero.
    pub fn new<R: Rng + ?Sized>(dims: &[usize], hidden: Activation, rng: &mut R) -> Result<Self> {
        if dims.len() < 2 {
            return Err(Error::Config("an MLP needs at least input and output widths".into()));
        }
        if dims.iter().any(|&d| d == 0) {
            return Err(Error::Config("layer widths must be positive".into()));
        }
        let n = dims.len() - 1;
        let mut layers = Vec::with_capacity(n);
        for (i, pair) in dims.windows(2).enumerate() {
            let (fan_in, fan_out) = (pair[0], pair[1]);
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let data = (0..fan_in * fan_out)
                .map(|_| rng.random_range(-limit..=limit))
                .collect();
            let activation = if i + 1 == n {
                Activation::Identity
            } else {
                hidden
            };
            layers.push(Layer {
                weight: Matrix::from_vec(fan_out, fan_in, data)?,
                bias: vec![0.0; fan_out],
                activation,
            });
        }
        Ok(Self { layers })
    }

    /// Validates that layer dimensions chain and the last layer is linear.
    pub fn from_layers(layers: Vec<Layer>) -> Result<Self> {
        let last = layers
            .last()
            .ok_or_else(|| Error::Config("an MLP needs at least one layer".into()))?;
        if last.activation != Activation::Identity {
            return Err(Error::Config("final layer activation must be identity".into()));
        }
        for pair in layers.windows(2) {
            if pair[0].out_dim() != pair[1].in_dim() {
                return Err(Error::shape("layer chain", pair[0].out_dim(), pair[1].in_dim()));
            }
        }
        for l in &layers {
            if l.bias.len() != l.out_dim() {
                return Err(Error::shape("layer bias", l.out_dim(), l.bias.len()));
            }
        }
        Ok(Self { layers })
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    /// Mutable access for tests and initialization tweaks; shapes must not change.
    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].in_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].out_dim()
    }

    pub fn parameter_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.out_dim() * l.in_dim() + l.out_dim())
            .sum()
    }

    /// All parameters, layer by layer, weights (row-major) then bias.
    pub fn flat_params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.parameter_count());
        for l in &self.layers {
            out.extend_from_slice(l.weight.as_slice());
            out.extend_from_slice(&l.bias);
        }
        out
    }

    /// Sets one parameter by its index in [`Mlp::flat_params`].
    pub fn set_flat_param(&mut self, mut index: usize, value: f64) {
        for l in &mut self.layers {
            let nw = l.weight.as_slice().len();
            if index < nw {
                l.weight.as_mut_slice()[index] = value;
                return;
            }
            index -= nw;
            if index < l.bias.len() {
                l.bias[index] = value;
                return;
            }
            index -= l.bias.len();
        }
        panic!("parameter index out of range");
    }

    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>> {
        if input.len() != self.input_dim() {
            return Err(Error::shape("Mlp::forward input", self.input_dim(), input.len()));
        }
        let mut x = input.to_vec();
        for l in &self.layers {
            let mut y = l.bias.clone();
            for (o, yo) in y.iter_mut().enumerate() {
                let row = l.weight.row(o);
                *yo += row.iter().zip(&x).map(|(w, xi)| w * xi).sum::<f64>();
                *yo = l.activation.apply(*yo);
            }
            x = y;
        }
        Ok(x)
    }

    /// Row-wise forward pass over a batch.
    pub fn forward_batch(&self, inputs: &Matrix) -> Result<Matrix> {
        if inputs.cols() != self.input_dim() {
            return Err(Error::shape("Mlp::forward_batch input", self.input_dim(), inputs.cols()));
        }
        let mut x = inputs.clone();
        for l in &self.layers {
            let mut y = affine(l, &x);
            for v in y.as_mut_slice() {
                *v = l.activation.apply(*v);
            }
            x = y;
        }
        Ok(x)
    }

    /// Batched forward pass keeping what [`Mlp::backward_batch`] needs.
    pub fn forward_trace(&self, inputs: &Matrix) -> Result<Trace> {
        if inputs.cols() != self.input_dim() {
            return Err(Error::shape("Mlp::forward_trace input", self.input_dim(), inputs.cols()));
        }
        let mut activations = Vec::with_capacity(self.layers.len() + 1);
        let mut pre = Vec::with_capacity(self.layers.len());
        activations.push(inputs.clone());
        for l in &self.layers {
            let z = affine(l, activations.last().expect("non-empty"));
            let mut a = z.clone();
            for v in a.as_mut_slice() {
                *v = l.activation.apply(*v);
            }
            pre.push(z);
            activations.push(a);
        }
        Ok(Trace { activations, pre })
    }

    /// Reverse-mode gradients of `Σ_rows output · upstream` with respect to
    /// the parameters (summed over the batch) and to each input row.
    pub fn backward_batch(&self, trace: &Trace, upstream: &Matrix) -> Result<(ParamGrads, Matrix)> {
        let out = trace.output();
        if upstream.rows() != out.rows() {
            return Err(Error::shape("Mlp::backward_batch rows", out.rows(), upstream.rows()));
        }
        if upstream.cols() != self.output_dim() {
            return Err(Error::shape("Mlp::backward_batch upstream", self.output_dim(), upstream.cols()));
        }
        let batch = upstream.rows();
        let mut grads = ParamGrads::zeros_like(self);
        let mut delta = upstream.clone();
        for (li, l) in self.layers.iter().enumerate().rev() {
            let pre = &trace.pre[li];
            let post = &trace.activations[li + 1];
            for ((d, &z), &a) in delta
                .as_mut_slice()
                .iter_mut()
                .zip(pre.as_slice())
                .zip(post.as_slice())
            {
                *d *= l.activation.derivative(z, a);
            }
            let input = &trace.activations[li];
            let (out_dim, in_dim) = (l.out_dim(), l.in_dim());
            // dW = deltaᵀ · input
            gemm(
                GemmOperand::new(delta.as_slice(), 1, out_dim),
                GemmOperand::new(input.as_slice(), in_dim, 1),
                &mut grads.weights[li],
                out_dim,
                batch,
                false,
            );
            for r in 0..batch {
                for (gb, d) in grads.biases[li].iter_mut().zip(delta.row(r)) {
                    *gb += d;
                }
            }
            // d input = delta · W
            let mut next = Matrix::zeros(batch, in_dim);
            gemm(
                GemmOperand::new(delta.as_slice(), out_dim, 1),
                GemmOperand::new(l.weight.as_slice(), in_dim, 1),
                &mut next,
                batch,
                out_dim,
                false,
            );
            delta = next;
        }
        Ok((grads, delta))
    }

    /// Single-sample backward pass: gradients of `output · upstream`.
    pub fn backward(&self, input: &[f64], upstream: &[f64]) -> Result<(ParamGrads, Vec<f64>)> {
        if input.len() != self.input_dim() {
            return Err(Error::shape("Mlp::backward input", self.input_dim(), input.len()));
        }
        if upstream.len() != self.output_dim() {
            return Err(Error::shape("Mlp::backward upstream", self.output_dim(), upstream.len()));
        }
        let trace = self.forward_trace(&Matrix::from_vec(1, input.len(), input.to_vec())?)?;
        let up = Matrix::from_vec(1, upstream.len(), upstream.to_vec())?;
        let (grads, input_grad) = self.backward_batch(&trace, &up)?;
        Ok((grads, input_grad.as_slice().to_vec()))
    }

    /// `self ← τ·online + (1−τ)·self`, entrywise.
    pub fn polyak_toward(&mut self, online: &Mlp, tau: f64) -> Result<()> {
        if self.parameter_count() != online.parameter_count() || self.layers.len() != online.layers.len() {
            return Err(Error::shape("polyak", online.parameter_count(), self.parameter_count()));
        }
        for (t, o) in self.layers.iter_mut().zip(&online.layers) {
            if t.weight.rows() != o.weight.rows() || t.weight.cols() != o.weight.cols() {
                return Err(Error::shape("polyak layer", o.weight.rows(), t.weight.rows()));
            }
            for (tv, ov) in t.weight.as_mut_slice().iter_mut().zip(o.weight.as_slice()) {
                *tv = tau * ov + (1.0 - tau) * *tv;
            }
            for (tv, ov) in t.bias.iter_mut().zip(&o.bias) {
                *tv = tau * ov + (1.0 - tau) * *tv;
            }
        }
        Ok(())
    }

    const CHECKPOINT_VERSION: u8 = 1;

    /// Binary checkpoint: version byte, layer count, `(in, out, activation)`
    /// per layer, then every layer's weights (row-major) and bias as
    /// little-endian `f64`.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = vec![Self::CHECKPOINT_VERSION];
        out.extend_from_slice(&(self.layers.len() as u32).to_le_bytes());
        for l in &self.layers {
            out.extend_from_slice(&(l.in_dim() as u32).to_le_bytes());
            out.extend_from_slice(&(l.out_dim() as u32).to_le_bytes());
            out.push(l.activation.code());
        }
        for v in self.flat_params() {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut cur = bytes;
        let mut byte = [0u8; 1];
        let mut word = [0u8; 4];
        let mut real = [0u8; 8];
        let truncated = |_| Error::Checkpoint("truncated checkpoint".into());
        cur.read_exact(&mut byte).map_err(truncated)?;
        if byte[0] != Self::CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!("unsupported version {}", byte[0])));
        }
        cur.read_exact(&mut word).map_err(truncated)?;
        let n = u32::from_le_bytes(word) as usize;
        let mut shapes = Vec::with_capacity(n);
        for _ in 0..n {
            cur.read_exact(&mut word).map_err(truncated)?;
            let in_dim = u32::from_le_bytes(word) as usize;
            cur.read_exact(&mut word).map_err(truncated)?;
            let out_dim = u32::from_le_bytes(word) as usize;
            cur.read_exact(&mut byte).map_err(truncated)?;
            shapes.push((in_dim, out_dim, Activation::from_code(byte[0])?));
        }
        let mut layers = Vec::with_capacity(n);
        for (in_dim, out_dim, activation) in shapes {
            let mut take = |count: usize| -> Result<Vec<f64>> {
                (0..count)
                    .map(|_| {
                        cur.read_exact(&mut real).map_err(truncated)?;
                        Ok(f64::from_le_bytes(real))
                    })
                    .collect()
            };
            let weight = Matrix::from_vec(out_dim, in_dim, take(out_dim * in_dim)?)?;
            let bias = take(out_dim)?;
            layers.push(Layer::new(weight, bias, activation)?);
        }
        if !cur.is_empty() {
            return Err(Error::Checkpoint(format!("{} trailing bytes", cur.len())));
        }
        Self::from_layers(layers)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut f = std::fs::File::create(path)?;
        f.write_all(&self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}

fn affine(l: &Layer, x: &Matrix) -> Matrix {
    let mut y = Matrix::zeros(x.rows(), l.out_dim());
    for r in 0..x.rows() {
        y.row_mut(r).copy_from_slice(&l.bias);
    }
    // y += x · Wᵀ
    gemm(
        GemmOperand::new(x.as_slice(), l.in_dim(), 1),
        GemmOperand::new(l.weight.as_slice(), 1, l.in_dim()),
        &mut y,
        x.rows(),
        l.in_dim(),
        true,
    );
    y
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    Sgd,
    Adam,
}

/// Optimizer hyperparameters and moment accumulators for one network.
#[derive(Clone, Debug)]
pub struct OptimizerState {
    pub kind: OptimizerKind,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    step: u64,
    first: ParamGrads,
    second: ParamGrads,
}

impl OptimizerState {
    pub fn new(kind: OptimizerKind, learning_rate: f64, params: &Mlp) -> Self {
        Self {
            kind,
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            step: 0,
            first: ParamGrads::zeros_like(params),
            second: ParamGrads::zeros_like(params),
        }
    }

    pub fn sgd(learning_rate: f64, params: &Mlp) -> Self {
        Self::new(OptimizerKind::Sgd, learning_rate, params)
    }

    pub fn adam(learning_rate: f64, params: &Mlp) -> Self {
        Self::new(OptimizerKind::Adam, learning_rate, params)
    }

    pub fn steps(&self) -> u64 {
        self.step
    }
}

/// One descent step. Non-finite gradients abort the step and leave the
/// parameters and moments untouched.
pub fn apply_gradients(params: &mut Mlp, grads: &ParamGrads, state: &mut OptimizerState) -> Result<()> {
    grads.same_layout(params)?;
    state.first.same_layout(params)?;
    if !grads.is_finite() {
        return Err(Error::Numeric("non-finite gradient entries".into()));
    }
    let lr = state.learning_rate;
    match state.kind {
        OptimizerKind::Sgd => {
            for (l, (gw, gb)) in params.layers.iter_mut().zip(grads.weights.iter().zip(&grads.biases)) {
                for (p, g) in l.weight.as_mut_slice().iter_mut().zip(gw.as_slice()) {
                    *p -= lr * g;
                }
                for (p, g) in l.bias.iter_mut().zip(gb) {
                    *p -= lr * g;
                }
            }
            state.step += 1;
        }
        OptimizerKind::Adam => {
            state.step += 1;
            let (b1, b2, eps) = (state.beta1, state.beta2, state.epsilon);
            let c1 = 1.0 - b1.powi(state.step as i32);
            let c2 = 1.0 - b2.powi(state.step as i32);
            let update = |p: &mut f64, g: f64, m: &mut f64, v: &mut f64| {
                *m = b1 * *m + (1.0 - b1) * g;
                *v = b2 * *v + (1.0 - b2) * g * g;
                *p -= lr * (*m / c1) / ((*v / c2).sqrt() + eps);
            };
            for (li, l) in params.layers.iter_mut().enumerate() {
                let gw = grads.weights[li].as_slice();
                let mw = state.first.weights[li].as_mut_slice();
                let vw = state.second.weights[li].as_mut_slice();
                for (i, p) in l.weight.as_mut_slice().iter_mut().enumerate() {
                    update(p, gw[i], &mut mw[i], &mut vw[i]);
                }
                let gb = &grads.biases[li];
                let mb = &mut state.first.biases[li];
                let vb = &mut state.second.biases[li];
                for (i, p) in l.bias.iter_mut().enumerate() {
                    update(p, gb[i], &mut mb[i], &mut vb[i]);
                }
            }
        }
    }
    Ok(())
}
