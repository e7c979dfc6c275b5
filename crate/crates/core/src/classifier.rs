//! The 11-class evaluator: a small VGG-style convolutional network (3×3
//! convolutions with ReLU, 2×2 max-pooling, fully connected head) trained
//! with minibatch SGD on softmax cross-entropy.
//!
//! Activations are kept channels-last with one row per spatial position, so
//! each convolution is an im2col copy followed by a single GEMM. The network
//! is generic over `f32`/`f64`; training and inference use `f32`.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt::Debug;
use core::ops::AddAssign;

use ndarray::linalg::general_mat_mul;
use ndarray::{Array1, Array2, ArrayView2, Axis, LinalgScalar, ScalarOperand, Zip};
use num_traits::Float;
use rand_distr::{Distribution, Normal};

use crate::augment::{resize_32, CLASSIFIER_SIDE};
use crate::dataset::{Dataset, EpochBatches, Image};
use crate::rng::Stream;
use crate::{Error, Result, CLASS_COUNT};

const KERNEL: usize = 3;
const INFERENCE_CHUNK: usize = 500;

/// Floating-point types the network can run in.
pub trait Real: Float + LinalgScalar + ScalarOperand + AddAssign + Debug + Send + Sync + 'static {}

impl Real for f32 {}
impl Real for f64 {}

#[inline]
fn real<F: Real>(x: f64) -> F {
    num_traits::cast(x).expect("finite constant")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvBlock {
    pub channels: usize,
    pub convs: usize,
}

/// Layer layout: conv blocks (each ending in a 2×2 max-pool), then dense
/// hidden layers, then the 11-way output.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Architecture {
    pub input_side: usize,
    pub padding: usize,
    pub blocks: Vec<ConvBlock>,
    pub dense: Vec<usize>,
}

impl Architecture {
    /// Two single-convolution blocks (32, 64 channels, unpadded) and a
    /// 128-unit hidden layer.
    pub fn compact() -> Self {
        Self {
            input_side: CLASSIFIER_SIDE,
            padding: 0,
            blocks: vec![
                ConvBlock { channels: 32, convs: 1 },
                ConvBlock { channels: 64, convs: 1 },
            ],
            dense: vec![128],
        }
    }

    /// Four padded VGG blocks and three fully connected layers.
    pub fn vgg() -> Self {
        Self {
            input_side: CLASSIFIER_SIDE,
            padding: 1,
            blocks: vec![
                ConvBlock { channels: 64, convs: 2 },
                ConvBlock { channels: 128, convs: 2 },
                ConvBlock { channels: 256, convs: 3 },
                ConvBlock { channels: 512, convs: 3 },
            ],
            dense: vec![256, 256],
        }
    }

    fn plan(&self) -> Result<Vec<Op>> {
        if self.padding > 1 {
            return Err(Error::arg("padding must be 0 or 1 for 3x3 kernels"));
        }
        let mut ops = Vec::new();
        let (mut side, mut ch) = (self.input_side, 1);
        for block in &self.blocks {
            if block.channels == 0 || block.convs == 0 {
                return Err(Error::arg("conv blocks need channels and at least one convolution"));
            }
            for _ in 0..block.convs {
                let out_side = (side + 2 * self.padding).checked_sub(KERNEL - 1).filter(|&s| s > 0);
                let out_side = out_side.ok_or_else(|| Error::arg("input too small for the conv stack"))?;
                ops.push(Op::Conv(ConvShape {
                    side,
                    c_in: ch,
                    c_out: block.channels,
                    pad: self.padding,
                    out_side,
                }));
                side = out_side;
                ch = block.channels;
            }
            if side < 2 {
                return Err(Error::arg("input too small for the pooling stack"));
            }
            ops.push(Op::Pool(PoolShape { side, c: ch }));
            side /= 2;
        }
        let mut width = side * side * ch;
        for &units in &self.dense {
            if units == 0 {
                return Err(Error::arg("dense layers need at least one unit"));
            }
            ops.push(Op::Dense { in_dim: width, out_dim: units, relu: true });
            width = units;
        }
        ops.push(Op::Dense { in_dim: width, out_dim: CLASS_COUNT, relu: false });
        Ok(ops)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct ConvShape {
    side: usize,
    c_in: usize,
    c_out: usize,
    pad: usize,
    out_side: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct PoolShape {
    side: usize,
    c: usize,
}

impl PoolShape {
    fn out_side(&self) -> usize {
        self.side / 2
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Op {
    Conv(ConvShape),
    Pool(PoolShape),
    Dense { in_dim: usize, out_dim: usize, relu: bool },
}

/// Weights (`fan_in × fan_out`) and bias of one layer.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer<F> {
    pub weights: Array2<F>,
    pub bias: Array1<F>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Classifier<F = f32> {
    arch: Architecture,
    plan: Vec<Op>,
    /// Conv layers then dense layers, in forward order.
    layers: Vec<Layer<F>>,
}

/// Per-layer parameter gradients, same layout as the classifier's layers.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradient<F> {
    pub layers: Vec<Layer<F>>,
}

impl<F: Real> Gradient<F> {
    pub fn flat(&self) -> Vec<F> {
        flatten(&self.layers)
    }
}

fn flatten<F: Real>(layers: &[Layer<F>]) -> Vec<F> {
    layers
        .iter()
        .flat_map(|l| l.weights.iter().chain(l.bias.iter()).copied())
        .collect()
}

/// Activation and gradient buffers reused across batches of the same size.
#[derive(Debug, Clone)]
pub struct Workspace<F> {
    input: Array2<F>,
    /// Output of each op, after ReLU where the op has one.
    acts: Vec<Array2<F>>,
    cols: Vec<Array2<F>>,
    argmax: Vec<Vec<usize>>,
    /// Loss gradient with respect to each op's output.
    deltas: Vec<Array2<F>>,
    dcols: Array2<F>,
}

impl<F: Real> Workspace<F> {
    pub fn new() -> Self {
        Self {
            input: Array2::zeros((0, 0)),
            acts: Vec::new(),
            cols: Vec::new(),
            argmax: Vec::new(),
            deltas: Vec::new(),
            dcols: Array2::zeros((0, 0)),
        }
    }
}

impl<F: Real> Default for Workspace<F> {
    fn default() -> Self {
        Self::new()
    }
}

/// Reshapes `a` when needed; contents are unspecified afterwards.
fn buffer<F: Real>(a: &mut Array2<F>, shape: (usize, usize)) -> &mut Array2<F> {
    if a.dim() != shape {
        *a = Array2::zeros(shape);
    }
    a
}

fn add_bias<F: Real>(out: &mut Array2<F>, bias: &Array1<F>, use_relu: bool) {
    for mut row in out.outer_iter_mut() {
        Zip::from(&mut row).and(bias).for_each(|o, &b| {
            let v = *o + b;
            *o = if use_relu { relu(v) } else { v };
        });
    }
}

impl<F: Real> Classifier<F> {
    /// Kaiming-normal weights (std `√(2/fan_in)`), zero biases.
    pub fn new(arch: Architecture, rng: &mut Stream) -> Result<Self> {
        let plan = arch.plan()?;
        let layers = plan
            .iter()
            .filter_map(|op| layer_dims(op))
            .map(|(fan_in, fan_out)| {
                let normal = Normal::new(0.0f64, (2.0 / fan_in as f64).sqrt()).expect("positive std");
                Layer {
                    weights: Array2::from_shape_simple_fn((fan_in, fan_out), || real(normal.sample(rng))),
                    bias: Array1::zeros(fan_out),
                }
            })
            .collect();
        Ok(Self { arch, plan, layers })
    }

    pub fn zeros(arch: Architecture) -> Result<Self> {
        let plan = arch.plan()?;
        let layers = plan
            .iter()
            .filter_map(|op| layer_dims(op))
            .map(|(i, o)| Layer {
                weights: Array2::zeros((i, o)),
                bias: Array1::zeros(o),
            })
            .collect();
        Ok(Self { arch, plan, layers })
    }

    pub fn architecture(&self) -> &Architecture {
        &self.arch
    }

    pub fn layers(&self) -> &[Layer<F>] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer<F>] {
        &mut self.layers
    }

    pub fn parameter_count(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    /// All parameters, layer by layer (weights row-major, then bias).
    pub fn params_flat(&self) -> Vec<F> {
        flatten(&self.layers)
    }

    pub fn set_params_flat(&mut self, params: &[F]) -> Result<()> {
        if params.len() != self.parameter_count() {
            return Err(Error::dim("parameter count", self.parameter_count(), params.len()));
        }
        let mut it = params.iter().copied();
        for layer in &mut self.layers {
            for w in layer.weights.iter_mut().chain(layer.bias.iter_mut()) {
                *w = it.next().expect("length checked");
            }
        }
        Ok(())
    }

    pub fn input_len(&self) -> usize {
        self.arch.input_side * self.arch.input_side
    }

    /// Class scores for a batch of flattened single-channel images.
    pub fn logits(&self, x: ArrayView2<'_, F>) -> Result<Array2<F>> {
        let mut ws = Workspace::new();
        self.forward(x, &mut ws)?;
        Ok(ws.acts.pop().expect("plan ends in a dense layer"))
    }

    /// Softmax probabilities (rows sum to 1), computed in `f64`.
    pub fn probabilities(&self, x: ArrayView2<'_, F>) -> Result<Array2<f64>> {
        let mut out = Array2::zeros((x.nrows(), CLASS_COUNT));
        let mut ws = Workspace::new();
        for (k, chunk) in x.axis_chunks_iter(Axis(0), INFERENCE_CHUNK).enumerate() {
            self.forward(chunk, &mut ws)?;
            let logits = ws.acts.last().expect("plan ends in a dense layer");
            for (i, row) in logits.outer_iter().enumerate() {
                let p = softmax(row.iter().map(|v| v.to_f64().unwrap_or(f64::NAN)));
                out.row_mut(k * INFERENCE_CHUNK + i).assign(&Array1::from(p.to_vec()));
            }
        }
        Ok(out)
    }

    /// Mean cross-entropy of the batch and its parameter gradient.
    pub fn loss_and_gradient(&self, x: ArrayView2<'_, F>, labels: &[u8]) -> Result<(f64, Gradient<F>)> {
        self.loss_and_gradient_in(&mut Workspace::new(), x, labels)
    }

    /// Same as [`Self::loss_and_gradient`], keeping intermediate buffers in `ws`.
    pub fn loss_and_gradient_in(
        &self,
        ws: &mut Workspace<F>,
        x: ArrayView2<'_, F>,
        labels: &[u8],
    ) -> Result<(f64, Gradient<F>)> {
        let b = x.nrows();
        if labels.len() != b {
            return Err(Error::dim("label count", b, labels.len()));
        }
        check_labels(labels)?;
        self.forward(x, ws)?;
        let n = self.plan.len();
        ws.deltas.resize_with(n, || Array2::zeros((0, 0)));

        let mut loss = 0.0f64;
        let inv_b = 1.0 / b as f64;
        let delta = buffer(&mut ws.deltas[n - 1], (b, CLASS_COUNT));
        for ((row, mut d), &label) in ws.acts[n - 1].outer_iter().zip(delta.outer_iter_mut()).zip(labels) {
            let p = softmax(row.iter().map(|v| v.to_f64().unwrap_or(f64::NAN)));
            loss -= p[usize::from(label)].max(f64::MIN_POSITIVE).ln();
            for (j, dj) in d.iter_mut().enumerate() {
                let target = if j == usize::from(label) { 1.0 } else { 0.0 };
                *dj = real((p[j] - target) * inv_b);
            }
        }
        loss *= inv_b;

        let mut grads: Vec<Option<Layer<F>>> = vec![None; self.layers.len()];
        let mut layer_idx = self.layers.len();
        for op_idx in (0..n).rev() {
            let (lower, upper) = ws.deltas.split_at_mut(op_idx);
            let delta = &mut upper[0];
            let input = if op_idx == 0 { ws.input.view() } else { ws.acts[op_idx - 1].view() };
            match self.plan[op_idx] {
                Op::Dense { in_dim, relu, .. } => {
                    layer_idx -= 1;
                    if relu {
                        relu_backward(delta, &ws.acts[op_idx]);
                    }
                    let layer = &self.layers[layer_idx];
                    let input = input.into_shape_with_order((b, in_dim)).expect("contiguous");
                    grads[layer_idx] = Some(Layer {
                        weights: input.t().dot(delta),
                        bias: delta.sum_axis(Axis(0)),
                    });
                    if op_idx > 0 {
                        let dx = buffer(&mut lower[op_idx - 1], ws.acts[op_idx - 1].dim());
                        let mut dx = dx.view_mut().into_shape_with_order((b, in_dim)).expect("contiguous");
                        general_mat_mul(F::one(), delta, &layer.weights.t(), F::zero(), &mut dx);
                    }
                }
                Op::Pool(_) => {
                    let dx = buffer(&mut lower[op_idx - 1], ws.acts[op_idx - 1].dim());
                    dx.fill(F::zero());
                    let dst = dx.as_slice_mut().expect("standard layout");
                    for (&src_idx, &g) in ws.argmax[op_idx].iter().zip(delta.iter()) {
                        dst[src_idx] = dst[src_idx] + g;
                    }
                }
                Op::Conv(shape) => {
                    layer_idx -= 1;
                    relu_backward(delta, &ws.acts[op_idx]);
                    let layer = &self.layers[layer_idx];
                    let cols = &ws.cols[op_idx];
                    grads[layer_idx] = Some(Layer {
                        weights: cols.t().dot(delta),
                        bias: delta.sum_axis(Axis(0)),
                    });
                    if op_idx > 0 {
                        let dcols = buffer(&mut ws.dcols, cols.dim());
                        general_mat_mul(F::one(), delta, &layer.weights.t(), F::zero(), dcols);
                        let dx = buffer(&mut lower[op_idx - 1], ws.acts[op_idx - 1].dim());
                        col2im(dcols, b, &shape, dx);
                    }
                }
            }
        }
        let layers = grads.into_iter().map(|g| g.expect("every layer visited")).collect();
        Ok((loss, Gradient { layers }))
    }

    /// `θ ← θ − lr·g`.
    pub fn apply_gradient(&mut self, grad: &Gradient<F>, lr: F) {
        for (layer, g) in self.layers.iter_mut().zip(&grad.layers) {
            layer.weights.scaled_add(-lr, &g.weights);
            layer.bias.scaled_add(-lr, &g.bias);
        }
    }

    /// Runs the network on `x`, leaving every op's output in `ws.acts`.
    fn forward(&self, x: ArrayView2<'_, F>, ws: &mut Workspace<F>) -> Result<()> {
        if x.ncols() != self.input_len() {
            return Err(Error::dim("classifier input length", self.input_len(), x.ncols()));
        }
        let b = x.nrows();
        let n = self.plan.len();
        ws.acts.resize_with(n, || Array2::zeros((0, 0)));
        ws.cols.resize_with(n, || Array2::zeros((0, 0)));
        ws.argmax.resize_with(n, Vec::new);
        let input = buffer(&mut ws.input, (b * self.input_len(), 1));
        input.iter_mut().zip(x.iter()).for_each(|(d, &v)| *d = v);

        let mut layer_idx = 0;
        for op_idx in 0..n {
            let (done, rest) = ws.acts.split_at_mut(op_idx);
            let act = if op_idx == 0 { ws.input.view() } else { done[op_idx - 1].view() };
            let out = &mut rest[0];
            match self.plan[op_idx] {
                Op::Conv(shape) => {
                    let layer = &self.layers[layer_idx];
                    layer_idx += 1;
                    let cols = &mut ws.cols[op_idx];
                    im2col(act, b, &shape, cols);
                    let out = buffer(out, (cols.nrows(), shape.c_out));
                    general_mat_mul(F::one(), cols, &layer.weights, F::zero(), out);
                    add_bias(out, &layer.bias, true);
                }
                Op::Pool(shape) => {
                    let out = buffer(out, (b * shape.out_side() * shape.out_side(), shape.c));
                    max_pool(act, b, &shape, out, &mut ws.argmax[op_idx]);
                }
                Op::Dense { in_dim, out_dim, relu: use_relu } => {
                    let layer = &self.layers[layer_idx];
                    layer_idx += 1;
                    let act = act.into_shape_with_order((b, in_dim)).expect("contiguous");
                    let out = buffer(out, (b, out_dim));
                    general_mat_mul(F::one(), &act, &layer.weights, F::zero(), out);
                    add_bias(out, &layer.bias, use_relu);
                }
            }
        }
        Ok(())
    }
}

fn layer_dims(op: &Op) -> Option<(usize, usize)> {
    match *op {
        Op::Conv(s) => Some((KERNEL * KERNEL * s.c_in, s.c_out)),
        Op::Dense { in_dim, out_dim, .. } => Some((in_dim, out_dim)),
        Op::Pool(_) => None,
    }
}

#[inline]
fn relu<F: Real>(x: F) -> F {
    if x > F::zero() {
        x
    } else {
        F::zero()
    }
}

fn relu_backward<F: Real>(delta: &mut Array2<F>, out: &Array2<F>) {
    ndarray::Zip::from(delta).and(out).for_each(|d, &o| {
        if o <= F::zero() {
            *d = F::zero();
        }
    });
}

/// Columns `kx0..kx1` of the kernel that land inside the input row for
/// output column `ox`.
#[inline]
fn valid_taps(ox: usize, pad: usize, side: usize) -> (usize, usize) {
    let kx0 = pad.saturating_sub(ox);
    let kx1 = KERNEL.min(side + pad - ox);
    (kx0, kx1.max(kx0))
}

/// Writes every entry of `cols`, zeros included for padded taps.
fn im2col<F: Real>(act: ArrayView2<'_, F>, b: usize, s: &ConvShape, cols: &mut Array2<F>) {
    let (side, c, pad, os) = (s.side, s.c_in, s.pad, s.out_side);
    let row_len = KERNEL * KERNEL * c;
    let cols = buffer(cols, (b * os * os, row_len));
    let src = act.to_slice().expect("standard layout");
    let dst = cols.as_slice_mut().expect("standard layout");
    for n in 0..b {
        for oy in 0..os {
            for ox in 0..os {
                let r = ((n * os + oy) * os + ox) * row_len;
                let (kx0, kx1) = valid_taps(ox, pad, side);
                for ky in 0..KERNEL {
                    let row = &mut dst[r + ky * KERNEL * c..r + (ky + 1) * KERNEL * c];
                    let iy = (oy + ky).wrapping_sub(pad);
                    if iy >= side || kx0 == kx1 {
                        row.fill(F::zero());
                        continue;
                    }
                    row[..kx0 * c].fill(F::zero());
                    row[kx1 * c..].fill(F::zero());
                    let so = ((n * side + iy) * side + ox + kx0 - pad) * c;
                    row[kx0 * c..kx1 * c].copy_from_slice(&src[so..so + (kx1 - kx0) * c]);
                }
            }
        }
    }
}

fn col2im<F: Real>(dcols: &Array2<F>, b: usize, s: &ConvShape, dx: &mut Array2<F>) {
    let (side, c, pad, os) = (s.side, s.c_in, s.pad, s.out_side);
    let row_len = KERNEL * KERNEL * c;
    let dx = buffer(dx, (b * side * side, c));
    dx.fill(F::zero());
    let src = dcols.as_slice().expect("standard layout");
    let dst = dx.as_slice_mut().expect("standard layout");
    for n in 0..b {
        for oy in 0..os {
            for ox in 0..os {
                let r = ((n * os + oy) * os + ox) * row_len;
                let (kx0, kx1) = valid_taps(ox, pad, side);
                for ky in 0..KERNEL {
                    let iy = (oy + ky).wrapping_sub(pad);
                    if iy >= side {
                        continue;
                    }
                    let d = ((n * side + iy) * side + ox + kx0 - pad) * c;
                    let so = r + (ky * KERNEL + kx0) * c;
                    let len = (kx1 - kx0) * c;
                    for (a, &g) in dst[d..d + len].iter_mut().zip(&src[so..so + len]) {
                        *a = *a + g;
                    }
                }
            }
        }
    }
}

/// 2×2 stride-2 max-pool into `out`, recording per output element the flat
/// index of the winning input element.
fn max_pool<F: Real>(act: ArrayView2<'_, F>, b: usize, s: &PoolShape, out: &mut Array2<F>, argmax: &mut Vec<usize>) {
    let (side, c, os) = (s.side, s.c, s.out_side());
    argmax.resize(b * os * os * c, 0);
    let src = act.to_slice().expect("standard layout");
    let dst = out.as_slice_mut().expect("standard layout");
    for n in 0..b {
        for oy in 0..os {
            for ox in 0..os {
                let o = ((n * os + oy) * os + ox) * c;
                let (best, arg) = (&mut dst[o..o + c], &mut argmax[o..o + c]);
                let first = ((n * side + 2 * oy) * side + 2 * ox) * c;
                best.copy_from_slice(&src[first..first + c]);
                for (k, a) in arg.iter_mut().enumerate() {
                    *a = first + k;
                }
                for (dy, dx) in [(0, 1), (1, 0), (1, 1)] {
                    let base = ((n * side + 2 * oy + dy) * side + 2 * ox + dx) * c;
                    for (k, (m, a)) in best.iter_mut().zip(arg.iter_mut()).enumerate() {
                        let v = src[base + k];
                        if v > *m {
                            *m = v;
                            *a = base + k;
                        }
                    }
                }
            }
        }
    }
}

fn softmax(logits: impl Iterator<Item = f64>) -> [f64; CLASS_COUNT] {
    let mut p = [0.0f64; CLASS_COUNT];
    for (pi, l) in p.iter_mut().zip(logits) {
        *pi = l;
    }
    let max = p.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for pi in p.iter_mut() {
        *pi = (*pi - max).exp();
        sum += *pi;
    }
    for pi in p.iter_mut() {
        *pi /= sum;
    }
    p
}

fn check_labels(labels: &[u8]) -> Result<()> {
    match labels.iter().find(|&&l| usize::from(l) >= CLASS_COUNT) {
        Some(l) => Err(Error::Data(format!("class label {l} outside 0..=10"))),
        None => Ok(()),
    }
}

/// Classification of one image.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Verdict {
    pub class: u8,
    pub softmax: [f64; CLASS_COUNT],
    /// Natural-log entropy of the softmax, in `[0, ln 11]`.
    pub entropy: f64,
}

impl Verdict {
    pub fn from_probabilities(p: [f64; CLASS_COUNT]) -> Self {
        // Lowest index wins ties.
        let class = p
            .iter()
            .enumerate()
            .fold((0, p[0]), |best, (i, &v)| if v > best.1 { (i, v) } else { best })
            .0 as u8;
        Self {
            class,
            softmax: p,
            entropy: entropy(&p),
        }
    }
}

/// `−Σ pᵢ ln pᵢ`, with `0 ln 0 = 0`.
pub fn entropy(p: &[f64]) -> f64 {
    -p.iter().filter(|&&x| x > 0.0).map(|&x| x * x.ln()).sum::<f64>()
}

/// Flattens images into classifier input rows, resizing 28×28 inputs to 32×32.
pub fn input_matrix<F: Real>(images: &[&Image], side: usize) -> Result<Array2<F>> {
    let mut x = Array2::<F>::zeros((images.len(), side * side));
    for (mut row, img) in x.outer_iter_mut().zip(images) {
        let resized;
        let img = if img.width() == side && img.height() == side {
            *img
        } else if side == CLASSIFIER_SIDE {
            resized = resize_32(img)?;
            &resized
        } else {
            return Err(Error::dim("classifier input side", side, img.width()));
        };
        for (r, &p) in row.iter_mut().zip(img.pixels()) {
            *r = real(f64::from(p));
        }
    }
    Ok(x)
}

pub fn classify(c: &Classifier<f32>, img: &Image) -> Result<Verdict> {
    Ok(classify_batch(c, &[img])?.remove(0))
}

pub fn classify_batch(c: &Classifier<f32>, images: &[&Image]) -> Result<Vec<Verdict>> {
    for img in images {
        let ok = (img.width(), img.height()) == (28, 28)
            || (img.width(), img.height()) == (c.arch.input_side, c.arch.input_side);
        if !ok {
            return Err(Error::arg(format!(
                "classifier takes 28x28 or {0}x{0} images, got {1}x{2}",
                c.arch.input_side,
                img.width(),
                img.height()
            )));
        }
    }
    let x = input_matrix::<f32>(images, c.arch.input_side)?;
    let p = c.probabilities(x.view())?;
    Ok(p.outer_iter()
        .map(|row| {
            let mut a = [0.0; CLASS_COUNT];
            a.iter_mut().zip(row.iter()).for_each(|(d, &s)| *d = s);
            Verdict::from_probabilities(a)
        })
        .collect())
}

/// Classifies 28×28 visible vectors (one per row) such as generated samples.
pub fn classify_rows(c: &Classifier<f32>, rows: ArrayView2<'_, f32>, side: usize) -> Result<Vec<Verdict>> {
    if rows.ncols() != side * side {
        return Err(Error::dim("row length", side * side, rows.ncols()));
    }
    let mut out = Vec::with_capacity(rows.nrows());
    let mut images = Vec::with_capacity(INFERENCE_CHUNK);
    for chunk in rows.axis_chunks_iter(Axis(0), INFERENCE_CHUNK) {
        images.clear();
        for r in chunk.outer_iter() {
            let px: Vec<f32> = r.iter().map(|&v| v.clamp(0.0, 1.0)).collect();
            images.push(Image::new(side, side, px, None)?);
        }
        let refs: Vec<&Image> = images.iter().collect();
        out.extend(classify_batch(c, &refs)?);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierConfig {
    pub architecture: Architecture,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f32,
    /// Heavy-ball momentum; 0 gives plain SGD.
    pub momentum: f32,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        Self {
            architecture: Architecture::compact(),
            epochs: 20,
            batch_size: 64,
            learning_rate: 0.01,
            momentum: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    pub validation_accuracy: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainLog {
    pub epochs: Vec<EpochLog>,
    /// 1-based epoch of the kept model; 0 when no epoch ran.
    pub best_epoch: usize,
}

/// Fraction of labelled images whose predicted class matches the label.
pub fn accuracy(c: &Classifier<f32>, data: &[&Image]) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::arg("accuracy of an empty set"));
    }
    let mut correct = 0usize;
    for chunk in data.chunks(INFERENCE_CHUNK) {
        let verdicts = classify_batch(c, chunk)?;
        for (v, img) in verdicts.iter().zip(chunk) {
            let label = img.label().ok_or_else(|| Error::Data("unlabelled image".into()))?;
            correct += usize::from(v.class == label);
        }
    }
    Ok(correct as f64 / data.len() as f64)
}

/// SGD on shuffled minibatches; keeps the parameters of the epoch with the
/// highest validation accuracy (earliest on ties).
pub fn train_classifier(
    train: &Dataset,
    validation: &Dataset,
    cfg: &ClassifierConfig,
    rng: &mut Stream,
) -> Result<(Classifier<f32>, TrainLog)> {
    train_classifier_with(train, validation, cfg, rng, |_| {})
}

pub fn train_classifier_with(
    train: &Dataset,
    validation: &Dataset,
    cfg: &ClassifierConfig,
    rng: &mut Stream,
    mut on_epoch: impl FnMut(&EpochLog),
) -> Result<(Classifier<f32>, TrainLog)> {
    let labels = train.labels()?;
    check_labels(&labels)?;
    if validation.is_empty() {
        return Err(Error::arg("validation set is empty"));
    }
    validation.labels()?;
    if !(cfg.learning_rate > 0.0) || cfg.batch_size == 0 {
        return Err(Error::arg("learning rate and batch size must be positive"));
    }
    let mut model = Classifier::<f32>::new(cfg.architecture.clone(), rng)?;
    let mut log = TrainLog::default();
    if cfg.epochs == 0 {
        return Ok((model, log));
    }
    let side = cfg.architecture.input_side;
    let val_refs: Vec<&Image> = validation.images().iter().collect();
    let mut ws = Workspace::new();
    let mut velocity: Option<Vec<Layer<f32>>> = None;
    let mut best: Option<(f64, Vec<Layer<f32>>)> = None;
    for epoch in 1..=cfg.epochs {
        let plan = EpochBatches::new(train.len(), cfg.batch_size.min(train.len()), rng)?;
        let mut loss_sum = 0.0;
        for idx in plan.iter() {
            let imgs: Vec<&Image> = idx.iter().map(|&i| &train.images()[i]).collect();
            let x = input_matrix::<f32>(&imgs, side)?;
            let y: Vec<u8> = idx.iter().map(|&i| labels[i]).collect();
            let (loss, grad) = model.loss_and_gradient_in(&mut ws, x.view(), &y)?;
            loss_sum += loss * idx.len() as f64;
            if cfg.momentum > 0.0 {
                let v = velocity.get_or_insert_with(|| grad.layers.iter().map(|g| Layer {
                    weights: Array2::zeros(g.weights.raw_dim()),
                    bias: Array1::zeros(g.bias.raw_dim()),
                }).collect());
                for (vl, gl) in v.iter_mut().zip(&grad.layers) {
                    vl.weights.mapv_inplace(|a| a * cfg.momentum);
                    vl.weights += &gl.weights;
                    vl.bias.mapv_inplace(|a| a * cfg.momentum);
                    vl.bias += &gl.bias;
                }
                let step = Gradient { layers: v.clone() };
                model.apply_gradient(&step, cfg.learning_rate);
            } else {
                model.apply_gradient(&grad, cfg.learning_rate);
            }
        }
        let train_loss = loss_sum / train.len() as f64;
        if !train_loss.is_finite() {
            return Err(Error::Numerical(format!("classifier loss diverged in epoch {epoch}")));
        }
        let validation_accuracy = accuracy(&model, &val_refs)?;
        let entry = EpochLog {
            epoch,
            train_loss,
            validation_accuracy,
        };
        on_epoch(&entry);
        log.epochs.push(entry);
        if best.as_ref().is_none_or(|(acc, _)| validation_accuracy > *acc) {
            best = Some((validation_accuracy, model.layers.clone()));
            log.best_epoch = epoch;
        }
    }
    if let Some((_, layers)) = best {
        model.layers = layers;
    }
    Ok((model, log))
}
