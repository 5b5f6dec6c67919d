//! Reverse-mode differentiation over dense `f64` tensors.
//!
//! Every operation on a [`Var`] records its parents only when at least one of
//! them requires a gradient, so forward passes over constants keep no history
//! and free intermediates eagerly. [`backward`] walks the recorded graph in
//! reverse creation order.

pub mod fastmath;
pub mod kernels;
mod tensor;

use std::collections::{HashMap, HashSet};
use std::rc::Rc;
use std::sync::atomic::{AtomicUsize, Ordering};

use crate::dsp::stft::{ComplexSpectrogram, StftPlan};
pub use kernels::{Conv1dSpec, Conv2dSpec, PadMode};
pub use tensor::Tensor;

static NEXT_ID: AtomicUsize = AtomicUsize::new(0);

#[derive(Clone)]
pub struct Var(Rc<Node>);

struct Node {
    id: usize,
    value: Tensor,
    requires_grad: bool,
    op: Op,
}

enum Op {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    AddScalar(Var),
    Tanh(Var),
    Sigmoid(Var),
    LeakyRelu(Var, f64),
    Abs(Var),
    Square(Var),
    Log(Var),
    Sum(Var),
    Mean(Var),
    MeanPerExample(Var),
    Narrow { x: Var, axis: usize, start: usize },
    Reshape(Var),
    TransposeLast2(Var),
    MatMulConst { x: Var, m: Rc<Tensor> },
    Conv1d { x: Var, w: Var, b: Option<Var>, spec: Conv1dSpec },
    Conv2d { x: Var, w: Var, b: Option<Var>, spec: Conv2dSpec },
    AvgPool1d { x: Var, kernel: usize, stride: usize, pad: usize },
    BatchNorm { x: Var, inv_std: Vec<f64> },
    ChannelAffine { x: Var, gamma: Var, beta: Var },
    StftMag { x: Var, plan: Rc<StftPlan>, spectra: Vec<ComplexSpectrogram> },
}

impl Op {
    fn parents(&self) -> Vec<&Var> {
        use Op::*;
        match self {
            Leaf => vec![],
            Add(a, b) | Sub(a, b) | Mul(a, b) => vec![a, b],
            Scale(a, _) | AddScalar(a) | Tanh(a) | Sigmoid(a) | LeakyRelu(a, _) | Abs(a) | Square(a)
            | Log(a) | Sum(a) | Mean(a) | MeanPerExample(a) | Reshape(a) | TransposeLast2(a) => vec![a],
            Narrow { x, .. } | MatMulConst { x, .. } | AvgPool1d { x, .. } | BatchNorm { x, .. }
            | StftMag { x, .. } => vec![x],
            Conv1d { x, w, b, .. } | Conv2d { x, w, b, .. } => {
                let mut v = vec![x, w];
                v.extend(b.as_ref());
                v
            }
            ChannelAffine { x, gamma, beta } => vec![x, gamma, beta],
        }
    }
}

impl std::fmt::Debug for Var {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Var")
            .field("id", &self.0.id)
            .field("shape", &self.shape())
            .field("requires_grad", &self.0.requires_grad)
            .finish()
    }
}

impl Var {
    fn make(value: Tensor, requires_grad: bool, op: Op) -> Var {
        Var(Rc::new(Node {
            id: NEXT_ID.fetch_add(1, Ordering::Relaxed),
            value,
            requires_grad,
            op,
        }))
    }

    /// A value that gradients are not tracked for.
    pub fn constant(value: Tensor) -> Var {
        Self::make(value, false, Op::Leaf)
    }

    /// A leaf whose gradient [`backward`] reports.
    pub fn param(value: Tensor) -> Var {
        Self::make(value, true, Op::Leaf)
    }

    fn from_op(value: Tensor, op: Op) -> Var {
        let rg = op.parents().iter().any(|p| p.0.requires_grad);
        Self::make(value, rg, if rg { op } else { Op::Leaf })
    }

    pub fn id(&self) -> usize {
        self.0.id
    }

    pub fn value(&self) -> &Tensor {
        &self.0.value
    }

    pub fn shape(&self) -> &[usize] {
        self.0.value.shape()
    }

    pub fn requires_grad(&self) -> bool {
        self.0.requires_grad
    }

    pub fn item(&self) -> f64 {
        self.0.value.item()
    }

    /// Same value, cut from the graph.
    pub fn detach(&self) -> Var {
        Var::constant(self.0.value.clone())
    }

    pub fn add(&self, o: &Var) -> Var {
        Var::from_op(self.value().zip_map(o.value(), |a, b| a + b), Op::Add(self.clone(), o.clone()))
    }

    pub fn sub(&self, o: &Var) -> Var {
        Var::from_op(self.value().zip_map(o.value(), |a, b| a - b), Op::Sub(self.clone(), o.clone()))
    }

    pub fn mul(&self, o: &Var) -> Var {
        Var::from_op(self.value().zip_map(o.value(), |a, b| a * b), Op::Mul(self.clone(), o.clone()))
    }

    pub fn scale(&self, s: f64) -> Var {
        Var::from_op(self.value().map(|v| v * s), Op::Scale(self.clone(), s))
    }

    pub fn add_scalar(&self, s: f64) -> Var {
        Var::from_op(self.value().map(|v| v + s), Op::AddScalar(self.clone()))
    }

    pub fn tanh(&self) -> Var {
        Var::from_op(self.value().map(fastmath::tanh), Op::Tanh(self.clone()))
    }

    pub fn sigmoid(&self) -> Var {
        Var::from_op(self.value().map(sigmoid), Op::Sigmoid(self.clone()))
    }

    pub fn leaky_relu(&self, slope: f64) -> Var {
        Var::from_op(
            self.value().map(|v| if v > 0.0 { v } else { slope * v }),
            Op::LeakyRelu(self.clone(), slope),
        )
    }

    pub fn relu(&self) -> Var {
        self.leaky_relu(0.0)
    }

    pub fn abs(&self) -> Var {
        Var::from_op(self.value().map(f64::abs), Op::Abs(self.clone()))
    }

    pub fn square(&self) -> Var {
        Var::from_op(self.value().map(|v| v * v), Op::Square(self.clone()))
    }

    pub fn ln(&self) -> Var {
        Var::from_op(self.value().map(f64::ln), Op::Log(self.clone()))
    }

    pub fn sum(&self) -> Var {
        Var::from_op(Tensor::scalar(self.value().sum()), Op::Sum(self.clone()))
    }

    pub fn mean(&self) -> Var {
        let n = self.value().numel() as f64;
        Var::from_op(Tensor::scalar(self.value().sum() / n), Op::Mean(self.clone()))
    }

    /// Mean over every axis but the first: `[B, ...] -> [B]`.
    pub fn mean_per_example(&self) -> Var {
        let b = self.shape()[0];
        let inner = self.value().numel() / b;
        let d = self.value().data();
        let means = (0..b).map(|i| d[i * inner..(i + 1) * inner].iter().sum::<f64>() / inner as f64).collect();
        Var::from_op(Tensor::new(vec![b], means), Op::MeanPerExample(self.clone()))
    }

    /// `len` entries of `axis` starting at `start`.
    pub fn narrow(&self, axis: usize, start: usize, len: usize) -> Var {
        let shape = self.shape();
        assert!(start + len <= shape[axis], "narrow out of range");
        let outer: usize = shape[..axis].iter().product();
        let inner: usize = shape[axis + 1..].iter().product();
        let full = shape[axis];
        let d = self.value().data();
        let mut out = Vec::with_capacity(outer * len * inner);
        for o in 0..outer {
            let base = (o * full + start) * inner;
            out.extend_from_slice(&d[base..base + len * inner]);
        }
        let mut new_shape = shape.to_vec();
        new_shape[axis] = len;
        Var::from_op(Tensor::new(new_shape, out), Op::Narrow { x: self.clone(), axis, start })
    }

    pub fn reshape(&self, shape: &[usize]) -> Var {
        Var::from_op(self.value().clone().reshaped(shape), Op::Reshape(self.clone()))
    }

    pub fn transpose_last2(&self) -> Var {
        Var::from_op(transpose_last2(self.value()), Op::TransposeLast2(self.clone()))
    }

    /// `x[..., K] · m[K, N]` for a constant matrix `m`.
    pub fn matmul_const(&self, m: Rc<Tensor>) -> Var {
        let out = matmul_last(self.value(), &m, false);
        Var::from_op(out, Op::MatMulConst { x: self.clone(), m })
    }

    pub fn conv1d(&self, w: &Var, b: Option<&Var>, spec: Conv1dSpec) -> Var {
        let out = kernels::conv1d_forward(self.value(), w.value(), b.map(|b| b.value()), &spec);
        Var::from_op(out, Op::Conv1d { x: self.clone(), w: w.clone(), b: b.cloned(), spec })
    }

    pub fn conv2d(&self, w: &Var, b: Option<&Var>, spec: Conv2dSpec) -> Var {
        let out = kernels::conv2d_forward(self.value(), w.value(), b.map(|b| b.value()), &spec);
        Var::from_op(out, Op::Conv2d { x: self.clone(), w: w.clone(), b: b.cloned(), spec })
    }

    /// Average pooling over the last axis with reflection padding.
    pub fn avg_pool1d(&self, kernel: usize, stride: usize, pad: usize) -> Var {
        let shape = self.shape();
        let len = *shape.last().unwrap();
        let y = kernels::avg_pool1d(self.value().data(), len, kernel, stride, pad);
        let lout = (len + 2 * pad - kernel) / stride + 1;
        let mut new_shape = shape.to_vec();
        *new_shape.last_mut().unwrap() = lout;
        Var::from_op(Tensor::new(new_shape, y), Op::AvgPool1d { x: self.clone(), kernel, stride, pad })
    }

    /// Standardize each channel (axis 1) with batch statistics.
    pub fn batch_norm(&self, eps: f64) -> Var {
        let (xhat, inv_std) = kernels::batch_norm_forward(self.value(), eps);
        Var::from_op(xhat, Op::BatchNorm { x: self.clone(), inv_std })
    }

    /// `x * gamma[c] + beta[c]` along axis 1.
    pub fn channel_affine(&self, gamma: &Var, beta: &Var) -> Var {
        let (b, c) = (self.shape()[0], self.shape()[1]);
        assert_eq!(gamma.shape(), &[c]);
        assert_eq!(beta.shape(), &[c]);
        let inner = self.value().numel() / (b * c);
        let mut out = self.value().clone();
        let (g, be) = (gamma.value().data(), beta.value().data());
        for (i, chunk) in out.data_mut().chunks_mut(inner).enumerate() {
            let ch = i % c;
            chunk.iter_mut().for_each(|v| *v = *v * g[ch] + be[ch]);
        }
        Var::from_op(out, Op::ChannelAffine { x: self.clone(), gamma: gamma.clone(), beta: beta.clone() })
    }

    /// STFT magnitudes of each row: `[..., L] -> [..., frames, bins]`.
    pub fn stft_magnitude(&self, plan: Rc<StftPlan>) -> Var {
        let shape = self.shape();
        let len = *shape.last().unwrap();
        let rows = self.value().numel() / len;
        let cfg = *plan.config();
        let (frames, bins) = (cfg.frame_count(len), cfg.n_bins());
        let mut out = Vec::with_capacity(rows * frames * bins);
        let mut spectra = Vec::with_capacity(rows);
        for r in 0..rows {
            let s = plan.analyze(&self.value().data()[r * len..(r + 1) * len]);
            out.extend(s.data.iter().map(|c| c.norm()));
            spectra.push(s);
        }
        let mut new_shape = shape[..shape.len() - 1].to_vec();
        new_shape.extend([frames, bins]);
        let value = Tensor::new(new_shape, out);
        if !self.requires_grad() {
            return Var::constant(value);
        }
        Var::from_op(value, Op::StftMag { x: self.clone(), plan, spectra })
    }
}

pub fn sigmoid(v: f64) -> f64 {
    fastmath::sigmoid(v)
}

fn transpose_last2(t: &Tensor) -> Tensor {
    let s = t.shape();
    let n = s.len();
    let (r, c) = (s[n - 2], s[n - 1]);
    let outer = t.numel() / (r * c);
    let mut out = vec![0.0; t.numel()];
    let d = t.data();
    for o in 0..outer {
        for i in 0..r {
            for j in 0..c {
                out[o * r * c + j * r + i] = d[o * r * c + i * c + j];
            }
        }
    }
    let mut shape = s.to_vec();
    shape.swap(n - 2, n - 1);
    Tensor::new(shape, out)
}

/// `x[..., K] · m[K, N]`, or `x[..., N] · m^T` when `transposed`.
fn matmul_last(x: &Tensor, m: &Tensor, transposed: bool) -> Tensor {
    let (k, n) = if transposed { (m.dim(1), m.dim(0)) } else { (m.dim(0), m.dim(1)) };
    let xs = x.shape();
    assert_eq!(*xs.last().unwrap(), k, "matmul inner dimension mismatch");
    let rows = x.numel() / k;
    let mut out = vec![0.0; rows * n];
    let md = m.data();
    let xd = x.data();
    for r in 0..rows {
        let xr = &xd[r * k..(r + 1) * k];
        let or = &mut out[r * n..(r + 1) * n];
        for (i, &xv) in xr.iter().enumerate() {
            if xv == 0.0 {
                continue;
            }
            if transposed {
                for (j, o) in or.iter_mut().enumerate() {
                    *o += xv * md[j * k + i];
                }
            } else {
                for (o, &mv) in or.iter_mut().zip(&md[i * n..(i + 1) * n]) {
                    *o += xv * mv;
                }
            }
        }
    }
    let mut shape = xs.to_vec();
    *shape.last_mut().unwrap() = n;
    Tensor::new(shape, out)
}

/// Gradients of every tracked leaf reachable from the differentiated output.
#[derive(Default)]
pub struct Gradients {
    grads: HashMap<usize, Tensor>,
}

impl Gradients {
    pub fn get(&self, v: &Var) -> Option<&Tensor> {
        self.grads.get(&v.id())
    }
}

/// Differentiate a scalar output.
pub fn backward(out: &Var) -> Gradients {
    assert_eq!(out.value().numel(), 1, "backward needs a scalar output");
    backward_with(out, Tensor::full(out.shape(), 1.0))
}

/// Vector-Jacobian product seeded with `seed`.
pub fn backward_with(out: &Var, seed: Tensor) -> Gradients {
    assert_eq!(seed.shape(), out.shape());
    let mut grads: HashMap<usize, Tensor> = HashMap::new();
    if !out.requires_grad() {
        return Gradients { grads };
    }
    // Collect the tracked subgraph.
    let mut nodes: Vec<Var> = Vec::new();
    let mut seen = HashSet::new();
    let mut stack = vec![out.clone()];
    while let Some(v) = stack.pop() {
        if !v.requires_grad() || !seen.insert(v.id()) {
            continue;
        }
        for p in v.0.op.parents() {
            stack.push(p.clone());
        }
        nodes.push(v);
    }
    // Children always have larger ids than their parents.
    nodes.sort_by_key(|v| std::cmp::Reverse(v.id()));
    grads.insert(out.id(), seed);
    let mut leaves = HashMap::new();
    for v in &nodes {
        let Some(g) = grads.remove(&v.id()) else { continue };
        if matches!(v.0.op, Op::Leaf) {
            leaves.insert(v.id(), g);
            continue;
        }
        for (parent, pg) in local_grads(v, &g) {
            if !parent.requires_grad() {
                continue;
            }
            match grads.get_mut(&parent.id()) {
                Some(acc) => acc.add_assign(&pg),
                None => {
                    grads.insert(parent.id(), pg);
                }
            }
        }
    }
    Gradients { grads: leaves }
}

fn local_grads(v: &Var, g: &Tensor) -> Vec<(Var, Tensor)> {
    use Op::*;
    let y = v.value();
    match &v.0.op {
        Leaf => vec![],
        Add(a, b) => vec![(a.clone(), g.clone()), (b.clone(), g.clone())],
        Sub(a, b) => vec![(a.clone(), g.clone()), (b.clone(), g.map(|x| -x))],
        Mul(a, b) => {
            let mut out = Vec::new();
            if a.requires_grad() {
                out.push((a.clone(), g.zip_map(b.value(), |g, bv| g * bv)));
            }
            if b.requires_grad() {
                out.push((b.clone(), g.zip_map(a.value(), |g, av| g * av)));
            }
            out
        }
        Scale(a, s) => vec![(a.clone(), g.map(|x| x * s))],
        AddScalar(a) => vec![(a.clone(), g.clone())],
        Tanh(a) => vec![(a.clone(), g.zip_map(y, |g, t| g * (1.0 - t * t)))],
        Sigmoid(a) => vec![(a.clone(), g.zip_map(y, |g, s| g * s * (1.0 - s)))],
        LeakyRelu(a, slope) => {
            vec![(a.clone(), g.zip_map(a.value(), |g, x| if x > 0.0 { g } else { g * slope }))]
        }
        Abs(a) => vec![(a.clone(), g.zip_map(a.value(), |g, x| g * sign(x)))],
        Square(a) => vec![(a.clone(), g.zip_map(a.value(), |g, x| 2.0 * g * x))],
        Log(a) => vec![(a.clone(), g.zip_map(a.value(), |g, x| g / x))],
        Sum(a) => vec![(a.clone(), Tensor::full(a.shape(), g.item()))],
        Mean(a) => {
            let n = a.value().numel() as f64;
            vec![(a.clone(), Tensor::full(a.shape(), g.item() / n))]
        }
        MeanPerExample(a) => {
            let b = a.shape()[0];
            let inner = a.value().numel() / b;
            let data = (0..b).flat_map(|i| std::iter::repeat(g.data()[i] / inner as f64).take(inner)).collect();
            vec![(a.clone(), Tensor::new(a.shape().to_vec(), data))]
        }
        Narrow { x, axis, start } => {
            let shape = x.shape();
            let outer: usize = shape[..*axis].iter().product();
            let inner: usize = shape[axis + 1..].iter().product();
            let (full, len) = (shape[*axis], y.shape()[*axis]);
            let mut gx = Tensor::zeros(shape);
            let gd = gx.data_mut();
            for o in 0..outer {
                let dst = (o * full + start) * inner;
                let src = o * len * inner;
                gd[dst..dst + len * inner].copy_from_slice(&g.data()[src..src + len * inner]);
            }
            vec![(x.clone(), gx)]
        }
        Reshape(a) => vec![(a.clone(), g.clone().reshaped(a.shape()))],
        TransposeLast2(a) => vec![(a.clone(), transpose_last2(g))],
        MatMulConst { x, m } => vec![(x.clone(), matmul_last(g, m, true))],
        Conv1d { x, w, b, spec } => {
            let r = kernels::conv1d_backward(
                x.value(),
                w.value(),
                b.as_ref().is_some_and(|b| b.requires_grad()),
                spec,
                g,
                x.requires_grad(),
                w.requires_grad(),
            );
            collect_conv(x, w, b, r)
        }
        Conv2d { x, w, b, spec } => {
            let r = kernels::conv2d_backward(
                x.value(),
                w.value(),
                b.as_ref().is_some_and(|b| b.requires_grad()),
                spec,
                g,
                x.requires_grad(),
                w.requires_grad(),
            );
            collect_conv(x, w, b, r)
        }
        AvgPool1d { x, kernel, stride, pad } => {
            let len = *x.shape().last().unwrap();
            let gx = kernels::avg_pool1d_backward(g.data(), len, *kernel, *stride, *pad);
            vec![(x.clone(), Tensor::new(x.shape().to_vec(), gx))]
        }
        BatchNorm { x, inv_std } => vec![(x.clone(), kernels::batch_norm_backward(y, inv_std, g))],
        ChannelAffine { x, gamma, beta } => {
            let c = x.shape()[1];
            let inner = x.value().numel() / (x.shape()[0] * c);
            let gam = gamma.value().data();
            let mut gx = g.clone();
            let mut gg = vec![0.0; c];
            let mut gb = vec![0.0; c];
            for (i, (chunk, xs)) in gx.data_mut().chunks_mut(inner).zip(x.value().data().chunks(inner)).enumerate() {
                let ch = i % c;
                for (gv, xv) in chunk.iter_mut().zip(xs) {
                    gg[ch] += *gv * xv;
                    gb[ch] += *gv;
                    *gv *= gam[ch];
                }
            }
            vec![
                (x.clone(), gx),
                (gamma.clone(), Tensor::new(vec![c], gg)),
                (beta.clone(), Tensor::new(vec![c], gb)),
            ]
        }
        StftMag { x, plan, spectra } => {
            let len = *x.shape().last().unwrap();
            let per = spectra.first().map_or(0, |s| s.frames * s.bins);
            let mut gx = Vec::with_capacity(x.value().numel());
            for (r, s) in spectra.iter().enumerate() {
                gx.extend(plan.magnitude_adjoint(len, s, &g.data()[r * per..(r + 1) * per]));
            }
            vec![(x.clone(), Tensor::new(x.shape().to_vec(), gx))]
        }
    }
}

fn collect_conv(x: &Var, w: &Var, b: &Option<Var>, r: kernels::Conv1dGrads) -> Vec<(Var, Tensor)> {
    let mut out = Vec::new();
    if let Some(gx) = r.input {
        out.push((x.clone(), gx));
    }
    if let Some(gw) = r.weight {
        out.push((w.clone(), gw));
    }
    if let (Some(b), Some(gb)) = (b, r.bias) {
        out.push((b.clone(), gb));
    }
    out
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}
