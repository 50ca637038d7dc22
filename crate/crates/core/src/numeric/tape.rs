//! Tape-based reverse-mode differentiation.
//!
//! Ops append nodes to a [`Tape`] in creation order, which is already a
//! topological order: every node's inputs precede it. `backward` walks the
//! node list in reverse and accumulates gradients into every node that
//! requires them.

use crate::error::{Error, Result};

use super::kernels;
use super::tensor::Tensor;

/// Handle to a tensor recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    MatMul(Var, Var),
    Conv2d { input: Var, kernel: Var, bias: Option<Var> },
    Sigmoid(Var),
    Tanh(Var),
    Concat(Vec<Var>),
    Slice { input: Var, start: usize, len: usize },
    MseLoss(Var, Var),
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    grad: Option<Vec<f64>>,
    requires_grad: bool,
    op: Op,
}

/// Recorded operation graph over [`Tensor`] values.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Channel axis convention: image tensors keep (channels, height, width) as
/// their three trailing dimensions, so the channel axis is `rank - 3`.
fn channel_axis(shape: &[usize]) -> Result<usize> {
    if shape.len() < 3 {
        return Err(Error::ShapeMismatch(format!(
            "channel ops need rank >= 3, got shape {shape:?}"
        )));
    }
    Ok(shape.len() - 3)
}

fn stable_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Records an input tensor. Gradients are tracked when `requires_grad`.
    pub fn leaf(&mut self, value: Tensor, requires_grad: bool) -> Var {
        self.push(value, requires_grad, Op::Leaf)
    }

    /// Records a non-differentiable constant.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, false, Op::Leaf)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    /// Accumulated gradient; `None` before any `backward` pass, all-zero for
    /// nodes the loss does not reach.
    pub fn grad(&self, v: Var) -> Option<&[f64]> {
        self.nodes[v.0].grad.as_deref()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Clears accumulated gradients on every node.
    pub fn zero_grad(&mut self) {
        for node in &mut self.nodes {
            node.grad = None;
        }
    }

    fn push(&mut self, value: Tensor, requires_grad: bool, op: Op) -> Var {
        self.nodes.push(Node { value, grad: None, requires_grad, op });
        Var(self.nodes.len() - 1)
    }

    fn record(&mut self, value: Tensor, inputs_require: bool, op: Op, context: &str) -> Result<Var> {
        value.check_finite(context)?;
        Ok(self.push(value, inputs_require, op))
    }

    // ---- elementwise -----------------------------------------------------

    /// Shapes must match exactly, or one operand must be a single element
    /// (scalar broadcasting, the only broadcast form supported).
    fn binary_ew(&mut self, a: Var, b: Var, name: &str, f: impl Fn(f64, f64) -> f64) -> Result<Var> {
        let sa = self.nodes[a.0].value.shape();
        let sb = self.nodes[b.0].value.shape();
        let shape = if sa == sb {
            sa.to_vec()
        } else if self.nodes[a.0].value.numel() == 1 {
            sb.to_vec()
        } else if self.nodes[b.0].value.numel() == 1 {
            sa.to_vec()
        } else {
            return Err(Error::ShapeMismatch(format!("{name}: {sa:?} vs {sb:?}")));
        };
        let da = self.nodes[a.0].value.data();
        let db = self.nodes[b.0].value.data();
        let numel: usize = shape.iter().product();
        let mut out = Vec::with_capacity(numel);
        if da.len() == db.len() {
            out.extend(da.iter().zip(db).map(|(x, y)| f(*x, *y)));
        } else if da.len() == 1 {
            let x = da[0];
            out.extend(db.iter().map(|y| f(x, *y)));
        } else {
            let y = db[0];
            out.extend(da.iter().map(|x| f(*x, y)));
        }
        let requires = self.nodes[a.0].requires_grad || self.nodes[b.0].requires_grad;
        let value = Tensor::new(shape, out).map_err(|_| Error::NumericOverflow(name.into()))?;
        let op = match name {
            "add" => Op::Add(a, b),
            "sub" => Op::Sub(a, b),
            _ => Op::Mul(a, b),
        };
        Ok(self.push(value, requires, op))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary_ew(a, b, "add", |x, y| x + y)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary_ew(a, b, "sub", |x, y| x - y)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary_ew(a, b, "mul", |x, y| x * y)
    }

    pub fn sigmoid(&mut self, x: Var) -> Result<Var> {
        let data: Vec<f64> = self.nodes[x.0].value.data().iter().map(|v| stable_sigmoid(*v)).collect();
        let value = Tensor::new(self.nodes[x.0].value.shape().to_vec(), data)?;
        let requires = self.nodes[x.0].requires_grad;
        self.record(value, requires, Op::Sigmoid(x), "sigmoid")
    }

    pub fn tanh(&mut self, x: Var) -> Result<Var> {
        let data: Vec<f64> = self.nodes[x.0].value.data().iter().map(|v| v.tanh()).collect();
        let value = Tensor::new(self.nodes[x.0].value.shape().to_vec(), data)?;
        let requires = self.nodes[x.0].requires_grad;
        self.record(value, requires, Op::Tanh(x), "tanh")
    }

    // ---- matmul ----------------------------------------------------------

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let sa = self.nodes[a.0].value.shape();
        let sb = self.nodes[b.0].value.shape();
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(Error::ShapeMismatch(format!("matmul: {sa:?} x {sb:?}")));
        }
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        let data = kernels::matmul(self.nodes[a.0].value.data(), self.nodes[b.0].value.data(), m, k, n);
        let value = Tensor::new(vec![m, n], data)?;
        let requires = self.nodes[a.0].requires_grad || self.nodes[b.0].requires_grad;
        self.record(value, requires, Op::MatMul(a, b), "matmul")
    }

    // ---- convolution -----------------------------------------------------

    /// Stride-1 zero-padded "same" convolution over `[n, ci, h, w]` input and
    /// `[co, ci, kh, kw]` kernel (odd kernel sides), optional `[co]` bias.
    pub fn conv2d(&mut self, input: Var, kernel: Var, bias: Option<Var>) -> Result<Var> {
        let si = self.nodes[input.0].value.shape().to_vec();
        let sk = self.nodes[kernel.0].value.shape().to_vec();
        if si.len() != 4 || sk.len() != 4 {
            return Err(Error::ShapeMismatch(format!("conv2d: input {si:?}, kernel {sk:?}")));
        }
        let (n, ci, h, w) = (si[0], si[1], si[2], si[3]);
        let (co, kci, kh, kw) = (sk[0], sk[1], sk[2], sk[3]);
        if kci != ci {
            return Err(Error::ShapeMismatch(format!(
                "conv2d: input has {ci} channels, kernel expects {kci}"
            )));
        }
        if kh % 2 == 0 || kw % 2 == 0 {
            return Err(Error::ShapeMismatch(format!("conv2d: kernel must be odd-sized, got {kh}x{kw}")));
        }
        if let Some(b) = bias {
            let sbias = self.nodes[b.0].value.shape();
            if sbias != [co] {
                return Err(Error::ShapeMismatch(format!("conv2d: bias {sbias:?}, expected [{co}]")));
            }
        }
        let bias_data = bias.map(|b| self.nodes[b.0].value.data().to_vec());
        let data = kernels::conv2d_forward(
            self.nodes[input.0].value.data(),
            n,
            ci,
            h,
            w,
            self.nodes[kernel.0].value.data(),
            co,
            kh,
            kw,
            bias_data.as_deref(),
        );
        let value = Tensor::new(vec![n, co, h, w], data)?;
        let requires = self.nodes[input.0].requires_grad
            || self.nodes[kernel.0].requires_grad
            || bias.map(|b| self.nodes[b.0].requires_grad).unwrap_or(false);
        self.record(value, requires, Op::Conv2d { input, kernel, bias }, "conv2d")
    }

    // ---- channel concat / slice -------------------------------------------

    /// Concatenates along the channel axis (`rank - 3`); all other dims must match.
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var> {
        if parts.is_empty() {
            return Err(Error::ShapeMismatch("concat of zero tensors".into()));
        }
        let first = self.nodes[parts[0].0].value.shape().to_vec();
        let axis = channel_axis(&first)?;
        let mut channels = 0;
        for p in parts {
            let s = self.nodes[p.0].value.shape();
            if s.len() != first.len()
                || s[..axis] != first[..axis]
                || s[axis + 1..] != first[axis + 1..]
            {
                return Err(Error::ShapeMismatch(format!("concat: {s:?} vs {first:?}")));
            }
            channels += s[axis];
        }
        let mut shape = first.clone();
        shape[axis] = channels;
        let outer: usize = first[..axis].iter().product();
        let inner: usize = first[axis + 1..].iter().product();
        let mut data = vec![0.0; outer * channels * inner];
        for o in 0..outer {
            let mut ch_off = 0;
            for p in parts {
                let pc = self.nodes[p.0].value.shape()[axis];
                let src = &self.nodes[p.0].value.data()[o * pc * inner..(o + 1) * pc * inner];
                data[(o * channels + ch_off) * inner..(o * channels + ch_off + pc) * inner]
                    .copy_from_slice(src);
                ch_off += pc;
            }
        }
        let requires = parts.iter().any(|p| self.nodes[p.0].requires_grad);
        let value = Tensor::new(shape, data)?;
        self.record(value, requires, Op::Concat(parts.to_vec()), "concat")
    }

    /// Takes channels `[start, start+len)` along the channel axis.
    pub fn slice(&mut self, input: Var, start: usize, len: usize) -> Result<Var> {
        let s = self.nodes[input.0].value.shape().to_vec();
        let axis = channel_axis(&s)?;
        if start + len > s[axis] || len == 0 {
            return Err(Error::ShapeMismatch(format!(
                "slice [{start}, {}) out of {} channels",
                start + len,
                s[axis]
            )));
        }
        let outer: usize = s[..axis].iter().product();
        let inner: usize = s[axis + 1..].iter().product();
        let channels = s[axis];
        let mut shape = s.clone();
        shape[axis] = len;
        let mut data = vec![0.0; outer * len * inner];
        let src = self.nodes[input.0].value.data();
        for o in 0..outer {
            data[o * len * inner..(o + 1) * len * inner].copy_from_slice(
                &src[(o * channels + start) * inner..(o * channels + start + len) * inner],
            );
        }
        let requires = self.nodes[input.0].requires_grad;
        let value = Tensor::new(shape, data)?;
        self.record(value, requires, Op::Slice { input, start, len }, "slice")
    }

    // ---- loss --------------------------------------------------------------

    /// Mean over all elements of the squared difference; scalar output.
    pub fn mse_loss(&mut self, pred: Var, target: Var) -> Result<Var> {
        let sp = self.nodes[pred.0].value.shape();
        let st = self.nodes[target.0].value.shape();
        if sp != st {
            return Err(Error::ShapeMismatch(format!("mse_loss: {sp:?} vs {st:?}")));
        }
        let dp = self.nodes[pred.0].value.data();
        let dt = self.nodes[target.0].value.data();
        let mut acc = 0.0;
        for (p, t) in dp.iter().zip(dt) {
            let d = p - t;
            acc += d * d;
        }
        let mean = acc / dp.len() as f64;
        let requires = self.nodes[pred.0].requires_grad || self.nodes[target.0].requires_grad;
        let value = Tensor::new(vec![1], vec![mean])?;
        self.record(value, requires, Op::MseLoss(pred, target), "mse_loss")
    }

    // ---- backward ----------------------------------------------------------

    /// Reverse pass from a scalar loss. Populates `grad` on every
    /// `requires_grad` node at or before the loss; gradients accumulate
    /// across calls until [`Tape::zero_grad`].
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        let numel = self.nodes[loss.0].value.numel();
        if numel != 1 {
            return Err(Error::NotScalar(numel));
        }
        // Each pass flows through a scratch table seeded with d(loss)/d(loss)
        // = 1 and merges into the persistent per-node grads at the end, so
        // repeated calls accumulate instead of compounding.
        let mut scratch: Vec<Option<Vec<f64>>> = vec![None; loss.0 + 1];
        scratch[loss.0] = Some(vec![1.0]);
        for i in (0..=loss.0).rev() {
            if !self.nodes[i].requires_grad {
                continue;
            }
            let Some(g) = scratch[i].take() else { continue };
            self.propagate(i, &g, &mut scratch)?;
            scratch[i] = Some(g);
        }
        for (node, s) in self.nodes[..=loss.0].iter_mut().zip(scratch) {
            if !node.requires_grad {
                continue;
            }
            match (&mut node.grad, s) {
                (Some(grad), Some(contribution)) => {
                    for (g, c) in grad.iter_mut().zip(contribution) {
                        *g += c;
                    }
                }
                (grad @ None, Some(contribution)) => *grad = Some(contribution),
                // Disconnected parameters read as zero gradients, not absent.
                (grad @ None, None) => *grad = Some(vec![0.0; node.value.numel()]),
                (Some(_), None) => {}
            }
        }
        Ok(())
    }

    /// First contribution moves in; later ones add elementwise.
    fn accumulate(&self, scratch: &mut [Option<Vec<f64>>], v: Var, contribution: Vec<f64>) {
        if !self.nodes[v.0].requires_grad {
            return;
        }
        match &mut scratch[v.0] {
            Some(grad) => {
                for (g, c) in grad.iter_mut().zip(contribution) {
                    *g += c;
                }
            }
            slot @ None => *slot = Some(contribution),
        }
    }

    /// Gradient contribution for one elementwise operand, reducing to a
    /// single element when that operand was scalar-broadcast.
    fn accumulate_ew(&self, scratch: &mut [Option<Vec<f64>>], v: Var, contribution: Vec<f64>) {
        if !self.nodes[v.0].requires_grad {
            return;
        }
        if self.nodes[v.0].value.numel() == 1 && contribution.len() > 1 {
            let sum: f64 = contribution.iter().sum();
            self.accumulate(scratch, v, vec![sum]);
        } else {
            self.accumulate(scratch, v, contribution);
        }
    }

    fn propagate(&self, node_idx: usize, g: &[f64], scratch: &mut [Option<Vec<f64>>]) -> Result<()> {
        match &self.nodes[node_idx].op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                self.accumulate_ew(scratch, *a, g.to_vec());
                self.accumulate_ew(scratch, *b, g.to_vec());
            }
            Op::Sub(a, b) => {
                self.accumulate_ew(scratch, *a, g.to_vec());
                self.accumulate_ew(scratch, *b, g.iter().map(|v| -v).collect());
            }
            Op::Mul(a, b) => {
                let ga = mul_broadcast(g, self.nodes[b.0].value.data());
                let gb = mul_broadcast(g, self.nodes[a.0].value.data());
                self.accumulate_ew(scratch, *a, ga);
                self.accumulate_ew(scratch, *b, gb);
            }
            Op::MatMul(a, b) => {
                let sa = self.nodes[a.0].value.shape();
                let sb = self.nodes[b.0].value.shape();
                let (m, k, n) = (sa[0], sa[1], sb[1]);
                let ga = kernels::matmul_a_bt(g, self.nodes[b.0].value.data(), m, n, k);
                let gb = kernels::matmul_at_b(self.nodes[a.0].value.data(), g, m, k, n);
                self.accumulate(scratch, *a, ga);
                self.accumulate(scratch, *b, gb);
            }
            Op::Conv2d { input, kernel, bias } => {
                let si = self.nodes[input.0].value.shape();
                let sk = self.nodes[kernel.0].value.shape();
                let (n, ci, h, w) = (si[0], si[1], si[2], si[3]);
                let (co, kh, kw) = (sk[0], sk[2], sk[3]);
                if self.nodes[input.0].requires_grad {
                    let gi = kernels::conv2d_backward_input(
                        g,
                        n,
                        ci,
                        h,
                        w,
                        self.nodes[kernel.0].value.data(),
                        co,
                        kh,
                        kw,
                    );
                    self.accumulate(scratch, *input, gi);
                }
                if self.nodes[kernel.0].requires_grad {
                    let gk = kernels::conv2d_backward_kernel(
                        g,
                        self.nodes[input.0].value.data(),
                        n,
                        ci,
                        h,
                        w,
                        co,
                        kh,
                        kw,
                    );
                    self.accumulate(scratch, *kernel, gk);
                }
                if let Some(b) = bias {
                    if self.nodes[b.0].requires_grad {
                        let gb = kernels::conv2d_backward_bias(g, n, co, h * w);
                        self.accumulate(scratch, *b, gb);
                    }
                }
            }
            Op::Sigmoid(x) => {
                let y = self.nodes[node_idx].value.data();
                let gx: Vec<f64> = g.iter().zip(y).map(|(gv, yv)| gv * yv * (1.0 - yv)).collect();
                self.accumulate(scratch, *x, gx);
            }
            Op::Tanh(x) => {
                let y = self.nodes[node_idx].value.data();
                let gx: Vec<f64> = g.iter().zip(y).map(|(gv, yv)| gv * (1.0 - yv * yv)).collect();
                self.accumulate(scratch, *x, gx);
            }
            Op::Concat(parts) => {
                let shape = self.nodes[node_idx].value.shape();
                let axis = channel_axis(shape)?;
                let outer: usize = shape[..axis].iter().product();
                let inner: usize = shape[axis + 1..].iter().product();
                let channels = shape[axis];
                let mut ch_off = 0;
                for p in parts {
                    let pc = self.nodes[p.0].value.shape()[axis];
                    if self.nodes[p.0].requires_grad {
                        let mut gp = vec![0.0; outer * pc * inner];
                        for o in 0..outer {
                            gp[o * pc * inner..(o + 1) * pc * inner].copy_from_slice(
                                &g[(o * channels + ch_off) * inner
                                    ..(o * channels + ch_off + pc) * inner],
                            );
                        }
                        self.accumulate(scratch, *p, gp);
                    }
                    ch_off += pc;
                }
            }
            Op::Slice { input, start, len } => {
                let shape = self.nodes[input.0].value.shape();
                let axis = channel_axis(shape)?;
                let outer: usize = shape[..axis].iter().product();
                let inner: usize = shape[axis + 1..].iter().product();
                let channels = shape[axis];
                let mut gi = vec![0.0; outer * channels * inner];
                for o in 0..outer {
                    gi[(o * channels + start) * inner..(o * channels + start + len) * inner]
                        .copy_from_slice(&g[o * len * inner..(o + 1) * len * inner]);
                }
                self.accumulate(scratch, *input, gi);
            }
            Op::MseLoss(pred, target) => {
                let dp = self.nodes[pred.0].value.data();
                let dt = self.nodes[target.0].value.data();
                let scale = 2.0 * g[0] / dp.len() as f64;
                let gp: Vec<f64> = dp.iter().zip(dt).map(|(p, t)| scale * (p - t)).collect();
                if self.nodes[target.0].requires_grad {
                    let gt: Vec<f64> = gp.iter().map(|v| -v).collect();
                    self.accumulate(scratch, *target, gt);
                }
                self.accumulate(scratch, *pred, gp);
            }
        }
        Ok(())
    }
}

/// `g * other` where either side may be a single broadcast element.
fn mul_broadcast(g: &[f64], other: &[f64]) -> Vec<f64> {
    if g.len() == other.len() {
        g.iter().zip(other).map(|(a, b)| a * b).collect()
    } else if other.len() == 1 {
        let o = other[0];
        g.iter().map(|a| a * o).collect()
    } else {
        // scalar-broadcast operand: g is scalar output? not possible (output
        // takes the larger shape), so g matches the larger side.
        let gv = g[0];
        other.iter().map(|b| gv * b).collect()
    }
}
