use super::kernels::{self, Dims};
use super::tensor::{Scalar, Tensor};
use crate::{Error, Result};

pub const BN_EPSILON: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.9;

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(&self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BnMode {
    /// Normalise with batch statistics and update the running statistics.
    Train,
    /// Normalise with batch statistics, leave the running statistics alone.
    BatchStats,
    /// Normalise with the running statistics.
    Eval,
}

/// Running mean and variance of one batch-norm layer.
#[derive(Debug, Clone, PartialEq)]
pub struct RunningStats<T> {
    pub mean: Vec<T>,
    pub var: Vec<T>,
    pub initialized: bool,
}

impl<T: Scalar> RunningStats<T> {
    pub fn new(channels: usize) -> Self {
        RunningStats {
            mean: vec![T::zero(); channels],
            var: vec![T::one(); channels],
            initialized: false,
        }
    }
}

#[derive(Debug)]
enum Op<T> {
    Leaf,
    Conv2d { x: usize, w: usize, b: Option<usize>, k: usize },
    ConvT { x: usize, w: usize, b: Option<usize> },
    MaxPool { x: usize, arg: Vec<u32> },
    BatchNorm { x: usize, gamma: usize, beta: usize, xhat: Vec<T>, inv_std: Vec<T>, batch: bool },
    Relu { x: usize },
    Concat { xs: Vec<usize> },
    Softmax { x: usize },
    SoftmaxCe { logits: usize, target: usize, probs: Vec<T> },
    Dice { probs: usize, target: usize, eps: T },
    Add { a: usize, b: usize },
    Dot { a: usize, b: usize },
}

#[derive(Debug)]
struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
    needs_grad: bool,
}

/// Records a forward computation for reverse-mode differentiation.
#[derive(Debug)]
pub struct Tape<T> {
    nodes: Vec<Node<T>>,
}

impl<T: Scalar> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

/// Gradients of a scalar with respect to every differentiable tape value.
#[derive(Debug)]
pub struct Gradients<T> {
    grads: Vec<Option<Tensor<T>>>,
}

impl<T: Scalar> Gradients<T> {
    /// Gradient of `v`; `None` when `v` does not influence the loss or is a
    /// constant.
    pub fn get(&self, v: Var) -> Option<&Tensor<T>> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }

    pub fn take(&mut self, v: Var) -> Option<Tensor<T>> {
        self.grads.get_mut(v.0).and_then(|g| g.take())
    }
}

fn dims(t: &Tensor<impl Scalar>) -> Result<Dims> {
    let (n, c, h, w) = t.dims4()?;
    Ok(Dims { n, c, h, w })
}

fn same_shape<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>, what: &str) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::invalid(format!(
            "{what}: shapes {:?} and {:?} differ",
            a.shape(),
            b.shape()
        )));
    }
    Ok(())
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>, needs_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn needs(&self, vars: &[usize]) -> bool {
        vars.iter().any(|&v| self.nodes[v].needs_grad)
    }

    /// A differentiable input (parameter).
    pub fn leaf(&mut self, value: Tensor<T>) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// A non-differentiable input (data, targets).
    pub fn constant(&mut self, value: Tensor<T>) -> Var {
        self.push(value, Op::Leaf, false)
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    /// Same-padded 2D cross-correlation, stride 1. `w` is (c_out, c_in, k, k)
    /// with odd `k`; `b` is (c_out).
    pub fn conv2d(&mut self, x: Var, w: Var, b: Option<Var>) -> Result<Var> {
        let d = dims(self.value(x))?;
        let ws = self.value(w).shape().to_vec();
        let (o, k) = match ws[..] {
            [o, c, k, k2] if c == d.c && k == k2 && k % 2 == 1 => (o, k),
            _ => {
                return Err(Error::invalid(format!(
                    "conv2d: kernel {ws:?} does not fit input {:?}",
                    self.value(x).shape()
                )))
            }
        };
        if let Some(b) = b {
            if self.value(b).shape() != [o] {
                return Err(Error::invalid("conv2d: bias must have one entry per output channel"));
            }
        }
        let mut y = Tensor::zeros(&[d.n, o, d.h, d.w]);
        kernels::conv2d_forward(
            self.value(x).data(),
            d,
            self.value(w).data(),
            o,
            k,
            b.map(|b| self.value(b).data()),
            y.data_mut(),
        );
        let parents: Vec<usize> = [Some(x.0), Some(w.0), b.map(|b| b.0)].into_iter().flatten().collect();
        let needs = self.needs(&parents);
        Ok(self.push(y, Op::Conv2d { x: x.0, w: w.0, b: b.map(|b| b.0), k }, needs))
    }

    /// Stride-2 transposed convolution with a 2×2 kernel, doubling height and
    /// width. `w` is (c_in, c_out, 2, 2); `b` is (c_out).
    pub fn conv2d_transpose(&mut self, x: Var, w: Var, b: Option<Var>) -> Result<Var> {
        let d = dims(self.value(x))?;
        let ws = self.value(w).shape().to_vec();
        let o = match ws[..] {
            [c, o, 2, 2] if c == d.c => o,
            _ => {
                return Err(Error::invalid(format!(
                    "conv2d_transpose: kernel {ws:?} does not fit input {:?}",
                    self.value(x).shape()
                )))
            }
        };
        if let Some(b) = b {
            if self.value(b).shape() != [o] {
                return Err(Error::invalid(
                    "conv2d_transpose: bias must have one entry per output channel",
                ));
            }
        }
        let mut y = Tensor::zeros(&[d.n, o, 2 * d.h, 2 * d.w]);
        kernels::conv_t_forward(
            self.value(x).data(),
            d,
            self.value(w).data(),
            o,
            b.map(|b| self.value(b).data()),
            y.data_mut(),
        );
        let parents: Vec<usize> = [Some(x.0), Some(w.0), b.map(|b| b.0)].into_iter().flatten().collect();
        let needs = self.needs(&parents);
        Ok(self.push(y, Op::ConvT { x: x.0, w: w.0, b: b.map(|b| b.0) }, needs))
    }

    /// 2×2 max pooling with stride 2.
    pub fn maxpool2(&mut self, x: Var) -> Result<Var> {
        let d = dims(self.value(x))?;
        if d.h % 2 != 0 || d.w % 2 != 0 {
            return Err(Error::invalid(format!(
                "maxpool2 needs even spatial dims, got {}×{}",
                d.h, d.w
            )));
        }
        let mut y = Tensor::zeros(&[d.n, d.c, d.h / 2, d.w / 2]);
        let arg = kernels::maxpool2_forward(self.value(x).data(), d, y.data_mut());
        let needs = self.needs(&[x.0]);
        Ok(self.push(y, Op::MaxPool { x: x.0, arg }, needs))
    }

    /// Per-channel batch normalisation, `epsilon` 1e-5 and momentum 0.9.
    pub fn batchnorm(
        &mut self,
        x: Var,
        gamma: Var,
        beta: Var,
        stats: &mut RunningStats<T>,
        mode: BnMode,
    ) -> Result<Var> {
        let d = dims(self.value(x))?;
        if self.value(gamma).shape() != [d.c] || self.value(beta).shape() != [d.c] {
            return Err(Error::invalid("batchnorm: scale and shift need one entry per channel"));
        }
        if stats.mean.len() != d.c || stats.var.len() != d.c {
            return Err(Error::invalid("batchnorm: running statistics have the wrong width"));
        }
        let m = d.n * d.plane();
        let eps = T::lit(BN_EPSILON);
        let batch = mode != BnMode::Eval;
        if batch && m < 2 {
            return Err(Error::invalid("batchnorm: batch statistics need at least two values per channel"));
        }
        if !batch && !stats.initialized {
            return Err(Error::UninitializedStatistics(
                "batchnorm evaluated before any training step".into(),
            ));
        }
        let xs = self.value(x).data();
        let (g, bt) = (self.value(gamma).data(), self.value(beta).data());
        let mut xhat = vec![T::zero(); xs.len()];
        let mut y = Tensor::zeros(self.value(x).shape());
        let mut inv_std = vec![T::zero(); d.c];
        let hw = d.plane();
        for c in 0..d.c {
            let chan = |n: usize| n * d.sample() + c * hw;
            let (mean, var) = if batch {
                let mut s = T::zero();
                for n in 0..d.n {
                    s += xs[chan(n)..chan(n) + hw].iter().copied().sum::<T>();
                }
                let mean = s / T::lit(m as f64);
                let mut v = T::zero();
                for n in 0..d.n {
                    v += xs[chan(n)..chan(n) + hw].iter().map(|&a| (a - mean) * (a - mean)).sum::<T>();
                }
                (mean, v / T::lit(m as f64))
            } else {
                (stats.mean[c], stats.var[c])
            };
            let is = T::one() / (var + eps).sqrt();
            inv_std[c] = is;
            for n in 0..d.n {
                let r = chan(n)..chan(n) + hw;
                for ((xh, yv), &a) in xhat[r.clone()].iter_mut().zip(&mut y.data_mut()[r.clone()]).zip(&xs[r]) {
                    *xh = (a - mean) * is;
                    *yv = g[c] * *xh + bt[c];
                }
            }
            if mode == BnMode::Train {
                let mom = T::lit(BN_MOMENTUM);
                stats.mean[c] = mom * stats.mean[c] + (T::one() - mom) * mean;
                stats.var[c] = mom * stats.var[c] + (T::one() - mom) * var;
            }
        }
        if mode == BnMode::Train {
            stats.initialized = true;
        }
        let needs = self.needs(&[x.0, gamma.0, beta.0]);
        Ok(self.push(
            y,
            Op::BatchNorm {
                x: x.0,
                gamma: gamma.0,
                beta: beta.0,
                xhat,
                inv_std,
                batch,
            },
            needs,
        ))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let mut y = self.value(x).clone();
        for v in y.data_mut() {
            *v = if *v < T::zero() { T::zero() } else { *v };
        }
        let needs = self.needs(&[x.0]);
        self.push(y, Op::Relu { x: x.0 }, needs)
    }

    /// Concatenates 4-D tensors along the channel axis.
    pub fn concat_channels(&mut self, xs: &[Var]) -> Result<Var> {
        let first = *xs.first().ok_or_else(|| Error::invalid("concat of nothing"))?;
        let d0 = dims(self.value(first))?;
        let mut c_total = 0;
        for &v in xs {
            let d = dims(self.value(v))?;
            if (d.n, d.h, d.w) != (d0.n, d0.h, d0.w) {
                return Err(Error::invalid(format!(
                    "concat: {:?} does not match {:?}",
                    self.value(v).shape(),
                    self.value(first).shape()
                )));
            }
            c_total += d.c;
        }
        let hw = d0.plane();
        let mut y = Tensor::zeros(&[d0.n, c_total, d0.h, d0.w]);
        for n in 0..d0.n {
            let mut off = n * c_total * hw;
            for &v in xs {
                let t = self.value(v);
                let per = t.shape()[1] * hw;
                y.data_mut()[off..off + per].copy_from_slice(&t.data()[n * per..(n + 1) * per]);
                off += per;
            }
        }
        let ids: Vec<usize> = xs.iter().map(|v| v.0).collect();
        let needs = self.needs(&ids);
        Ok(self.push(y, Op::Concat { xs: ids }, needs))
    }

    /// Softmax over the channel axis of a 4-D tensor.
    pub fn softmax(&mut self, x: Var) -> Result<Var> {
        let d = dims(self.value(x))?;
        let y = softmax_channels(self.value(x).data(), d);
        let needs = self.needs(&[x.0]);
        Ok(self.push(Tensor::new(self.value(x).shape(), y)?, Op::Softmax { x: x.0 }, needs))
    }

    /// Cross-entropy of softmax(logits) against per-pixel target
    /// distributions, averaged over batch and spatial positions.
    pub fn softmax_cross_entropy(&mut self, logits: Var, target: Var) -> Result<Var> {
        same_shape(self.value(logits), self.value(target), "softmax_cross_entropy")?;
        let d = dims(self.value(logits))?;
        let probs = softmax_channels(self.value(logits).data(), d);
        let t = self.value(target).data();
        let hw = d.plane();
        let mut total = T::zero();
        for n in 0..d.n {
            for c in 0..d.c {
                let base = n * d.sample() + c * hw;
                for i in base..base + hw {
                    if t[i] != T::zero() {
                        total -= t[i] * probs[i].max(T::min_positive_value()).ln();
                    }
                }
            }
        }
        let loss = total / T::lit((d.n * hw) as f64);
        let needs = self.needs(&[logits.0, target.0]);
        Ok(self.push(
            Tensor::scalar(loss),
            Op::SoftmaxCe {
                logits: logits.0,
                target: target.0,
                probs,
            },
            needs,
        ))
    }

    /// `1 − mean_c (2·Σ p·t + ε) / (Σ p + Σ t + ε)` over the foreground
    /// channels `c ≥ 1`, with sums over batch and space.
    pub fn dice_loss(&mut self, probs: Var, target: Var, eps: f64) -> Result<Var> {
        same_shape(self.value(probs), self.value(target), "dice_loss")?;
        let d = dims(self.value(probs))?;
        if d.c < 2 {
            return Err(Error::invalid("dice_loss needs at least one foreground channel"));
        }
        let eps = T::lit(eps);
        let (inter, sums) = dice_sums(self.value(probs).data(), self.value(target).data(), d);
        let mut mean = T::zero();
        for c in 1..d.c {
            mean += (T::lit(2.0) * inter[c] + eps) / (sums[c] + eps);
        }
        mean /= T::lit((d.c - 1) as f64);
        let needs = self.needs(&[probs.0, target.0]);
        Ok(self.push(
            Tensor::scalar(T::one() - mean),
            Op::Dice {
                probs: probs.0,
                target: target.0,
                eps,
            },
            needs,
        ))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        same_shape(self.value(a), self.value(b), "add")?;
        let mut y = self.value(a).clone();
        for (v, &w) in y.data_mut().iter_mut().zip(self.value(b).data()) {
            *v += w;
        }
        let needs = self.needs(&[a.0, b.0]);
        Ok(self.push(y, Op::Add { a: a.0, b: b.0 }, needs))
    }

    /// `Σ a ⊙ b` as a scalar.
    pub fn dot(&mut self, a: Var, b: Var) -> Result<Var> {
        same_shape(self.value(a), self.value(b), "dot")?;
        let s = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(&x, &y)| x * y)
            .sum();
        let needs = self.needs(&[a.0, b.0]);
        Ok(self.push(Tensor::scalar(s), Op::Dot { a: a.0, b: b.0 }, needs))
    }

    /// Reverse pass from the scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients<T>> {
        if self.value(loss).len() != 1 {
            return Err(Error::invalid(format!(
                "backward needs a scalar, got shape {:?}",
                self.value(loss).shape()
            )));
        }
        let mut grads: Vec<Option<Tensor<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::scalar(T::one()));
        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            if !node.needs_grad {
                grads[i] = None;
                continue;
            }
            if matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            self.propagate(i, &g, &mut grads);
        }
        Ok(Gradients { grads })
    }

    fn acc<'g>(&self, grads: &'g mut [Option<Tensor<T>>], idx: usize) -> Option<&'g mut [T]> {
        if !self.nodes[idx].needs_grad {
            return None;
        }
        let shape = self.nodes[idx].value.shape();
        Some(grads[idx].get_or_insert_with(|| Tensor::zeros(shape)).data_mut())
    }

    fn take_acc(&self, grads: &mut [Option<Tensor<T>>], idx: usize) -> Option<Tensor<T>> {
        if !self.nodes[idx].needs_grad {
            return None;
        }
        Some(grads[idx].take().unwrap_or_else(|| Tensor::zeros(self.nodes[idx].value.shape())))
    }

    fn propagate(&self, i: usize, g: &Tensor<T>, grads: &mut [Option<Tensor<T>>]) {
        let gd = g.data();
        match &self.nodes[i].op {
            Op::Leaf => {}
            Op::Conv2d { x, w, b, k } => {
                let d = dims(&self.nodes[*x].value).expect("checked in forward");
                let o = self.nodes[*w].value.shape()[0];
                let mut dx = self.take_acc(grads, *x);
                let mut dw = self.take_acc(grads, *w);
                let mut db = b.and_then(|b| self.take_acc(grads, b));
                kernels::conv2d_backward(
                    self.nodes[*x].value.data(),
                    d,
                    self.nodes[*w].value.data(),
                    o,
                    *k,
                    gd,
                    dx.as_mut().map(|t| t.data_mut()),
                    dw.as_mut().map(|t| t.data_mut()),
                    db.as_mut().map(|t| t.data_mut()),
                );
                grads[*x] = grads[*x].take().or(dx);
                grads[*w] = grads[*w].take().or(dw);
                if let Some(b) = b {
                    grads[*b] = grads[*b].take().or(db);
                }
            }
            Op::ConvT { x, w, b } => {
                let d = dims(&self.nodes[*x].value).expect("checked in forward");
                let o = self.nodes[*w].value.shape()[1];
                let mut dx = self.take_acc(grads, *x);
                let mut dw = self.take_acc(grads, *w);
                let mut db = b.and_then(|b| self.take_acc(grads, b));
                kernels::conv_t_backward(
                    self.nodes[*x].value.data(),
                    d,
                    self.nodes[*w].value.data(),
                    o,
                    gd,
                    dx.as_mut().map(|t| t.data_mut()),
                    dw.as_mut().map(|t| t.data_mut()),
                    db.as_mut().map(|t| t.data_mut()),
                );
                grads[*x] = grads[*x].take().or(dx);
                grads[*w] = grads[*w].take().or(dw);
                if let Some(b) = b {
                    grads[*b] = grads[*b].take().or(db);
                }
            }
            Op::MaxPool { x, arg } => {
                if let Some(dx) = self.acc(grads, *x) {
                    for (&a, &gv) in arg.iter().zip(gd) {
                        dx[a as usize] += gv;
                    }
                }
            }
            Op::BatchNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
                batch,
            } => {
                let d = dims(&self.nodes[*x].value).expect("checked in forward");
                let hw = d.plane();
                let m = T::lit((d.n * hw) as f64);
                let gam = self.nodes[*gamma].value.data();
                let mut dgamma = vec![T::zero(); d.c];
                let mut dbeta = vec![T::zero(); d.c];
                for c in 0..d.c {
                    for n in 0..d.n {
                        let base = n * d.sample() + c * hw;
                        for j in base..base + hw {
                            dgamma[c] += gd[j] * xhat[j];
                            dbeta[c] += gd[j];
                        }
                    }
                }
                if let Some(dx) = self.acc(grads, *x) {
                    for c in 0..d.c {
                        let scale = gam[c] * inv_std[c];
                        for n in 0..d.n {
                            let base = n * d.sample() + c * hw;
                            for j in base..base + hw {
                                dx[j] += if *batch {
                                    scale * (gd[j] - (dbeta[c] + xhat[j] * dgamma[c]) / m)
                                } else {
                                    scale * gd[j]
                                };
                            }
                        }
                    }
                }
                if let Some(dg) = self.acc(grads, *gamma) {
                    dg.iter_mut().zip(&dgamma).for_each(|(a, &b)| *a += b);
                }
                if let Some(db) = self.acc(grads, *beta) {
                    db.iter_mut().zip(&dbeta).for_each(|(a, &b)| *a += b);
                }
            }
            Op::Relu { x } => {
                let y = self.nodes[i].value.data();
                if let Some(dx) = self.acc(grads, *x) {
                    for ((d, &yv), &gv) in dx.iter_mut().zip(y).zip(gd) {
                        *d += if yv > T::zero() { gv } else { T::zero() };
                    }
                }
            }
            Op::Concat { xs } => {
                let d0 = dims(&self.nodes[i].value).expect("4-D");
                let hw = d0.plane();
                let mut off_c = 0;
                for &x in xs {
                    let c = self.nodes[x].value.shape()[1];
                    if let Some(dx) = self.acc(grads, x) {
                        for n in 0..d0.n {
                            let src = &gd[(n * d0.c + off_c) * hw..][..c * hw];
                            for (a, &b) in dx[n * c * hw..(n + 1) * c * hw].iter_mut().zip(src) {
                                *a += b;
                            }
                        }
                    }
                    off_c += c;
                }
            }
            Op::Softmax { x } => {
                let d = dims(&self.nodes[i].value).expect("4-D");
                let p = self.nodes[i].value.data();
                if let Some(dx) = self.acc(grads, *x) {
                    let hw = d.plane();
                    for n in 0..d.n {
                        for j in 0..hw {
                            let idx = |c: usize| n * d.sample() + c * hw + j;
                            let s: T = (0..d.c).map(|c| gd[idx(c)] * p[idx(c)]).sum();
                            for c in 0..d.c {
                                dx[idx(c)] += p[idx(c)] * (gd[idx(c)] - s);
                            }
                        }
                    }
                }
            }
            Op::SoftmaxCe {
                logits,
                target,
                probs,
            } => {
                let d = dims(&self.nodes[*logits].value).expect("4-D");
                let hw = d.plane();
                let scale = gd[0] / T::lit((d.n * hw) as f64);
                let t = self.nodes[*target].value.data();
                if let Some(dx) = self.acc(grads, *logits) {
                    for n in 0..d.n {
                        for j in 0..hw {
                            let idx = |c: usize| n * d.sample() + c * hw + j;
                            let tsum: T = (0..d.c).map(|c| t[idx(c)]).sum();
                            for c in 0..d.c {
                                dx[idx(c)] += scale * (probs[idx(c)] * tsum - t[idx(c)]);
                            }
                        }
                    }
                }
                if let Some(dt) = self.acc(grads, *target) {
                    for (a, &p) in dt.iter_mut().zip(probs) {
                        *a -= scale * p.max(T::min_positive_value()).ln();
                    }
                }
            }
            Op::Dice { probs, target, eps } => {
                let d = dims(&self.nodes[*probs].value).expect("4-D");
                let p = self.nodes[*probs].value.data();
                let t = self.nodes[*target].value.data();
                let (inter, sums) = dice_sums(p, t, d);
                let k = gd[0] / T::lit((d.c - 1) as f64);
                let two = T::lit(2.0);
                let hw = d.plane();
                // d(dice_c)/dp = (2t(S+ε) − (2I+ε)) / (S+ε)², symmetric in p and t.
                let coef = |c: usize, other: T| {
                    let s = sums[c] + *eps;
                    (two * other * s - (two * inter[c] + *eps)) / (s * s)
                };
                for (dst, src) in [(*probs, t), (*target, p)] {
                    if let Some(dv) = self.acc(grads, dst) {
                        for n in 0..d.n {
                            for c in 1..d.c {
                                let base = n * d.sample() + c * hw;
                                for j in base..base + hw {
                                    dv[j] -= k * coef(c, src[j]);
                                }
                            }
                        }
                    }
                }
            }
            Op::Add { a, b } => {
                for v in [*a, *b] {
                    if let Some(dv) = self.acc(grads, v) {
                        dv.iter_mut().zip(gd).for_each(|(x, &y)| *x += y);
                    }
                }
            }
            Op::Dot { a, b } => {
                for (v, other) in [(*a, *b), (*b, *a)] {
                    let ov = self.nodes[other].value.data().to_vec();
                    if let Some(dv) = self.acc(grads, v) {
                        dv.iter_mut().zip(&ov).for_each(|(x, &y)| *x += gd[0] * y);
                    }
                }
            }
        }
    }
}

fn softmax_channels<T: Scalar>(x: &[T], d: Dims) -> Vec<T> {
    let hw = d.plane();
    let mut y = vec![T::zero(); x.len()];
    for n in 0..d.n {
        for j in 0..hw {
            let idx = |c: usize| n * d.sample() + c * hw + j;
            let m = (0..d.c).map(|c| x[idx(c)]).fold(T::neg_infinity(), T::max);
            let mut s = T::zero();
            for c in 0..d.c {
                let e = (x[idx(c)] - m).exp();
                y[idx(c)] = e;
                s += e;
            }
            for c in 0..d.c {
                y[idx(c)] /= s;
            }
        }
    }
    y
}

/// Per-channel `Σ p·t` and `Σ p + Σ t` over batch and space.
fn dice_sums<T: Scalar>(p: &[T], t: &[T], d: Dims) -> (Vec<T>, Vec<T>) {
    let hw = d.plane();
    let mut inter = vec![T::zero(); d.c];
    let mut sums = vec![T::zero(); d.c];
    for n in 0..d.n {
        for c in 0..d.c {
            let base = n * d.sample() + c * hw;
            for j in base..base + hw {
                inter[c] += p[j] * t[j];
                sums[c] += p[j] + t[j];
            }
        }
    }
    (inter, sums)
}
