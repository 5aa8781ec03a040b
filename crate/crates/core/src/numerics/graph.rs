//! Dynamic per-forward-pass tape with reverse-mode differentiation.
//!
//! A [`Graph`] records every operation of one forward pass; `backward`
//! replays the tape in reverse and accumulates parameter gradients into the
//! owning [`ParamStore`]. Graphs are cheap to build and are dropped after
//! use; a graph must stay on one thread, parallelism happens above this
//! module.
//!
//! Reductions (matmul/conv inner products, softmax and norm statistics)
//! accumulate in f64 while storage stays f32.

use super::param::{ParamId, ParamStore};
use super::tensor::Tensor;

/// Handle to a node in a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var(usize);

enum Op {
    Leaf,
    Param(ParamId),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    MinElem(Var, Var),
    Scale(Var, f32),
    AddScalar(Var),
    Clamp(Var, f32, f32),
    MatMul(Var, Var),
    MatVec(Var, Var),
    Transpose(Var),
    Conv1d { x: Var, w: Var, b: Var, stride: usize, pad: usize },
    Softmax { x: Var, axis: usize },
    Sigmoid(Var),
    Tanh(Var),
    Silu(Var),
    Elu(Var),
    Relu(Var),
    Log(Var),
    Exp(Var),
    Abs(Var),
    LayerNorm { x: Var, gamma: Var, beta: Var },
    SumAll(Var),
    MeanAll(Var),
    MeanAxis0(Var),
    Concat0(Vec<Var>),
    Reshape(Var),
    Slice0 { x: Var, start: usize },
    UpsampleNearest { x: Var, out_len: usize },
    MulRows { x: Var, s: Var },
    AddRows { x: Var, s: Var },
    SumVars(Vec<Var>),
}

struct Node {
    value: Tensor,
    op: Op,
    needs_grad: bool,
}

/// Recorded operation graph for a single forward pass.
pub struct Graph {
    nodes: Vec<Node>,
}

const LN_EPS: f64 = 1e-5;

impl Graph {
    pub fn new() -> Self {
        Graph { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op, needs_grad: bool) -> Var {
        debug_assert!(value.is_finite(), "non-finite op output");
        self.nodes.push(Node { value, op, needs_grad });
        Var(self.nodes.len() - 1)
    }

    fn ng(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    /// Clones the node value out of the graph.
    pub fn detach(&self, v: Var) -> Tensor {
        self.nodes[v.0].value.clone()
    }

    fn val(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    /// Constant leaf; no gradient flows into it.
    pub fn input(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf, false)
    }

    /// Parameter leaf; backward routes its gradient to the store slot.
    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Var {
        self.push(store.value(id).clone(), Op::Param(id), true)
    }

    // ── elementwise and scalar ops ──────────────────────────────────────

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let t = zip_same(self.val(a), self.val(b), "add", |x, y| x + y);
        let g = self.ng(a) || self.ng(b);
        self.push(t, Op::Add(a, b), g)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let t = zip_same(self.val(a), self.val(b), "sub", |x, y| x - y);
        let g = self.ng(a) || self.ng(b);
        self.push(t, Op::Sub(a, b), g)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let t = zip_same(self.val(a), self.val(b), "mul", |x, y| x * y);
        let g = self.ng(a) || self.ng(b);
        self.push(t, Op::Mul(a, b), g)
    }

    pub fn min_elem(&mut self, a: Var, b: Var) -> Var {
        let t = zip_same(self.val(a), self.val(b), "min_elem", f32::min);
        let g = self.ng(a) || self.ng(b);
        self.push(t, Op::MinElem(a, b), g)
    }

    pub fn scale(&mut self, a: Var, c: f32) -> Var {
        let t = map(self.val(a), |x| c * x);
        let g = self.ng(a);
        self.push(t, Op::Scale(a, c), g)
    }

    pub fn neg(&mut self, a: Var) -> Var {
        self.scale(a, -1.0)
    }

    pub fn add_scalar(&mut self, a: Var, c: f32) -> Var {
        let t = map(self.val(a), |x| x + c);
        let g = self.ng(a);
        self.push(t, Op::AddScalar(a), g)
    }

    pub fn clamp(&mut self, a: Var, lo: f32, hi: f32) -> Var {
        assert!(lo <= hi, "clamp bounds reversed");
        let t = map(self.val(a), |x| x.clamp(lo, hi));
        let g = self.ng(a);
        self.push(t, Op::Clamp(a, lo, hi), g)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let t = map(self.val(a), sigmoid_f);
        let g = self.ng(a);
        self.push(t, Op::Sigmoid(a), g)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let t = map(self.val(a), f32::tanh);
        let g = self.ng(a);
        self.push(t, Op::Tanh(a), g)
    }

    /// Sigmoid-weighted linear unit x·σ(x).
    pub fn silu(&mut self, a: Var) -> Var {
        let t = map(self.val(a), |x| x * sigmoid_f(x));
        let g = self.ng(a);
        self.push(t, Op::Silu(a), g)
    }

    pub fn elu(&mut self, a: Var) -> Var {
        let t = map(self.val(a), |x| if x > 0.0 { x } else { x.exp() - 1.0 });
        let g = self.ng(a);
        self.push(t, Op::Elu(a), g)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let t = map(self.val(a), |x| x.max(0.0));
        let g = self.ng(a);
        self.push(t, Op::Relu(a), g)
    }

    /// Natural log; inputs must be strictly positive.
    pub fn log(&mut self, a: Var) -> Var {
        assert!(
            self.val(a).data().iter().all(|&x| x > 0.0),
            "log of non-positive value"
        );
        let t = map(self.val(a), f32::ln);
        let g = self.ng(a);
        self.push(t, Op::Log(a), g)
    }

    pub fn exp(&mut self, a: Var) -> Var {
        let t = map(self.val(a), f32::exp);
        let g = self.ng(a);
        self.push(t, Op::Exp(a), g)
    }

    pub fn abs(&mut self, a: Var) -> Var {
        let t = map(self.val(a), f32::abs);
        let g = self.ng(a);
        self.push(t, Op::Abs(a), g)
    }

    // ── linear algebra ──────────────────────────────────────────────────

    /// `[m,k] × [k,n] -> [m,n]`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let (ta, tb) = (self.val(a), self.val(b));
        assert_eq!(ta.rank(), 2, "matmul lhs must be 2-D, got {:?}", ta.shape());
        assert_eq!(tb.rank(), 2, "matmul rhs must be 2-D, got {:?}", tb.shape());
        let (m, k) = (ta.shape()[0], ta.shape()[1]);
        let (k2, n) = (tb.shape()[0], tb.shape()[1]);
        assert_eq!(k, k2, "matmul inner dims differ: {:?} × {:?}", ta.shape(), tb.shape());
        let t = matmul_raw(ta.data(), tb.data(), m, k, n);
        let g = self.ng(a) || self.ng(b);
        self.push(Tensor::matrix(m, n, t), Op::MatMul(a, b), g)
    }

    /// `[m,k] × [k] -> [m]`.
    pub fn matvec(&mut self, a: Var, x: Var) -> Var {
        let (ta, tx) = (self.val(a), self.val(x));
        assert_eq!(ta.rank(), 2, "matvec lhs must be 2-D, got {:?}", ta.shape());
        assert_eq!(tx.rank(), 1, "matvec rhs must be 1-D, got {:?}", tx.shape());
        let (m, k) = (ta.shape()[0], ta.shape()[1]);
        assert_eq!(k, tx.shape()[0], "matvec dims differ: {:?} × {:?}", ta.shape(), tx.shape());
        let mut out = vec![0.0f32; m];
        for i in 0..m {
            let row = &ta.data()[i * k..(i + 1) * k];
            let mut acc = 0.0f64;
            for (w, v) in row.iter().zip(tx.data()) {
                acc += *w as f64 * *v as f64;
            }
            out[i] = acc as f32;
        }
        let g = self.ng(a) || self.ng(x);
        self.push(Tensor::vector(&out), Op::MatVec(a, x), g)
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let ta = self.val(a);
        assert_eq!(ta.rank(), 2, "transpose needs 2-D, got {:?}", ta.shape());
        let (m, n) = (ta.shape()[0], ta.shape()[1]);
        let mut out = vec![0.0f32; m * n];
        for i in 0..m {
            for j in 0..n {
                out[j * m + i] = ta.data()[i * n + j];
            }
        }
        let g = self.ng(a);
        self.push(Tensor::matrix(n, m, out), Op::Transpose(a), g)
    }

    /// Cross-correlation over `[C_in, L]` with kernels `[C_out, C_in, W]`
    /// and per-channel bias `[C_out]`; output `[C_out, L']` with
    /// `L' = (L + 2·pad − W)/stride + 1`.
    pub fn conv1d(&mut self, x: Var, w: Var, b: Var, stride: usize, pad: usize) -> Var {
        assert!(stride >= 1, "conv1d stride must be >= 1");
        let (tx, tw, tb) = (self.val(x), self.val(w), self.val(b));
        assert_eq!(tx.rank(), 2, "conv1d input must be [C_in, L], got {:?}", tx.shape());
        assert_eq!(tw.rank(), 3, "conv1d kernels must be [C_out, C_in, W], got {:?}", tw.shape());
        let (c_in, l) = (tx.shape()[0], tx.shape()[1]);
        let (c_out, c_in2, width) = (tw.shape()[0], tw.shape()[1], tw.shape()[2]);
        assert_eq!(c_in, c_in2, "conv1d channel mismatch: input {:?}, kernels {:?}", tx.shape(), tw.shape());
        assert_eq!(tb.shape(), &[c_out], "conv1d bias must be [C_out]");
        assert!(
            width <= l + 2 * pad,
            "conv1d kernel width {} exceeds padded input {}",
            width,
            l + 2 * pad
        );
        let l_out = (l + 2 * pad - width) / stride + 1;
        let mut out = vec![0.0f32; c_out * l_out];
        for co in 0..c_out {
            for j in 0..l_out {
                let mut acc = tb.data()[co] as f64;
                let base = j * stride;
                for ci in 0..c_in {
                    let xrow = &tx.data()[ci * l..(ci + 1) * l];
                    let wrow = &tw.data()[(co * c_in + ci) * width..(co * c_in + ci + 1) * width];
                    for (t, &wv) in wrow.iter().enumerate() {
                        let i = base + t;
                        if i >= pad && i - pad < l {
                            acc += wv as f64 * xrow[i - pad] as f64;
                        }
                    }
                }
                out[co * l_out + j] = acc as f32;
            }
        }
        let g = self.ng(x) || self.ng(w) || self.ng(b);
        self.push(Tensor::matrix(c_out, l_out, out), Op::Conv1d { x, w, b, stride, pad }, g)
    }

    // ── normalization and reductions ───────────────────────────────────

    /// Max-subtracted softmax along `axis` (1-D or 2-D input).
    pub fn softmax(&mut self, x: Var, axis: usize) -> Var {
        let tx = self.val(x);
        assert!(axis < tx.rank(), "softmax axis {} out of range for {:?}", axis, tx.shape());
        let t = softmax_raw(tx, axis);
        let g = self.ng(x);
        self.push(t, Op::Softmax { x, axis }, g)
    }

    /// Normalizes each row (last axis) to zero mean / unit variance, then
    /// applies learned gain and shift.
    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var) -> Var {
        let (tx, tg, tb) = (self.val(x), self.val(gamma), self.val(beta));
        let n = *tx.shape().last().expect("layer_norm on empty shape");
        assert_eq!(tg.shape(), &[n], "layer_norm gamma must be [{n}]");
        assert_eq!(tb.shape(), &[n], "layer_norm beta must be [{n}]");
        let rows = tx.numel() / n;
        let mut out = vec![0.0f32; tx.numel()];
        for r in 0..rows {
            let xs = &tx.data()[r * n..(r + 1) * n];
            let (mean, inv) = row_norm_stats(xs);
            for j in 0..n {
                let xhat = ((xs[j] as f64 - mean) * inv) as f32;
                out[r * n + j] = tg.data()[j] * xhat + tb.data()[j];
            }
        }
        let t = Tensor::new(tx.shape().to_vec(), out);
        let g = self.ng(x) || self.ng(gamma) || self.ng(beta);
        self.push(t, Op::LayerNorm { x, gamma, beta }, g)
    }

    pub fn sum_all(&mut self, a: Var) -> Var {
        let s: f64 = self.val(a).data().iter().map(|&x| x as f64).sum();
        let g = self.ng(a);
        self.push(Tensor::scalar(s as f32), Op::SumAll(a), g)
    }

    pub fn mean_all(&mut self, a: Var) -> Var {
        let n = self.val(a).numel();
        let s: f64 = self.val(a).data().iter().map(|&x| x as f64).sum();
        let g = self.ng(a);
        self.push(Tensor::scalar((s / n as f64) as f32), Op::MeanAll(a), g)
    }

    /// `[m,n] -> [n]` mean over rows.
    pub fn mean_axis0(&mut self, a: Var) -> Var {
        let ta = self.val(a);
        assert_eq!(ta.rank(), 2, "mean_axis0 needs 2-D, got {:?}", ta.shape());
        let (m, n) = (ta.shape()[0], ta.shape()[1]);
        let mut out = vec![0.0f64; n];
        for i in 0..m {
            for j in 0..n {
                out[j] += ta.data()[i * n + j] as f64;
            }
        }
        let out: Vec<f32> = out.into_iter().map(|v| (v / m as f64) as f32).collect();
        let g = self.ng(a);
        self.push(Tensor::vector(&out), Op::MeanAxis0(a), g)
    }

    // ── shape ops ───────────────────────────────────────────────────────

    /// Concatenates along axis 0; trailing dimensions must agree.
    /// Row-major layout makes this plain buffer concatenation.
    pub fn concat0(&mut self, parts: &[Var]) -> Var {
        assert!(!parts.is_empty(), "concat0 of nothing");
        let first = self.val(parts[0]).shape().to_vec();
        let mut lead = 0usize;
        let mut data = Vec::new();
        for &p in parts {
            let tp = self.val(p);
            assert_eq!(tp.rank(), first.len(), "concat0 rank mismatch");
            assert_eq!(&tp.shape()[1..], &first[1..], "concat0 trailing dims differ");
            lead += tp.shape()[0];
            data.extend_from_slice(tp.data());
        }
        let mut shape = first;
        shape[0] = lead;
        let g = parts.iter().any(|&p| self.ng(p));
        self.push(Tensor::new(shape, data), Op::Concat0(parts.to_vec()), g)
    }

    /// Same buffer under a new shape (element count preserved).
    pub fn reshape(&mut self, x: Var, shape: Vec<usize>) -> Var {
        let t = self.val(x).clone().reshape(shape);
        let g = self.ng(x);
        self.push(t, Op::Reshape(x), g)
    }

    /// Axis-0 slice `[start, start+len)`; contiguous in row-major layout.
    pub fn slice0(&mut self, x: Var, start: usize, len: usize) -> Var {
        let tx = self.val(x);
        assert!(start + len <= tx.shape()[0], "slice0 out of range");
        let row: usize = tx.shape()[1..].iter().product();
        let data = tx.data()[start * row..(start + len) * row].to_vec();
        let mut shape = tx.shape().to_vec();
        shape[0] = len;
        let g = self.ng(x);
        self.push(Tensor::new(shape, data), Op::Slice0 { x, start }, g)
    }

    /// Nearest-neighbour ×2 upsample along length, trimmed to `out_len`.
    pub fn upsample_nearest(&mut self, x: Var, out_len: usize) -> Var {
        let tx = self.val(x);
        assert_eq!(tx.rank(), 2, "upsample needs [C, L], got {:?}", tx.shape());
        let (c, l) = (tx.shape()[0], tx.shape()[1]);
        assert!(out_len <= 2 * l && out_len > 0, "upsample target {out_len} invalid for L={l}");
        let mut out = vec![0.0f32; c * out_len];
        for ch in 0..c {
            for j in 0..out_len {
                out[ch * out_len + j] = tx.data()[ch * l + j / 2];
            }
        }
        let g = self.ng(x);
        self.push(Tensor::matrix(c, out_len, out), Op::UpsampleNearest { x, out_len }, g)
    }

    /// Scales row `c` of `[C, L]` by `s[c]` (per-channel gain).
    pub fn mul_rows(&mut self, x: Var, s: Var) -> Var {
        let (tx, ts) = (self.val(x), self.val(s));
        assert_eq!(tx.rank(), 2, "mul_rows needs [C, L]");
        assert_eq!(ts.shape(), &[tx.shape()[0]], "mul_rows scale must be [C]");
        let (c, l) = (tx.shape()[0], tx.shape()[1]);
        let mut out = vec![0.0f32; c * l];
        for ch in 0..c {
            let sv = ts.data()[ch];
            for j in 0..l {
                out[ch * l + j] = tx.data()[ch * l + j] * sv;
            }
        }
        let g = self.ng(x) || self.ng(s);
        self.push(Tensor::matrix(c, l, out), Op::MulRows { x, s }, g)
    }

    /// Adds `s[c]` to row `c` of `[C, L]` (per-channel shift).
    pub fn add_rows(&mut self, x: Var, s: Var) -> Var {
        let (tx, ts) = (self.val(x), self.val(s));
        assert_eq!(tx.rank(), 2, "add_rows needs [C, L]");
        assert_eq!(ts.shape(), &[tx.shape()[0]], "add_rows shift must be [C]");
        let (c, l) = (tx.shape()[0], tx.shape()[1]);
        let mut out = vec![0.0f32; c * l];
        for ch in 0..c {
            let sv = ts.data()[ch];
            for j in 0..l {
                out[ch * l + j] = tx.data()[ch * l + j] + sv;
            }
        }
        let g = self.ng(x) || self.ng(s);
        self.push(Tensor::matrix(c, l, out), Op::AddRows { x, s }, g)
    }

    /// Elementwise sum of same-shaped vars (batch loss accumulation).
    pub fn sum_vars(&mut self, parts: &[Var]) -> Var {
        assert!(!parts.is_empty(), "sum_vars of nothing");
        let shape = self.val(parts[0]).shape().to_vec();
        let mut acc = vec![0.0f64; self.val(parts[0]).numel()];
        for &p in parts {
            let tp = self.val(p);
            assert_eq!(tp.shape(), &shape[..], "sum_vars shape mismatch");
            for (a, &v) in acc.iter_mut().zip(tp.data()) {
                *a += v as f64;
            }
        }
        let data: Vec<f32> = acc.into_iter().map(|v| v as f32).collect();
        let g = parts.iter().any(|&p| self.ng(p));
        self.push(Tensor::new(shape, data), Op::SumVars(parts.to_vec()), g)
    }

    pub fn mean_vars(&mut self, parts: &[Var]) -> Var {
        let s = self.sum_vars(parts);
        self.scale(s, 1.0 / parts.len() as f32)
    }

    // ── composites ──────────────────────────────────────────────────────

    /// `W·x + b` for a 1-D input.
    pub fn affine_vec(&mut self, w: Var, x: Var, b: Var) -> Var {
        let wx = self.matvec(w, x);
        self.add(wx, b)
    }

    /// Squared L2 norm of (a − b) as a scalar.
    pub fn sq_diff_sum(&mut self, a: Var, b: Var) -> Var {
        let d = self.sub(a, b);
        let d2 = self.mul(d, d);
        self.sum_all(d2)
    }

    /// Dot product of two 1-D vars as a scalar.
    pub fn dot(&mut self, a: Var, b: Var) -> Var {
        let p = self.mul(a, b);
        self.sum_all(p)
    }

    // ── backward ────────────────────────────────────────────────────────

    /// Reverse pass from a scalar loss; parameter gradients accumulate into
    /// `store` (call `store.zero_grads()` between optimizer steps).
    ///
    /// Panics if `loss` is not scalar or is non-finite.
    pub fn backward(&mut self, loss: Var, store: &mut ParamStore) {
        assert_eq!(
            self.nodes[loss.0].value.numel(),
            1,
            "backward requires a scalar loss, got shape {:?}",
            self.nodes[loss.0].value.shape()
        );
        assert!(
            self.nodes[loss.0].value.item().is_finite(),
            "non-finite loss value"
        );
        let mut grads: Vec<Option<Vec<f32>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(vec![1.0]);

        for idx in (0..=loss.0).rev() {
            if !self.nodes[idx].needs_grad {
                continue;
            }
            let dy = match grads[idx].take() {
                Some(g) => g,
                None => continue,
            };
            match &self.nodes[idx].op {
                Op::Leaf => {}
                Op::Param(id) => store.accumulate_grad(*id, &dy),
                Op::Add(a, b) => {
                    let (a, b) = (*a, *b);
                    self.bump(&mut grads, a, &dy, |g, d| add_assign(g, d));
                    self.bump(&mut grads, b, &dy, |g, d| add_assign(g, d));
                }
                Op::Sub(a, b) => {
                    let (a, b) = (*a, *b);
                    self.bump(&mut grads, a, &dy, |g, d| add_assign(g, d));
                    self.bump(&mut grads, b, &dy, |g, d| sub_assign(g, d));
                }
                Op::Mul(a, b) => {
                    let (a, b) = (*a, *b);
                    let (va, vb) = (self.val(a).data().to_vec(), self.val(b).data().to_vec());
                    self.bump(&mut grads, a, &dy, |g, d| mul_add_assign(g, d, &vb));
                    self.bump(&mut grads, b, &dy, |g, d| mul_add_assign(g, d, &va));
                }
                Op::MinElem(a, b) => {
                    let (a, b) = (*a, *b);
                    let (va, vb) = (self.val(a).data().to_vec(), self.val(b).data().to_vec());
                    self.bump(&mut grads, a, &dy, |g, d| {
                        for i in 0..g.len() {
                            if va[i] <= vb[i] {
                                g[i] += d[i];
                            }
                        }
                    });
                    self.bump(&mut grads, b, &dy, |g, d| {
                        for i in 0..g.len() {
                            if vb[i] < va[i] {
                                g[i] += d[i];
                            }
                        }
                    });
                }
                Op::Scale(a, c) => {
                    let (a, c) = (*a, *c);
                    self.bump(&mut grads, a, &dy, |g, d| {
                        for i in 0..g.len() {
                            g[i] += c * d[i];
                        }
                    });
                }
                Op::AddScalar(a) => {
                    let a = *a;
                    self.bump(&mut grads, a, &dy, |g, d| add_assign(g, d));
                }
                Op::Clamp(a, lo, hi) => {
                    let (a, lo, hi) = (*a, *lo, *hi);
                    let vx = self.val(a).data().to_vec();
                    self.bump(&mut grads, a, &dy, |g, d| {
                        for i in 0..g.len() {
                            if vx[i] >= lo && vx[i] <= hi {
                                g[i] += d[i];
                            }
                        }
                    });
                }
                Op::MatMul(a, b) => {
                    let (a, b) = (*a, *b);
                    let (m, k) = (self.val(a).shape()[0], self.val(a).shape()[1]);
                    let n = self.val(b).shape()[1];
                    let va = self.val(a).data().to_vec();
                    let vb = self.val(b).data().to_vec();
                    // dA = dY · Bᵀ
                    self.bump(&mut grads, a, &dy, |g, d| {
                        for i in 0..m {
                            for p in 0..k {
                                let mut acc = 0.0f64;
                                for j in 0..n {
                                    acc += d[i * n + j] as f64 * vb[p * n + j] as f64;
                                }
                                g[i * k + p] += acc as f32;
                            }
                        }
                    });
                    // dB = Aᵀ · dY
                    self.bump(&mut grads, b, &dy, |g, d| {
                        for p in 0..k {
                            for j in 0..n {
                                let mut acc = 0.0f64;
                                for i in 0..m {
                                    acc += va[i * k + p] as f64 * d[i * n + j] as f64;
                                }
                                g[p * n + j] += acc as f32;
                            }
                        }
                    });
                }
                Op::MatVec(a, x) => {
                    let (a, x) = (*a, *x);
                    let (m, k) = (self.val(a).shape()[0], self.val(a).shape()[1]);
                    let va = self.val(a).data().to_vec();
                    let vx = self.val(x).data().to_vec();
                    self.bump(&mut grads, a, &dy, |g, d| {
                        for i in 0..m {
                            for p in 0..k {
                                g[i * k + p] += d[i] * vx[p];
                            }
                        }
                    });
                    self.bump(&mut grads, x, &dy, |g, d| {
                        for p in 0..k {
                            let mut acc = 0.0f64;
                            for i in 0..m {
                                acc += va[i * k + p] as f64 * d[i] as f64;
                            }
                            g[p] += acc as f32;
                        }
                    });
                }
                Op::Transpose(a) => {
                    let a = *a;
                    let (n, m) = {
                        let s = self.nodes[idx].value.shape();
                        (s[0], s[1])
                    };
                    self.bump(&mut grads, a, &dy, |g, d| {
                        for i in 0..n {
                            for j in 0..m {
                                g[j * n + i] += d[i * m + j];
                            }
                        }
                    });
                }
                Op::Conv1d { x, w, b, stride, pad } => {
                    let (x, w, b, stride, pad) = (*x, *w, *b, *stride, *pad);
                    let (c_in, l) = (self.val(x).shape()[0], self.val(x).shape()[1]);
                    let (c_out, _, width) =
                        (self.val(w).shape()[0], self.val(w).shape()[1], self.val(w).shape()[2]);
                    let l_out = self.nodes[idx].value.shape()[1];
                    let vx = self.val(x).data().to_vec();
                    let vw = self.val(w).data().to_vec();
                    self.bump(&mut grads, x, &dy, |g, d| {
                        for co in 0..c_out {
                            for j in 0..l_out {
                                let dv = d[co * l_out + j];
                                if dv == 0.0 {
                                    continue;
                                }
                                let base = j * stride;
                                for ci in 0..c_in {
                                    for t in 0..width {
                                        let i = base + t;
                                        if i >= pad && i - pad < l {
                                            g[ci * l + (i - pad)] +=
                                                dv * vw[(co * c_in + ci) * width + t];
                                        }
                                    }
                                }
                            }
                        }
                    });
                    self.bump(&mut grads, w, &dy, |g, d| {
                        for co in 0..c_out {
                            for j in 0..l_out {
                                let dv = d[co * l_out + j];
                                if dv == 0.0 {
                                    continue;
                                }
                                let base = j * stride;
                                for ci in 0..c_in {
                                    for t in 0..width {
                                        let i = base + t;
                                        if i >= pad && i - pad < l {
                                            g[(co * c_in + ci) * width + t] +=
                                                dv * vx[ci * l + (i - pad)];
                                        }
                                    }
                                }
                            }
                        }
                    });
                    self.bump(&mut grads, b, &dy, |g, d| {
                        for co in 0..c_out {
                            let mut acc = 0.0f64;
                            for j in 0..l_out {
                                acc += d[co * l_out + j] as f64;
                            }
                            g[co] += acc as f32;
                        }
                    });
                }
                Op::Softmax { x, axis } => {
                    let (x, axis) = (*x, *axis);
                    let y = self.nodes[idx].value.clone();
                    self.bump(&mut grads, x, &dy, |g, d| softmax_backward(&y, d, g, axis));
                }
                Op::Sigmoid(a) => {
                    let a = *a;
                    let y = self.nodes[idx].value.data().to_vec();
                    self.bump(&mut grads, a, &dy, |g, d| {
                        for i in 0..g.len() {
                            g[i] += d[i] * y[i] * (1.0 - y[i]);
                        }
                    });
                }
                Op::Tanh(a) => {
                    let a = *a;
                    let y = self.nodes[idx].value.data().to_vec();
                    self.bump(&mut grads, a, &dy, |g, d| {
                        for i in 0..g.len() {
                            g[i] += d[i] * (1.0 - y[i] * y[i]);
                        }
                    });
                }
                Op::Silu(a) => {
                    let a = *a;
                    let vx = self.val(a).data().to_vec();
                    self.bump(&mut grads, a, &dy, |g, d| {
                        for i in 0..g.len() {
                            let s = sigmoid_f(vx[i]);
                            g[i] += d[i] * (s + vx[i] * s * (1.0 - s));
                        }
                    });
                }
                Op::Elu(a) => {
                    let a = *a;
                    let vx = self.val(a).data().to_vec();
                    let y = self.nodes[idx].value.data().to_vec();
                    self.bump(&mut grads, a, &dy, |g, d| {
                        for i in 0..g.len() {
                            g[i] += d[i] * if vx[i] > 0.0 { 1.0 } else { y[i] + 1.0 };
                        }
                    });
                }
                Op::Relu(a) => {
                    let a = *a;
                    let vx = self.val(a).data().to_vec();
                    self.bump(&mut grads, a, &dy, |g, d| {
                        for i in 0..g.len() {
                            if vx[i] > 0.0 {
                                g[i] += d[i];
                            }
                        }
                    });
                }
                Op::Log(a) => {
                    let a = *a;
                    let vx = self.val(a).data().to_vec();
                    self.bump(&mut grads, a, &dy, |g, d| {
                        for i in 0..g.len() {
                            g[i] += d[i] / vx[i];
                        }
                    });
                }
                Op::Exp(a) => {
                    let a = *a;
                    let y = self.nodes[idx].value.data().to_vec();
                    self.bump(&mut grads, a, &dy, |g, d| {
                        for i in 0..g.len() {
                            g[i] += d[i] * y[i];
                        }
                    });
                }
                Op::Abs(a) => {
                    let a = *a;
                    let vx = self.val(a).data().to_vec();
                    self.bump(&mut grads, a, &dy, |g, d| {
                        for i in 0..g.len() {
                            g[i] += d[i] * vx[i].signum() * if vx[i] == 0.0 { 0.0 } else { 1.0 };
                        }
                    });
                }
                Op::LayerNorm { x, gamma, beta } => {
                    let (x, gamma, beta) = (*x, *gamma, *beta);
                    let tx = self.val(x).clone();
                    let tg = self.val(gamma).data().to_vec();
                    let n = *tx.shape().last().unwrap();
                    let rows = tx.numel() / n;
                    self.bump(&mut grads, x, &dy, |g, d| {
                        for r in 0..rows {
                            let xs = &tx.data()[r * n..(r + 1) * n];
                            let (mean, inv) = row_norm_stats(xs);
                            let mut mean_dxhat = 0.0f64;
                            let mut mean_dxhat_xhat = 0.0f64;
                            let mut xhat = vec![0.0f64; n];
                            for j in 0..n {
                                xhat[j] = (xs[j] as f64 - mean) * inv;
                                let dxh = d[r * n + j] as f64 * tg[j] as f64;
                                mean_dxhat += dxh;
                                mean_dxhat_xhat += dxh * xhat[j];
                            }
                            mean_dxhat /= n as f64;
                            mean_dxhat_xhat /= n as f64;
                            for j in 0..n {
                                let dxh = d[r * n + j] as f64 * tg[j] as f64;
                                g[r * n + j] +=
                                    (inv * (dxh - mean_dxhat - xhat[j] * mean_dxhat_xhat)) as f32;
                            }
                        }
                    });
                    let tx2 = tx.clone();
                    self.bump(&mut grads, gamma, &dy, |g, d| {
                        for r in 0..rows {
                            let xs = &tx2.data()[r * n..(r + 1) * n];
                            let (mean, inv) = row_norm_stats(xs);
                            for j in 0..n {
                                let xhat = (xs[j] as f64 - mean) * inv;
                                g[j] += d[r * n + j] * xhat as f32;
                            }
                        }
                    });
                    self.bump(&mut grads, beta, &dy, |g, d| {
                        for r in 0..rows {
                            for j in 0..n {
                                g[j] += d[r * n + j];
                            }
                        }
                    });
                }
                Op::SumAll(a) => {
                    let a = *a;
                    self.bump(&mut grads, a, &dy, |g, d| {
                        for gi in g.iter_mut() {
                            *gi += d[0];
                        }
                    });
                }
                Op::MeanAll(a) => {
                    let a = *a;
                    let n = self.val(a).numel() as f32;
                    self.bump(&mut grads, a, &dy, |g, d| {
                        for gi in g.iter_mut() {
                            *gi += d[0] / n;
                        }
                    });
                }
                Op::MeanAxis0(a) => {
                    let a = *a;
                    let (m, n) = (self.val(a).shape()[0], self.val(a).shape()[1]);
                    self.bump(&mut grads, a, &dy, |g, d| {
                        for i in 0..m {
                            for j in 0..n {
                                g[i * n + j] += d[j] / m as f32;
                            }
                        }
                    });
                }
                Op::Concat0(parts) => {
                    let parts = parts.clone();
                    let mut offset = 0usize;
                    for p in parts {
                        let len = self.val(p).numel();
                        let seg = dy[offset..offset + len].to_vec();
                        self.bump(&mut grads, p, &seg, |g, d| add_assign(g, d));
                        offset += len;
                    }
                }
                Op::Reshape(a) => {
                    let a = *a;
                    self.bump(&mut grads, a, &dy, |g, d| add_assign(g, d));
                }
                Op::Slice0 { x, start } => {
                    let (x, start) = (*x, *start);
                    let row: usize = self.val(x).shape()[1..].iter().product();
                    self.bump(&mut grads, x, &dy, |g, d| {
                        let off = start * row;
                        for (i, &dv) in d.iter().enumerate() {
                            g[off + i] += dv;
                        }
                    });
                }
                Op::UpsampleNearest { x, out_len } => {
                    let (x, out_len) = (*x, *out_len);
                    let (c, l) = (self.val(x).shape()[0], self.val(x).shape()[1]);
                    self.bump(&mut grads, x, &dy, |g, d| {
                        for ch in 0..c {
                            for j in 0..out_len {
                                g[ch * l + j / 2] += d[ch * out_len + j];
                            }
                        }
                    });
                }
                Op::MulRows { x, s } => {
                    let (x, s) = (*x, *s);
                    let (c, l) = (self.val(x).shape()[0], self.val(x).shape()[1]);
                    let vx = self.val(x).data().to_vec();
                    let vs = self.val(s).data().to_vec();
                    self.bump(&mut grads, x, &dy, |g, d| {
                        for ch in 0..c {
                            for j in 0..l {
                                g[ch * l + j] += d[ch * l + j] * vs[ch];
                            }
                        }
                    });
                    self.bump(&mut grads, s, &dy, |g, d| {
                        for ch in 0..c {
                            let mut acc = 0.0f64;
                            for j in 0..l {
                                acc += d[ch * l + j] as f64 * vx[ch * l + j] as f64;
                            }
                            g[ch] += acc as f32;
                        }
                    });
                }
                Op::AddRows { x, s } => {
                    let (x, s) = (*x, *s);
                    let (c, l) = (self.val(x).shape()[0], self.val(x).shape()[1]);
                    self.bump(&mut grads, x, &dy, |g, d| add_assign(g, d));
                    self.bump(&mut grads, s, &dy, |g, d| {
                        for ch in 0..c {
                            let mut acc = 0.0f64;
                            for j in 0..l {
                                acc += d[ch * l + j] as f64;
                            }
                            g[ch] += acc as f32;
                        }
                    });
                }
                Op::SumVars(parts) => {
                    let parts = parts.clone();
                    for p in parts {
                        self.bump(&mut grads, p, &dy, |g, d| add_assign(g, d));
                    }
                }
            }
        }
    }

    fn bump<F: FnOnce(&mut [f32], &[f32])>(
        &self,
        grads: &mut [Option<Vec<f32>>],
        target: Var,
        dy: &[f32],
        f: F,
    ) {
        if !self.nodes[target.0].needs_grad {
            return;
        }
        let slot = grads[target.0]
            .get_or_insert_with(|| vec![0.0; self.nodes[target.0].value.numel()]);
        f(slot, dy);
    }
}

impl Default for Graph {
    fn default() -> Self {
        Self::new()
    }
}

// ── raw kernels and helpers ─────────────────────────────────────────────

fn sigmoid_f(x: f32) -> f32 {
    1.0 / (1.0 + (-x).exp())
}

fn map(t: &Tensor, f: impl Fn(f32) -> f32) -> Tensor {
    Tensor::new(t.shape().to_vec(), t.data().iter().map(|&x| f(x)).collect())
}

fn zip_same(a: &Tensor, b: &Tensor, opname: &str, f: impl Fn(f32, f32) -> f32) -> Tensor {
    assert_eq!(
        a.shape(),
        b.shape(),
        "{opname} shape mismatch: {:?} vs {:?}",
        a.shape(),
        b.shape()
    );
    Tensor::new(
        a.shape().to_vec(),
        a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect(),
    )
}

fn add_assign(g: &mut [f32], d: &[f32]) {
    for (gi, di) in g.iter_mut().zip(d) {
        *gi += di;
    }
}

fn sub_assign(g: &mut [f32], d: &[f32]) {
    for (gi, di) in g.iter_mut().zip(d) {
        *gi -= di;
    }
}

fn mul_add_assign(g: &mut [f32], d: &[f32], other: &[f32]) {
    for i in 0..g.len() {
        g[i] += d[i] * other[i];
    }
}

fn matmul_raw(a: &[f32], b: &[f32], m: usize, k: usize, n: usize) -> Vec<f32> {
    let mut out = vec![0.0f32; m * n];
    let mut acc = vec![0.0f64; n];
    for i in 0..m {
        acc.iter_mut().for_each(|v| *v = 0.0);
        for p in 0..k {
            let a_ip = a[i * k + p] as f64;
            if a_ip == 0.0 {
                continue;
            }
            let brow = &b[p * n..(p + 1) * n];
            for j in 0..n {
                acc[j] += a_ip * brow[j] as f64;
            }
        }
        for j in 0..n {
            out[i * n + j] = acc[j] as f32;
        }
    }
    out
}

fn row_norm_stats(xs: &[f32]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean: f64 = xs.iter().map(|&v| v as f64).sum::<f64>() / n;
    let var: f64 = xs.iter().map(|&v| (v as f64 - mean).powi(2)).sum::<f64>() / n;
    (mean, 1.0 / (var + LN_EPS).sqrt())
}

/// Max-subtracted softmax over `axis` of a 1-D or 2-D tensor.
pub(crate) fn softmax_raw(t: &Tensor, axis: usize) -> Tensor {
    match (t.rank(), axis) {
        (1, 0) => {
            let mut out = t.data().to_vec();
            softmax_lane(&mut out);
            Tensor::vector(&out)
        }
        (2, 1) => {
            let (m, n) = (t.shape()[0], t.shape()[1]);
            let mut out = t.data().to_vec();
            for i in 0..m {
                softmax_lane(&mut out[i * n..(i + 1) * n]);
            }
            Tensor::matrix(m, n, out)
        }
        (2, 0) => {
            let (m, n) = (t.shape()[0], t.shape()[1]);
            let mut out = vec![0.0f32; m * n];
            for j in 0..n {
                let mut lane: Vec<f32> = (0..m).map(|i| t.data()[i * n + j]).collect();
                softmax_lane(&mut lane);
                for i in 0..m {
                    out[i * n + j] = lane[i];
                }
            }
            Tensor::matrix(m, n, out)
        }
        (r, a) => panic!("softmax unsupported for rank {r} axis {a}"),
    }
}

fn softmax_lane(xs: &mut [f32]) {
    let max = xs.iter().cloned().fold(f32::NEG_INFINITY, f32::max);
    let mut sum = 0.0f64;
    for x in xs.iter_mut() {
        *x = (*x - max).exp();
        sum += *x as f64;
    }
    for x in xs.iter_mut() {
        *x = (*x as f64 / sum) as f32;
    }
}

fn softmax_backward(y: &Tensor, dy: &[f32], g: &mut [f32], axis: usize) {
    match (y.rank(), axis) {
        (1, 0) => softmax_lane_backward(y.data(), dy, g, 0, 1, y.numel()),
        (2, 1) => {
            let (m, n) = (y.shape()[0], y.shape()[1]);
            for i in 0..m {
                softmax_lane_backward(y.data(), dy, g, i * n, 1, n);
            }
        }
        (2, 0) => {
            let (m, n) = (y.shape()[0], y.shape()[1]);
            for j in 0..n {
                softmax_lane_backward(y.data(), dy, g, j, n, m);
            }
        }
        _ => unreachable!(),
    }
}

fn softmax_lane_backward(
    y: &[f32],
    dy: &[f32],
    g: &mut [f32],
    base: usize,
    stride: usize,
    len: usize,
) {
    let mut dot = 0.0f64;
    for t in 0..len {
        let idx = base + t * stride;
        dot += y[idx] as f64 * dy[idx] as f64;
    }
    for t in 0..len {
        let idx = base + t * stride;
        g[idx] += y[idx] * (dy[idx] - dot as f32);
    }
}
