//! Tape of tensor operations with reverse-mode differentiation.
//!
//! A [`Graph`] borrows a [`ParamStore`]; parameters enter the tape once
//! each (memoized) and every op appends a node holding its forward value.
//! [`Graph::backward`] walks the tape in reverse and returns [`Grads`]
//! aligned with the store.

use super::functional::{relu, sigmoid, softmax_in_place};
use super::{Grads, ParamId, ParamStore, Tensor};
use crate::error::{ensure, Result};
use crate::Scalar;

/// Handle to a node on the tape.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Padding {
    /// Output has the input length; zeros outside the input.
    Same,
    /// Only positions where the kernel fits entirely.
    Valid,
}

const LN_EPS: f64 = 1e-5;

enum Op<T> {
    Leaf,
    Param(ParamId),
    Linear {
        x: Var,
        w: Var,
        b: Option<Var>,
    },
    Conv1d {
        x: Var,
        w: Var,
        b: Option<Var>,
        kernel: usize,
        pad_left: usize,
        cols: Vec<T>,
    },
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    MulConst(Var, Vec<T>),
    Affine(Var, T),
    AddN(Vec<Var>),
    ScaleBy {
        x: Var,
        s: Var,
    },
    Relu(Var),
    Sigmoid(Var),
    SoftmaxRows(Var),
    LayerNorm {
        x: Var,
        gain: Var,
        bias: Var,
        xhat: Vec<T>,
        inv_std: Vec<T>,
    },
    MeanCols(Var),
    RepeatCols(Var),
    StackRows(Vec<Var>),
    SliceRows {
        x: Var,
        start: usize,
    },
    Attention {
        q: Var,
        k: Var,
        v: Var,
        heads: usize,
        probs: Vec<T>,
    },
    Sum(Var),
    CompressedL1 {
        mask_re: Var,
        mask_im: Var,
        ref_re: Vec<T>,
        ref_im: Vec<T>,
        alpha: T,
    },
}

struct Node<T> {
    value: Option<Tensor<T>>,
    op: Op<T>,
}

pub struct Graph<'p, T: Scalar> {
    params: &'p ParamStore<T>,
    param_vars: Vec<Option<Var>>,
    nodes: Vec<Node<T>>,
}

impl<'p, T: Scalar> Graph<'p, T> {
    pub fn new(params: &'p ParamStore<T>) -> Self {
        Self {
            params,
            param_vars: vec![None; params.len()],
            nodes: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        match &self.nodes[v.0] {
            Node {
                op: Op::Param(id), ..
            } => self.params.get(*id),
            Node { value: Some(t), .. } => t,
            _ => unreachable!("node without value"),
        }
    }

    pub fn data(&self, v: Var) -> &[T] {
        &self.value(v).data
    }

    pub fn scalar_value(&self, v: Var) -> T {
        self.data(v)[0]
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>) -> Var {
        self.nodes.push(Node {
            value: Some(value),
            op,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn constant(&mut self, value: Tensor<T>) -> Var {
        self.push(value, Op::Leaf)
    }

    pub fn scalar(&mut self, v: T) -> Var {
        self.constant(Tensor::scalar(v))
    }

    pub fn param(&mut self, id: ParamId) -> Var {
        if let Some(v) = self.param_vars[id.0] {
            return v;
        }
        self.nodes.push(Node {
            value: None,
            op: Op::Param(id),
        });
        let v = Var(self.nodes.len() - 1);
        self.param_vars[id.0] = Some(v);
        v
    }

    /// `x · Wᵀ + b` for `x: [n, in]`, `W: [out, in]`, `b: [1, out]`.
    pub fn linear(&mut self, x: Var, w: Var, b: Option<Var>) -> Result<Var> {
        let (n, din) = self.value(x).dims2();
        let (dout, win) = self.value(w).dims2();
        ensure!(din == win, "linear: input width {din} vs weight width {win}");
        let mut out = vec![T::zero(); n * dout];
        if let Some(b) = b {
            let bias = self.data(b);
            ensure!(bias.len() == dout, "linear: bias length {} vs {dout}", bias.len());
            for row in out.chunks_mut(dout) {
                row.copy_from_slice(bias);
            }
        }
        T::gemm(n, din, dout, self.data(x), false, self.data(w), true, T::one(), &mut out);
        Ok(self.push(Tensor::new(vec![n, dout], out), Op::Linear { x, w, b }))
    }

    /// Cross-correlation along time. `x: [c_in, t]`, `w: [c_out, c_in, k]`,
    /// `b: [1, c_out]`.
    pub fn conv1d(&mut self, x: Var, w: Var, b: Option<Var>, padding: Padding) -> Result<Var> {
        let (cin, tin) = self.value(x).dims2();
        let wshape = self.value(w).shape.clone();
        ensure!(wshape.len() == 3, "conv1d: weight must be [c_out, c_in, k]");
        let (cout, wcin, kernel) = (wshape[0], wshape[1], wshape[2]);
        ensure!(wcin == cin, "conv1d: input has {cin} channels, weight expects {wcin}");
        ensure!(kernel % 2 == 1, "conv1d: kernel size must be odd, got {kernel}");
        let (pad_left, tout) = match padding {
            Padding::Same => (kernel / 2, tin),
            Padding::Valid => {
                ensure!(tin >= kernel, "conv1d: input length {tin} shorter than kernel {kernel}");
                (0, tin - kernel + 1)
            }
        };
        let xd = self.data(x);
        let rows = cin * kernel;
        let mut cols = vec![T::zero(); rows * tout];
        for ci in 0..cin {
            let xrow = &xd[ci * tin..(ci + 1) * tin];
            for k in 0..kernel {
                let dst = &mut cols[(ci * kernel + k) * tout..(ci * kernel + k + 1) * tout];
                for (t, slot) in dst.iter_mut().enumerate() {
                    let src = t + k;
                    if src >= pad_left && src - pad_left < tin {
                        *slot = xrow[src - pad_left];
                    }
                }
            }
        }
        let mut out = vec![T::zero(); cout * tout];
        if let Some(b) = b {
            let bias = self.data(b);
            ensure!(bias.len() == cout, "conv1d: bias length {} vs {cout}", bias.len());
            for (row, &bv) in out.chunks_mut(tout).zip(bias) {
                row.fill(bv);
            }
        }
        T::gemm(cout, rows, tout, self.data(w), false, &cols, false, T::one(), &mut out);
        Ok(self.push(
            Tensor::new(vec![cout, tout], out),
            Op::Conv1d {
                x,
                w,
                b,
                kernel,
                pad_left,
                cols,
            },
        ))
    }

    fn same_shape(&self, a: Var, b: Var, what: &str) -> Result<()> {
        ensure!(
            self.value(a).shape == self.value(b).shape,
            "{what}: shapes {:?} and {:?} differ",
            self.value(a).shape,
            self.value(b).shape
        );
        Ok(())
    }

    fn zip_map(&mut self, a: Var, b: Var, f: impl Fn(T, T) -> T, op: Op<T>) -> Var {
        let data = self
            .data(a)
            .iter()
            .zip(self.data(b))
            .map(|(&x, &y)| f(x, y))
            .collect();
        let shape = self.value(a).shape.clone();
        self.push(Tensor::new(shape, data), op)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "add")?;
        Ok(self.zip_map(a, b, |x, y| x + y, Op::Add(a, b)))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "sub")?;
        Ok(self.zip_map(a, b, |x, y| x - y, Op::Sub(a, b)))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "mul")?;
        Ok(self.zip_map(a, b, |x, y| x * y, Op::Mul(a, b)))
    }

    /// Element-wise product with a constant of the same size (e.g. a
    /// dropout mask).
    pub fn mul_const(&mut self, a: Var, c: Vec<T>) -> Result<Var> {
        ensure!(c.len() == self.value(a).len(), "mul_const: length mismatch");
        let data = self.data(a).iter().zip(&c).map(|(&x, &y)| x * y).collect();
        let shape = self.value(a).shape.clone();
        Ok(self.push(Tensor::new(shape, data), Op::MulConst(a, c)))
    }

    /// `scale · a + shift`.
    pub fn affine(&mut self, a: Var, scale: T, shift: T) -> Var {
        let data = self.data(a).iter().map(|&x| scale * x + shift).collect();
        let shape = self.value(a).shape.clone();
        self.push(Tensor::new(shape, data), Op::Affine(a, scale))
    }

    pub fn add_n(&mut self, xs: &[Var]) -> Result<Var> {
        ensure!(!xs.is_empty(), "add_n: no inputs");
        for &x in &xs[1..] {
            self.same_shape(xs[0], x, "add_n")?;
        }
        let mut acc = self.data(xs[0]).to_vec();
        for &x in &xs[1..] {
            for (a, &b) in acc.iter_mut().zip(self.data(x)) {
                *a += b;
            }
        }
        let shape = self.value(xs[0]).shape.clone();
        Ok(self.push(Tensor::new(shape, acc), Op::AddN(xs.to_vec())))
    }

    /// `s · x` where `s` holds a single value.
    pub fn scale_by(&mut self, x: Var, s: Var) -> Result<Var> {
        ensure!(self.value(s).len() == 1, "scale_by: scale must hold one value");
        let sv = self.scalar_value(s);
        let data = self.data(x).iter().map(|&v| v * sv).collect();
        let shape = self.value(x).shape.clone();
        Ok(self.push(Tensor::new(shape, data), Op::ScaleBy { x, s }))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let data = self.data(a).iter().map(|&x| relu(x)).collect();
        let shape = self.value(a).shape.clone();
        self.push(Tensor::new(shape, data), Op::Relu(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let data = self.data(a).iter().map(|&x| sigmoid(x)).collect();
        let shape = self.value(a).shape.clone();
        self.push(Tensor::new(shape, data), Op::Sigmoid(a))
    }

    pub fn softmax_rows(&mut self, a: Var) -> Var {
        let (_, c) = self.value(a).dims2();
        let mut data = self.data(a).to_vec();
        for row in data.chunks_mut(c) {
            softmax_in_place(row);
        }
        let shape = self.value(a).shape.clone();
        self.push(Tensor::new(shape, data), Op::SoftmaxRows(a))
    }

    /// Row-wise `(x - mean) / sqrt(var + 1e-5) · gain + bias`.
    pub fn layer_norm(&mut self, x: Var, gain: Var, bias: Var) -> Result<Var> {
        let (n, d) = self.value(x).dims2();
        ensure!(
            self.value(gain).len() == d && self.value(bias).len() == d,
            "layer_norm: gain/bias must have {d} values"
        );
        let xd = self.data(x);
        let (g, b) = (self.data(gain), self.data(bias));
        let mut xhat = vec![T::zero(); n * d];
        let mut inv_std = vec![T::zero(); n];
        let mut out = vec![T::zero(); n * d];
        let dt = T::lit(d as f64);
        for r in 0..n {
            let row = &xd[r * d..(r + 1) * d];
            let mean = row.iter().copied().sum::<T>() / dt;
            let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / dt;
            let inv = T::one() / (var + T::lit(LN_EPS)).sqrt();
            inv_std[r] = inv;
            for i in 0..d {
                let xh = (row[i] - mean) * inv;
                xhat[r * d + i] = xh;
                out[r * d + i] = xh * g[i] + b[i];
            }
        }
        Ok(self.push(
            Tensor::new(vec![n, d], out),
            Op::LayerNorm {
                x,
                gain,
                bias,
                xhat,
                inv_std,
            },
        ))
    }

    /// Mean over columns: `[r, c] -> [1, r]`.
    pub fn mean_cols(&mut self, x: Var) -> Var {
        let (r, c) = self.value(x).dims2();
        let inv = T::one() / T::lit(c as f64);
        let data = self
            .data(x)
            .chunks(c)
            .map(|row| row.iter().copied().sum::<T>() * inv)
            .collect();
        debug_assert_eq!(r, self.value(x).len() / c);
        self.push(Tensor::new(vec![1, r], data), Op::MeanCols(x))
    }

    /// Broadcast a `[1, r]` row into `cols` columns: `[r, cols]`.
    pub fn repeat_cols(&mut self, x: Var, cols: usize) -> Var {
        let src = self.data(x);
        let r = src.len();
        let mut data = Vec::with_capacity(r * cols);
        for &v in src {
            data.extend(std::iter::repeat_n(v, cols));
        }
        self.push(Tensor::new(vec![r, cols], data), Op::RepeatCols(x))
    }

    /// Stack `[1, d]` rows into `[k, d]`.
    pub fn stack_rows(&mut self, rows: &[Var]) -> Result<Var> {
        ensure!(!rows.is_empty(), "stack_rows: no rows");
        let d = self.value(rows[0]).len();
        let mut data = Vec::with_capacity(rows.len() * d);
        for &r in rows {
            ensure!(self.value(r).len() == d, "stack_rows: ragged rows");
            data.extend_from_slice(self.data(r));
        }
        Ok(self.push(Tensor::new(vec![rows.len(), d], data), Op::StackRows(rows.to_vec())))
    }

    pub fn slice_rows(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let (r, c) = self.value(x).dims2();
        ensure!(start + len <= r, "slice_rows: {start}+{len} exceeds {r} rows");
        let data = self.data(x)[start * c..(start + len) * c].to_vec();
        Ok(self.push(Tensor::new(vec![len, c], data), Op::SliceRows { x, start }))
    }

    /// Multi-head scaled dot-product attention of one query row over `k`
    /// key/value rows. Inputs are already projected; scale is
    /// `1/sqrt(d / heads)`.
    pub fn attention(&mut self, q: Var, k: Var, v: Var, heads: usize) -> Result<Var> {
        let (qn, d) = self.value(q).dims2();
        let (kn, kd) = self.value(k).dims2();
        let (vn, vd) = self.value(v).dims2();
        ensure!(qn == 1, "attention: expected a single query row");
        ensure!(kn >= 1, "attention: needs at least one key");
        ensure!(kd == d && vd == d && vn == kn, "attention: shape mismatch");
        ensure!(heads >= 1 && d % heads == 0, "attention: {d} not divisible by {heads} heads");
        let dh = d / heads;
        let scale = T::one() / T::lit(dh as f64).sqrt();
        let (qd, kd, vd) = (self.data(q), self.data(k), self.data(v));
        let mut probs = vec![T::zero(); heads * kn];
        let mut out = vec![T::zero(); d];
        for h in 0..heads {
            let qh = &qd[h * dh..(h + 1) * dh];
            let p = &mut probs[h * kn..(h + 1) * kn];
            for j in 0..kn {
                p[j] = crate::dot(qh, &kd[j * d + h * dh..j * d + (h + 1) * dh]) * scale;
            }
            softmax_in_place(p);
            for j in 0..kn {
                let vj = &vd[j * d + h * dh..j * d + (h + 1) * dh];
                for (o, &vv) in out[h * dh..(h + 1) * dh].iter_mut().zip(vj) {
                    *o += p[j] * vv;
                }
            }
        }
        Ok(self.push(
            Tensor::new(vec![1, d], out),
            Op::Attention {
                q,
                k,
                v,
                heads,
                probs,
            },
        ))
    }

    pub fn attention_weights(&self, v: Var) -> Option<&[T]> {
        match &self.nodes[v.0].op {
            Op::Attention { probs, .. } => Some(probs),
            _ => None,
        }
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.data(x).iter().copied().sum();
        self.push(Tensor::scalar(s), Op::Sum(x))
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let n = self.value(x).len();
        let s = self.sum(x);
        self.affine(s, T::one() / T::lit(n as f64), T::zero())
    }

    /// `Σ | |Ŝ|^α − target |` with `Re Ŝ = mask_re ⊙ ref_re` and
    /// `Im Ŝ = mask_im ⊙ ref_im`; `target` holds `|S|^α`.
    pub fn compressed_l1(
        &mut self,
        mask_re: Var,
        mask_im: Var,
        ref_re: Vec<T>,
        ref_im: Vec<T>,
        target: &[T],
        alpha: T,
    ) -> Result<Var> {
        let n = self.value(mask_re).len();
        ensure!(
            self.value(mask_im).len() == n
                && ref_re.len() == n
                && ref_im.len() == n
                && target.len() == n,
            "compressed_l1: length mismatch"
        );
        let (mr, mi) = (self.data(mask_re), self.data(mask_im));
        let mut total = T::zero();
        for i in 0..n {
            let (a, b) = (mr[i] * ref_re[i], mi[i] * ref_im[i]);
            let mag = (a * a + b * b).sqrt();
            total += (mag.powf(alpha) - target[i]).abs();
        }
        let mut packed = ref_re;
        packed.extend_from_slice(target);
        Ok(self.push(
            Tensor::scalar(total),
            Op::CompressedL1 {
                mask_re,
                mask_im,
                ref_re: packed,
                ref_im,
                alpha,
            },
        ))
    }

    /// Reverse-mode pass from a scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<Grads<T>> {
        ensure!(
            self.value(loss).len() == 1,
            "backward: loss must be a scalar, got shape {:?}",
            self.value(loss).shape
        );
        let mut grads: Vec<Option<Vec<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(vec![T::one()]);
        let mut out = Grads::zeros_like(self.params);
        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            self.backprop_node(idx, &g, &mut grads, &mut out);
        }
        Ok(out)
    }

    fn backprop_node(
        &self,
        idx: usize,
        g: &[T],
        grads: &mut [Option<Vec<T>>],
        out: &mut Grads<T>,
    ) {
        let node = &self.nodes[idx];
        match &node.op {
            Op::Leaf => {}
            Op::Param(id) => {
                for (a, &b) in out.get_mut(*id).iter_mut().zip(g) {
                    *a += b;
                }
            }
            Op::Linear { x, w, b } => {
                let (n, din) = self.value(*x).dims2();
                let dout = g.len() / n;
                let gx = acc(grads, *x, n * din);
                T::gemm(n, dout, din, g, false, self.data(*w), false, T::one(), gx);
                let gw = acc(grads, *w, dout * din);
                T::gemm(dout, n, din, g, true, self.data(*x), false, T::one(), gw);
                if let Some(b) = b {
                    let gb = acc(grads, *b, dout);
                    for row in g.chunks(dout) {
                        for (a, &v) in gb.iter_mut().zip(row) {
                            *a += v;
                        }
                    }
                }
            }
            Op::Conv1d {
                x,
                w,
                b,
                kernel,
                pad_left,
                cols,
            } => {
                let (cin, tin) = self.value(*x).dims2();
                let (cout, tout) = node.value.as_ref().unwrap().dims2();
                let rows = cin * kernel;
                let gw = acc(grads, *w, cout * rows);
                T::gemm(cout, tout, rows, g, false, cols, true, T::one(), gw);
                if let Some(b) = b {
                    let gb = acc(grads, *b, cout);
                    for (a, row) in gb.iter_mut().zip(g.chunks(tout)) {
                        *a += row.iter().copied().sum::<T>();
                    }
                }
                if self.needs_grad(*x) {
                    let mut gcols = vec![T::zero(); rows * tout];
                    T::gemm(rows, cout, tout, self.data(*w), true, g, false, T::zero(), &mut gcols);
                    let gx = acc(grads, *x, cin * tin);
                    for ci in 0..cin {
                        for k in 0..*kernel {
                            let src = &gcols[(ci * kernel + k) * tout..(ci * kernel + k + 1) * tout];
                            for (t, &v) in src.iter().enumerate() {
                                let p = t + k;
                                if p >= *pad_left && p - pad_left < tin {
                                    gx[ci * tin + p - pad_left] += v;
                                }
                            }
                        }
                    }
                }
            }
            Op::Add(a, b) => {
                add_into(acc(grads, *a, g.len()), g);
                add_into(acc(grads, *b, g.len()), g);
            }
            Op::Sub(a, b) => {
                add_into(acc(grads, *a, g.len()), g);
                for (d, &v) in acc(grads, *b, g.len()).iter_mut().zip(g) {
                    *d -= v;
                }
            }
            Op::Mul(a, b) => {
                let (ad, bd) = (self.data(*a), self.data(*b));
                for ((d, &v), &o) in acc(grads, *a, g.len()).iter_mut().zip(g).zip(bd) {
                    *d += v * o;
                }
                for ((d, &v), &o) in acc(grads, *b, g.len()).iter_mut().zip(g).zip(ad) {
                    *d += v * o;
                }
            }
            Op::MulConst(a, c) => {
                for ((d, &v), &m) in acc(grads, *a, g.len()).iter_mut().zip(g).zip(c) {
                    *d += v * m;
                }
            }
            Op::Affine(a, scale) => {
                for (d, &v) in acc(grads, *a, g.len()).iter_mut().zip(g) {
                    *d += v * *scale;
                }
            }
            Op::AddN(xs) => {
                for &x in xs {
                    add_into(acc(grads, x, g.len()), g);
                }
            }
            Op::ScaleBy { x, s } => {
                let sv = self.scalar_value(*s);
                let xd = self.data(*x);
                let gs: T = g.iter().zip(xd).map(|(&a, &b)| a * b).sum();
                for (d, &v) in acc(grads, *x, g.len()).iter_mut().zip(g) {
                    *d += v * sv;
                }
                acc(grads, *s, 1)[0] += gs;
            }
            Op::Relu(a) => {
                let ad = self.data(*a);
                for ((d, &v), &x) in acc(grads, *a, g.len()).iter_mut().zip(g).zip(ad) {
                    if x > T::zero() {
                        *d += v;
                    }
                }
            }
            Op::Sigmoid(a) => {
                let y = &node.value.as_ref().unwrap().data;
                for ((d, &v), &s) in acc(grads, *a, g.len()).iter_mut().zip(g).zip(y) {
                    *d += v * s * (T::one() - s);
                }
            }
            Op::SoftmaxRows(a) => {
                let y = node.value.as_ref().unwrap();
                let (_, c) = y.dims2();
                let ga = acc(grads, *a, g.len());
                for ((gr, yr), dr) in g.chunks(c).zip(y.data.chunks(c)).zip(ga.chunks_mut(c)) {
                    let inner: T = gr.iter().zip(yr).map(|(&a, &b)| a * b).sum();
                    for i in 0..c {
                        dr[i] += yr[i] * (gr[i] - inner);
                    }
                }
            }
            Op::LayerNorm {
                x,
                gain,
                bias,
                xhat,
                inv_std,
            } => {
                let (n, d) = self.value(*x).dims2();
                let gd = self.data(*gain);
                let dt = T::lit(d as f64);
                {
                    let gg = acc(grads, *gain, d);
                    for r in 0..n {
                        for i in 0..d {
                            gg[i] += g[r * d + i] * xhat[r * d + i];
                        }
                    }
                }
                {
                    let gb = acc(grads, *bias, d);
                    for r in 0..n {
                        for i in 0..d {
                            gb[i] += g[r * d + i];
                        }
                    }
                }
                let gx = acc(grads, *x, n * d);
                for r in 0..n {
                    let mut sum_dxh = T::zero();
                    let mut sum_dxh_xh = T::zero();
                    for i in 0..d {
                        let dxh = g[r * d + i] * gd[i];
                        sum_dxh += dxh;
                        sum_dxh_xh += dxh * xhat[r * d + i];
                    }
                    let k = inv_std[r] / dt;
                    for i in 0..d {
                        let dxh = g[r * d + i] * gd[i];
                        gx[r * d + i] += k * (dt * dxh - sum_dxh - xhat[r * d + i] * sum_dxh_xh);
                    }
                }
            }
            Op::MeanCols(x) => {
                let (r, c) = self.value(*x).dims2();
                let inv = T::one() / T::lit(c as f64);
                let gx = acc(grads, *x, r * c);
                for (row, &v) in gx.chunks_mut(c).zip(g) {
                    row.iter_mut().for_each(|d| *d += v * inv);
                }
            }
            Op::RepeatCols(x) => {
                let r = self.value(*x).len();
                let c = g.len() / r;
                let gx = acc(grads, *x, r);
                for (d, row) in gx.iter_mut().zip(g.chunks(c)) {
                    *d += row.iter().copied().sum::<T>();
                }
            }
            Op::StackRows(rows) => {
                let d = g.len() / rows.len();
                for (i, &r) in rows.iter().enumerate() {
                    add_into(acc(grads, r, d), &g[i * d..(i + 1) * d]);
                }
            }
            Op::SliceRows { x, start } => {
                let (_, c) = self.value(*x).dims2();
                let total = self.value(*x).len();
                let gx = acc(grads, *x, total);
                add_into(&mut gx[start * c..start * c + g.len()], g);
            }
            Op::Attention {
                q,
                k,
                v,
                heads,
                probs,
            } => {
                let (kn, d) = self.value(*k).dims2();
                let dh = d / heads;
                let scale = T::one() / T::lit(dh as f64).sqrt();
                let (qd, kd, vd) = (self.data(*q), self.data(*k), self.data(*v));
                let mut gq = vec![T::zero(); d];
                let mut gk = vec![T::zero(); kn * d];
                let mut gv = vec![T::zero(); kn * d];
                let mut dscore = vec![T::zero(); kn];
                for h in 0..*heads {
                    let p = &probs[h * kn..(h + 1) * kn];
                    let go = &g[h * dh..(h + 1) * dh];
                    for j in 0..kn {
                        let vj = &vd[j * d + h * dh..j * d + (h + 1) * dh];
                        dscore[j] = crate::dot(go, vj);
                        for (a, &b) in gv[j * d + h * dh..j * d + (h + 1) * dh].iter_mut().zip(go) {
                            *a += p[j] * b;
                        }
                    }
                    let inner: T = (0..kn).map(|j| p[j] * dscore[j]).sum();
                    for j in 0..kn {
                        let ds = p[j] * (dscore[j] - inner) * scale;
                        let kj = &kd[j * d + h * dh..j * d + (h + 1) * dh];
                        for i in 0..dh {
                            gq[h * dh + i] += ds * kj[i];
                            gk[j * d + h * dh + i] += ds * qd[h * dh + i];
                        }
                    }
                }
                add_into(acc(grads, *q, d), &gq);
                add_into(acc(grads, *k, kn * d), &gk);
                add_into(acc(grads, *v, kn * d), &gv);
            }
            Op::Sum(x) => {
                let n = self.value(*x).len();
                acc(grads, *x, n).iter_mut().for_each(|d| *d += g[0]);
            }
            Op::CompressedL1 {
                mask_re,
                mask_im,
                ref_re: packed,
                ref_im,
                alpha,
            } => {
                let n = ref_im.len();
                let (ref_re, target) = packed.split_at(n);
                let (mr, mi) = (self.data(*mask_re), self.data(*mask_im));
                let mut gr = vec![T::zero(); n];
                let mut gi = vec![T::zero(); n];
                for i in 0..n {
                    let (a, b) = (mr[i] * ref_re[i], mi[i] * ref_im[i]);
                    let mag = (a * a + b * b).sqrt();
                    if mag == T::zero() {
                        continue;
                    }
                    let diff = mag.powf(*alpha) - target[i];
                    let sign = if diff > T::zero() {
                        T::one()
                    } else if diff < T::zero() {
                        -T::one()
                    } else {
                        T::zero()
                    };
                    // α |Ŝ|^(α-2) a ref, arranged so tiny magnitudes stay finite in f32
                    let coef = g[0] * sign * *alpha * mag.powf(*alpha);
                    gr[i] = coef * (a / mag) * (ref_re[i] / mag);
                    gi[i] = coef * (b / mag) * (ref_im[i] / mag);
                }
                add_into(acc(grads, *mask_re, n), &gr);
                add_into(acc(grads, *mask_im, n), &gi);
            }
        }
    }

    fn needs_grad(&self, v: Var) -> bool {
        !matches!(self.nodes[v.0].op, Op::Leaf)
    }
}

fn acc<T: Scalar>(grads: &mut [Option<Vec<T>>], v: Var, len: usize) -> &mut Vec<T> {
    grads[v.0].get_or_insert_with(|| vec![T::zero(); len])
}

fn add_into<T: Scalar>(dst: &mut [T], src: &[T]) {
    for (d, &s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}
