//! Forward operations and their backward rules.

use crate::error::{Result, TensorError};
use crate::real::Real;
use crate::tape::{Op, Tape, Unary, Var};
use crate::tensor::{numel, Tensor};

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_K: f64 = 0.044_715;

/// Sizes of the flattened dimensions before and after `axis`.
pub(crate) fn split_axis(shape: &[usize], axis: usize) -> (usize, usize) {
    (numel(&shape[..axis]), numel(&shape[axis + 1..]))
}

fn strides(shape: &[usize]) -> Vec<usize> {
    let mut s = vec![1; shape.len()];
    for i in (0..shape.len().saturating_sub(1)).rev() {
        s[i] = s[i + 1] * shape[i + 1];
    }
    s
}

/// Permute row-major `data` of shape `shape` so that output axis `k` is input
/// axis `axes[k]`.
pub(crate) fn permute_data<R: Copy>(data: &[R], shape: &[usize], axes: &[usize]) -> Vec<R> {
    let in_strides = strides(shape);
    let out_shape: Vec<usize> = axes.iter().map(|&a| shape[a]).collect();
    let src_strides: Vec<usize> = axes.iter().map(|&a| in_strides[a]).collect();
    let n = data.len();
    let mut out = Vec::with_capacity(n);
    let mut counter = vec![0usize; out_shape.len()];
    let mut src = 0usize;
    for _ in 0..n {
        out.push(data[src]);
        for d in (0..out_shape.len()).rev() {
            counter[d] += 1;
            src += src_strides[d];
            if counter[d] < out_shape[d] {
                break;
            }
            src -= src_strides[d] * out_shape[d];
            counter[d] = 0;
        }
    }
    out
}

fn gelu<R: Real>(x: R) -> R {
    let c = R::lit(GELU_C);
    let k = R::lit(GELU_K);
    let half = R::lit(0.5);
    half * x * (R::one() + (c * (x + k * x * x * x)).tanh())
}

fn gelu_grad<R: Real>(x: R) -> R {
    let c = R::lit(GELU_C);
    let k = R::lit(GELU_K);
    let half = R::lit(0.5);
    let u = c * (x + k * x * x * x);
    let t = u.tanh();
    let du = c * (R::one() + R::lit(3.0) * k * x * x);
    half * (R::one() + t) + half * x * (R::one() - t * t) * du
}

fn unary_forward<R: Real>(kind: Unary<R>, x: R) -> R {
    match kind {
        Unary::Exp => x.exp(),
        Unary::Log => x.ln(),
        Unary::Tanh => x.tanh(),
        Unary::Sigmoid => R::one() / (R::one() + (-x).exp()),
        Unary::Elu => {
            if x > R::zero() {
                x
            } else {
                x.exp_m1()
            }
        }
        Unary::Gelu => gelu(x),
        Unary::Square => x * x,
        Unary::Scale(c) => c * x,
        Unary::Shift(c) => x + c,
        Unary::Clamp(lo, hi) => x.max(lo).min(hi),
    }
}

pub(crate) fn unary_backward<R: Real>(kind: Unary<R>, x: &[R], y: &[R], g: &[R]) -> Vec<R> {
    let d = |k: usize| -> R {
        let (x, y) = (x[k], y[k]);
        match kind {
            Unary::Exp => y,
            Unary::Log => R::one() / x,
            Unary::Tanh => R::one() - y * y,
            Unary::Sigmoid => y * (R::one() - y),
            Unary::Elu => {
                if x > R::zero() {
                    R::one()
                } else {
                    y + R::one()
                }
            }
            Unary::Gelu => gelu_grad(x),
            Unary::Square => R::lit(2.0) * x,
            Unary::Scale(c) => c,
            Unary::Shift(_) => R::one(),
            Unary::Clamp(lo, hi) => {
                if x >= lo && x <= hi {
                    R::one()
                } else {
                    R::zero()
                }
            }
        }
    };
    (0..g.len()).map(|k| g[k] * d(k)).collect()
}

/// Row/column view of a (possibly transposed) row-major matrix.
#[derive(Clone, Copy)]
struct View {
    rows: usize,
    cols: usize,
    rs: isize,
    cs: isize,
}

impl View {
    fn of(rows: usize, cols: usize, transposed: bool) -> Self {
        // `rows`/`cols` describe the stored matrix.
        if transposed {
            View {
                rows: cols,
                cols: rows,
                rs: 1,
                cs: cols as isize,
            }
        } else {
            View {
                rows,
                cols,
                rs: cols as isize,
                cs: 1,
            }
        }
    }

    fn t(self) -> Self {
        View {
            rows: self.cols,
            cols: self.rows,
            rs: self.cs,
            cs: self.rs,
        }
    }
}

/// Split a 2D or 3D shape into (batch, rows, cols).
fn mat_dims(shape: &[usize]) -> Option<(usize, usize, usize)> {
    match *shape {
        [r, c] => Some((1, r, c)),
        [b, r, c] => Some((b, r, c)),
        _ => None,
    }
}

/// `out[b] += x[b]·y[b]` over a batch of views.
fn batched_gemm<R: Real>(batch: usize, x: &[R], xv: View, y: &[R], yv: View, out: &mut [R]) {
    let (m, k, n) = (xv.rows, xv.cols, yv.cols);
    let (xs, ys, os) = (x.len() / batch, y.len() / batch, m * n);
    for b in 0..batch {
        R::gemm(
            m,
            k,
            n,
            &x[b * xs..(b + 1) * xs],
            (xv.rs, xv.cs),
            &y[b * ys..(b + 1) * ys],
            (yv.rs, yv.cs),
            R::one(),
            &mut out[b * os..(b + 1) * os],
            (n as isize, 1),
        );
    }
}

pub(crate) fn matmul_backward<R: Real>(
    a: &Tensor<R>,
    b: &Tensor<R>,
    ta: bool,
    tb: bool,
    g: &[R],
    need_a: bool,
    need_b: bool,
) -> (Option<Vec<R>>, Option<Vec<R>>) {
    let (batch, ar, ac) = mat_dims(a.shape()).expect("checked in forward");
    let (_, br, bc) = mat_dims(b.shape()).expect("checked in forward");
    let av = View::of(ar, ac, ta);
    let bv = View::of(br, bc, tb);
    let gv = View::of(av.rows, bv.cols, false);
    let ga = need_a.then(|| {
        let mut out = vec![R::zero(); a.len()];
        if ta {
            // stored A is op(A)^T, so dA = op(B)·dC^T
            batched_gemm(batch, b.data(), bv, g, gv.t(), &mut out);
        } else {
            batched_gemm(batch, g, gv, b.data(), bv.t(), &mut out);
        }
        out
    });
    let gb = need_b.then(|| {
        let mut out = vec![R::zero(); b.len()];
        if tb {
            batched_gemm(batch, g, gv.t(), a.data(), av, &mut out);
        } else {
            batched_gemm(batch, a.data(), av.t(), g, gv, &mut out);
        }
        out
    });
    (ga, gb)
}

impl<R: Real> Tape<R> {
    fn binary_shape(&self, op: &'static str, a: usize, b: usize) -> Result<Vec<usize>> {
        let (sa, sb) = (self.nodes[a].value.shape(), self.nodes[b].value.shape());
        let (na, nb) = (self.nodes[a].value.len(), self.nodes[b].value.len());
        if sa == sb || nb == 1 {
            Ok(sa.to_vec())
        } else if na == 1 {
            Ok(sb.to_vec())
        } else {
            Err(TensorError::Shape {
                op,
                lhs: sa.to_vec(),
                rhs: sb.to_vec(),
            })
        }
    }

    fn binary(
        &mut self,
        name: &'static str,
        a: Var,
        b: Var,
        f: impl Fn(R, R) -> R,
        op: fn(usize, usize) -> Op<R>,
    ) -> Result<Var> {
        let (ai, bi) = (self.idx(a)?, self.idx(b)?);
        let shape = self.binary_shape(name, ai, bi)?;
        let (av, bv) = (self.nodes[ai].value.data(), self.nodes[bi].value.data());
        let n = numel(&shape);
        let data: Vec<R> = (0..n)
            .map(|k| {
                let x = if av.len() == 1 { av[0] } else { av[k] };
                let y = if bv.len() == 1 { bv[0] } else { bv[k] };
                f(x, y)
            })
            .collect();
        let value = Tensor::new(shape, data)?;
        Ok(self.push(value, op(ai, bi), &[ai, bi]))
    }

    /// Elementwise sum; shapes must match or one side must be a scalar.
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("add", a, b, |x, y| x + y, Op::Add)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("sub", a, b, |x, y| x - y, Op::Sub)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("mul", a, b, |x, y| x * y, Op::Mul)
    }

    /// Elementwise minimum. Ties route the gradient to `a`.
    pub fn minimum(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("minimum", a, b, |x, y| if x <= y { x } else { y }, Op::Min)
    }

    fn unary(&mut self, a: Var, kind: Unary<R>) -> Result<Var> {
        let ai = self.idx(a)?;
        let x = &self.nodes[ai].value;
        let data = x.data().iter().map(|&v| unary_forward(kind, v)).collect();
        let value = Tensor::new(x.shape().to_vec(), data)?;
        Ok(self.push(value, Op::Unary(ai, kind), &[ai]))
    }

    pub fn exp(&mut self, a: Var) -> Result<Var> {
        self.unary(a, Unary::Exp)
    }

    pub fn log(&mut self, a: Var) -> Result<Var> {
        self.unary(a, Unary::Log)
    }

    pub fn tanh(&mut self, a: Var) -> Result<Var> {
        self.unary(a, Unary::Tanh)
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var> {
        self.unary(a, Unary::Sigmoid)
    }

    /// ELU with unit scale.
    pub fn elu(&mut self, a: Var) -> Result<Var> {
        self.unary(a, Unary::Elu)
    }

    /// GELU, tanh approximation.
    pub fn gelu(&mut self, a: Var) -> Result<Var> {
        self.unary(a, Unary::Gelu)
    }

    pub fn square(&mut self, a: Var) -> Result<Var> {
        self.unary(a, Unary::Square)
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Result<Var> {
        self.unary(a, Unary::Scale(R::lit(c)))
    }

    pub fn neg(&mut self, a: Var) -> Result<Var> {
        self.scale(a, -1.0)
    }

    pub fn shift(&mut self, a: Var, c: f64) -> Result<Var> {
        self.unary(a, Unary::Shift(R::lit(c)))
    }

    /// Clamp with zero gradient outside `[lo, hi]`.
    pub fn clamp(&mut self, a: Var, lo: f64, hi: f64) -> Result<Var> {
        if lo > hi {
            return Err(TensorError::Invalid {
                op: "clamp",
                msg: format!("lo {lo} > hi {hi}"),
            });
        }
        self.unary(a, Unary::Clamp(R::lit(lo), R::lit(hi)))
    }

    /// Matrix product of 2D operands or batched product of 3D operands.
    /// `ta`/`tb` use the transpose of the stored matrix.
    pub fn matmul_t(&mut self, a: Var, b: Var, ta: bool, tb: bool) -> Result<Var> {
        let (ai, bi) = (self.idx(a)?, self.idx(b)?);
        let (sa, sb) = (
            self.nodes[ai].value.shape().to_vec(),
            self.nodes[bi].value.shape().to_vec(),
        );
        let err = || TensorError::Shape {
            op: "matmul",
            lhs: sa.clone(),
            rhs: sb.clone(),
        };
        let (ba, ar, ac) = mat_dims(&sa).ok_or_else(err)?;
        let (bb, br, bc) = mat_dims(&sb).ok_or_else(err)?;
        if sa.len() != sb.len() || ba != bb {
            return Err(err());
        }
        let av = View::of(ar, ac, ta);
        let bv = View::of(br, bc, tb);
        if av.cols != bv.rows {
            return Err(err());
        }
        let mut out = vec![R::zero(); ba * av.rows * bv.cols];
        batched_gemm(
            ba,
            self.nodes[ai].value.data(),
            av,
            self.nodes[bi].value.data(),
            bv,
            &mut out,
        );
        let shape = if sa.len() == 2 {
            vec![av.rows, bv.cols]
        } else {
            vec![ba, av.rows, bv.cols]
        };
        let value = Tensor::new(shape, out)?;
        Ok(self.push(value, Op::MatMul { a: ai, b: bi, ta, tb }, &[ai, bi]))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.matmul_t(a, b, false, false)
    }

    /// Sum of all elements, shape `[1]`.
    pub fn sum(&mut self, a: Var) -> Result<Var> {
        let ai = self.idx(a)?;
        let s = self.nodes[ai].value.data().iter().fold(R::zero(), |s, &x| s + x);
        Ok(self.push(Tensor::scalar(s), Op::Sum(ai), &[ai]))
    }

    pub fn mean(&mut self, a: Var) -> Result<Var> {
        let n = self.value(a).len();
        let s = self.sum(a)?;
        self.scale(s, 1.0 / n as f64)
    }

    /// Sum over the last axis: `[.., n] -> [..]` (`[n] -> [1]`).
    pub fn sum_last(&mut self, a: Var) -> Result<Var> {
        let ai = self.idx(a)?;
        let x = &self.nodes[ai].value;
        let n = *x.shape().last().unwrap_or(&1);
        let data: Vec<R> = x
            .data()
            .chunks(n)
            .map(|c| c.iter().fold(R::zero(), |s, &v| s + v))
            .collect();
        let mut shape = x.shape()[..x.ndim() - 1].to_vec();
        if shape.is_empty() {
            shape.push(1);
        }
        let value = Tensor::new(shape, data)?;
        Ok(self.push(value, Op::SumLast(ai), &[ai]))
    }

    /// `x[.., n] + bias[n]`, bias repeated over leading axes.
    pub fn add_bias(&mut self, x: Var, bias: Var) -> Result<Var> {
        let (xi, bi) = (self.idx(x)?, self.idx(bias)?);
        let (xv, bv) = (&self.nodes[xi].value, &self.nodes[bi].value);
        let n = *xv.shape().last().unwrap_or(&0);
        if bv.len() != n || n == 0 {
            return Err(TensorError::Shape {
                op: "add_bias",
                lhs: xv.shape().to_vec(),
                rhs: bv.shape().to_vec(),
            });
        }
        let data = xv
            .data()
            .iter()
            .enumerate()
            .map(|(k, &v)| v + bv.data()[k % n])
            .collect();
        let value = Tensor::new(xv.shape().to_vec(), data)?;
        Ok(self.push(value, Op::AddBias(xi, bi), &[xi, bi]))
    }

    /// Softmax over the last axis, max-subtracted. NaN inputs give NaN rows.
    pub fn softmax(&mut self, a: Var) -> Result<Var> {
        let ai = self.idx(a)?;
        let x = &self.nodes[ai].value;
        let n = *x.shape().last().unwrap_or(&0);
        if n == 0 {
            return Err(TensorError::Invalid {
                op: "softmax",
                msg: "empty axis".into(),
            });
        }
        let mut data = Vec::with_capacity(x.len());
        for row in x.data().chunks(n) {
            let m = row.iter().fold(R::neg_infinity(), |m, &v| if v > m { v } else { m });
            let m = if row.iter().any(|v| v.is_nan()) { R::nan() } else { m };
            let start = data.len();
            let mut z = R::zero();
            for &v in row {
                let e = (v - m).exp();
                z = z + e;
                data.push(e);
            }
            for e in &mut data[start..] {
                *e = *e / z;
            }
        }
        let value = Tensor::new(x.shape().to_vec(), data)?;
        Ok(self.push(value, Op::Softmax(ai), &[ai]))
    }

    /// Layer normalisation over the last axis with affine `gain`/`bias` of
    /// that extent.
    pub fn layer_norm(&mut self, x: Var, gain: Var, bias: Var, eps: f64) -> Result<Var> {
        let (xi, gi, bi) = (self.idx(x)?, self.idx(gain)?, self.idx(bias)?);
        let xv = &self.nodes[xi].value;
        let n = *xv.shape().last().unwrap_or(&0);
        let (gv, bv) = (&self.nodes[gi].value, &self.nodes[bi].value);
        if n == 0 || gv.len() != n || bv.len() != n {
            return Err(TensorError::Shape {
                op: "layer_norm",
                lhs: xv.shape().to_vec(),
                rhs: gv.shape().to_vec(),
            });
        }
        let nr = R::from_usize(n).unwrap();
        let eps = R::lit(eps);
        let rows = xv.len() / n;
        let mut xhat = Vec::with_capacity(xv.len());
        let mut inv_std = Vec::with_capacity(rows);
        let mut out = Vec::with_capacity(xv.len());
        for row in xv.data().chunks(n) {
            let mu = row.iter().fold(R::zero(), |s, &v| s + v) / nr;
            let var = row.iter().fold(R::zero(), |s, &v| s + (v - mu) * (v - mu)) / nr;
            let is = R::one() / (var + eps).sqrt();
            inv_std.push(is);
            for (k, &v) in row.iter().enumerate() {
                let h = (v - mu) * is;
                xhat.push(h);
                out.push(gv.data()[k] * h + bv.data()[k]);
            }
        }
        let value = Tensor::new(xv.shape().to_vec(), out)?;
        Ok(self.push(
            value,
            Op::LayerNorm {
                x: xi,
                gain: gi,
                bias: bi,
                xhat,
                inv_std,
            },
            &[xi, gi, bi],
        ))
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        let ai = self.idx(a)?;
        let value = self.nodes[ai].value.clone().reshaped(shape)?;
        Ok(self.push(value, Op::Reshape(ai), &[ai]))
    }

    /// Reorder axes: output axis `k` is input axis `axes[k]`.
    pub fn permute(&mut self, a: Var, axes: &[usize]) -> Result<Var> {
        let ai = self.idx(a)?;
        let x = &self.nodes[ai].value;
        let mut seen = vec![false; x.ndim()];
        if axes.len() != x.ndim() || axes.iter().any(|&k| k >= x.ndim() || std::mem::replace(&mut seen[k], true)) {
            return Err(TensorError::Invalid {
                op: "permute",
                msg: format!("axes {axes:?} for shape {:?}", x.shape()),
            });
        }
        let data = permute_data(x.data(), x.shape(), axes);
        let shape = axes.iter().map(|&k| x.shape()[k]).collect();
        let value = Tensor::new(shape, data)?;
        Ok(self.push(value, Op::Permute(ai, axes.to_vec()), &[ai]))
    }

    /// `len` entries of `axis` starting at `start`.
    pub fn slice(&mut self, a: Var, axis: usize, start: usize, len: usize) -> Result<Var> {
        let ai = self.idx(a)?;
        let x = &self.nodes[ai].value;
        if axis >= x.ndim() || start + len > x.shape()[axis] || len == 0 {
            return Err(TensorError::Invalid {
                op: "slice",
                msg: format!("axis {axis} range {start}..{} of {:?}", start + len, x.shape()),
            });
        }
        let (outer, inner) = split_axis(x.shape(), axis);
        let full = x.shape()[axis];
        let mut data = Vec::with_capacity(outer * len * inner);
        for o in 0..outer {
            let s = o * full * inner + start * inner;
            data.extend_from_slice(&x.data()[s..s + len * inner]);
        }
        let mut shape = x.shape().to_vec();
        shape[axis] = len;
        let value = Tensor::new(shape, data)?;
        Ok(self.push(value, Op::Slice { x: ai, axis, start }, &[ai]))
    }

    /// Concatenate along `axis`; all other extents must agree.
    pub fn concat(&mut self, parts: &[Var], axis: usize) -> Result<Var> {
        let idx: Vec<usize> = parts.iter().map(|&p| self.idx(p)).collect::<Result<_>>()?;
        let Some(&first) = idx.first() else {
            return Err(TensorError::Invalid {
                op: "concat",
                msg: "no inputs".into(),
            });
        };
        let base = self.nodes[first].value.shape().to_vec();
        if axis >= base.len() {
            return Err(TensorError::Invalid {
                op: "concat",
                msg: format!("axis {axis} for shape {base:?}"),
            });
        }
        let mut total = 0;
        for &p in &idx {
            let s = self.nodes[p].value.shape();
            let ok = s.len() == base.len()
                && s.iter().zip(&base).enumerate().all(|(k, (x, y))| k == axis || x == y);
            if !ok {
                return Err(TensorError::Shape {
                    op: "concat",
                    lhs: base.clone(),
                    rhs: s.to_vec(),
                });
            }
            total += s[axis];
        }
        let (outer, inner) = split_axis(&base, axis);
        let mut data = Vec::with_capacity(outer * total * inner);
        for o in 0..outer {
            for &p in &idx {
                let v = &self.nodes[p].value;
                let len = v.shape()[axis];
                data.extend_from_slice(&v.data()[o * len * inner..(o + 1) * len * inner]);
            }
        }
        let mut shape = base;
        shape[axis] = total;
        let value = Tensor::new(shape, data)?;
        Ok(self.push(value, Op::Concat { parts: idx.clone(), axis }, &idx))
    }

    /// Repeat a tensor with leading extent 1 `reps` times along axis 0.
    pub fn tile(&mut self, a: Var, reps: usize) -> Result<Var> {
        let ai = self.idx(a)?;
        let x = &self.nodes[ai].value;
        if x.shape().first() != Some(&1) || reps == 0 {
            return Err(TensorError::Invalid {
                op: "tile",
                msg: format!("shape {:?} reps {reps}", x.shape()),
            });
        }
        let mut data = Vec::with_capacity(x.len() * reps);
        for _ in 0..reps {
            data.extend_from_slice(x.data());
        }
        let mut shape = x.shape().to_vec();
        shape[0] = reps;
        let value = Tensor::new(shape, data)?;
        Ok(self.push(value, Op::Tile(ai), &[ai]))
    }

    /// Mean of squared differences.
    pub fn mse(&mut self, a: Var, b: Var) -> Result<Var> {
        if self.shape(a) != self.shape(b) {
            return Err(TensorError::Shape {
                op: "mse",
                lhs: self.shape(a).to_vec(),
                rhs: self.shape(b).to_vec(),
            });
        }
        let d = self.sub(a, b)?;
        let sq = self.square(d)?;
        self.mean(sq)
    }
}
