//! Define-by-run gradient tape.
//!
//! Every forward operation appends a node holding its value and a record of
//! how it was produced. Nodes only ever reference earlier nodes, so the node
//! vector is already in topological order and `backward` is a single reverse
//! sweep.

use std::sync::atomic::{AtomicU64, Ordering};

use crate::error::{Result, TensorError};
use crate::param::{ParamId, ParamSet};
use crate::real::Real;
use crate::tensor::{numel, Tensor};

static NEXT_TAPE: AtomicU64 = AtomicU64::new(1);

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var {
    pub(crate) idx: usize,
    pub(crate) tape: u64,
}

#[derive(Clone, Copy, Debug)]
pub(crate) enum Unary<R> {
    Exp,
    Log,
    Tanh,
    Sigmoid,
    Elu,
    Gelu,
    Square,
    Scale(R),
    Shift(R),
    Clamp(R, R),
}

#[derive(Clone, Debug)]
pub(crate) enum Op<R> {
    Leaf,
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Min(usize, usize),
    Unary(usize, Unary<R>),
    MatMul {
        a: usize,
        b: usize,
        ta: bool,
        tb: bool,
    },
    Sum(usize),
    SumLast(usize),
    AddBias(usize, usize),
    Softmax(usize),
    LayerNorm {
        x: usize,
        gain: usize,
        bias: usize,
        xhat: Vec<R>,
        inv_std: Vec<R>,
    },
    Reshape(usize),
    Permute(usize, Vec<usize>),
    Slice {
        x: usize,
        axis: usize,
        start: usize,
    },
    Concat {
        parts: Vec<usize>,
        axis: usize,
    },
    Tile(usize),
}

pub(crate) struct Node<R> {
    pub(crate) value: Tensor<R>,
    pub(crate) op: Op<R>,
    pub(crate) requires_grad: bool,
    pub(crate) param: Option<(u64, ParamId)>,
}

/// Single-threaded operation record. Rebuilt for every forward pass.
pub struct Tape<R> {
    uid: u64,
    pub(crate) nodes: Vec<Node<R>>,
    grads: Vec<Option<Vec<R>>>,
    backward_done: bool,
}

impl<R: Real> Default for Tape<R> {
    fn default() -> Self {
        Self::new()
    }
}

impl<R: Real> Tape<R> {
    pub fn new() -> Self {
        Self {
            uid: NEXT_TAPE.fetch_add(1, Ordering::Relaxed),
            nodes: Vec::new(),
            grads: Vec::new(),
            backward_done: false,
        }
    }

    /// Drop every node so the tape can record a fresh forward pass.
    pub fn reset(&mut self) {
        self.nodes.clear();
        self.grads.clear();
        self.backward_done = false;
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub(crate) fn idx(&self, v: Var) -> Result<usize> {
        if v.tape != self.uid || v.idx >= self.nodes.len() {
            return Err(TensorError::ForeignVar);
        }
        Ok(v.idx)
    }

    pub(crate) fn push(&mut self, value: Tensor<R>, op: Op<R>, parents: &[usize]) -> Var {
        let requires_grad = parents.iter().any(|&p| self.nodes[p].requires_grad);
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
            param: None,
        });
        Var {
            idx: self.nodes.len() - 1,
            tape: self.uid,
        }
    }

    fn push_leaf(&mut self, value: Tensor<R>, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            requires_grad,
            param: None,
        });
        Var {
            idx: self.nodes.len() - 1,
            tape: self.uid,
        }
    }

    /// A leaf that receives gradient.
    pub fn leaf(&mut self, value: Tensor<R>) -> Var {
        self.push_leaf(value, true)
    }

    /// A detached leaf: never receives gradient.
    pub fn constant(&mut self, value: Tensor<R>) -> Var {
        self.push_leaf(value, false)
    }

    /// Copy a parameter onto the tape; its gradient is routed back by
    /// [`Tape::write_param_grads`].
    pub fn param(&mut self, set: &ParamSet<R>, id: ParamId) -> Var {
        let v = self.push_leaf(set.value(id).clone(), true);
        self.nodes[v.idx].param = Some((set.uid(), id));
        v
    }

    /// Copy of `v` that is cut off from the graph.
    pub fn detach(&mut self, v: Var) -> Result<Var> {
        let i = self.idx(v)?;
        let value = self.nodes[i].value.clone();
        Ok(self.constant(value))
    }

    pub fn value(&self, v: Var) -> &Tensor<R> {
        assert_eq!(v.tape, self.uid, "variable from another tape");
        &self.nodes[v.idx].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.value(v).shape()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.idx].requires_grad
    }

    /// Gradient of the last `backward` call with respect to `v`. `None` for
    /// detached nodes and nodes the loss does not depend on.
    pub fn grad(&self, v: Var) -> Option<Tensor<R>> {
        if v.tape != self.uid {
            return None;
        }
        let g = self.grads.get(v.idx)?.as_ref()?;
        Some(Tensor::new(self.nodes[v.idx].value.shape().to_vec(), g.clone()).expect("grad shape"))
    }

    /// Add the gradients of every parameter leaf taken from `set` into the
    /// set's gradient buffers. Returns how many parameter leaves contributed.
    pub fn write_param_grads(&self, set: &mut ParamSet<R>) -> usize {
        let mut n = 0;
        for (node, g) in self.nodes.iter().zip(&self.grads) {
            if let (Some((uid, id)), Some(g)) = (node.param, g) {
                if uid == set.uid() {
                    for (a, &b) in set.grad_mut(id).iter_mut().zip(g) {
                        *a = *a + b;
                    }
                    n += 1;
                }
            }
        }
        n
    }

    /// Reverse sweep from a scalar loss.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        let li = self.idx(loss)?;
        if self.nodes[li].value.len() != 1 {
            return Err(TensorError::NotScalar(self.nodes[li].value.shape().to_vec()));
        }
        if self.backward_done {
            return Err(TensorError::BackwardTwice);
        }
        self.backward_done = true;
        self.grads = vec![None; self.nodes.len()];
        if !self.nodes[li].requires_grad {
            return Ok(());
        }
        self.grads[li] = Some(vec![R::one()]);
        for i in (0..=li).rev() {
            let Some(g) = self.grads[i].take() else {
                continue;
            };
            if self.nodes[i].requires_grad {
                self.propagate(i, &g);
            }
            self.grads[i] = Some(g);
        }
        // Only nodes that require grad keep a gradient.
        for (node, g) in self.nodes.iter().zip(self.grads.iter_mut()) {
            if !node.requires_grad {
                *g = None;
            }
        }
        Ok(())
    }

    fn accumulate(&mut self, target: usize, contribution: Vec<R>) {
        if !self.nodes[target].requires_grad {
            return;
        }
        match &mut self.grads[target] {
            Some(g) => {
                for (a, b) in g.iter_mut().zip(contribution) {
                    *a = *a + b;
                }
            }
            slot @ None => *slot = Some(contribution),
        }
    }

    /// Gradient w.r.t. a broadcast operand: sum when the operand was a scalar.
    fn reduce_to(&self, target: usize, g: Vec<R>) -> Vec<R> {
        if self.nodes[target].value.len() == 1 && g.len() != 1 {
            vec![g.into_iter().fold(R::zero(), |a, b| a + b)]
        } else {
            g
        }
    }

    fn propagate(&mut self, i: usize, g: &[R]) {
        let op = std::mem::replace(&mut self.nodes[i].op, Op::Leaf);
        self.propagate_op(i, &op, g);
        self.nodes[i].op = op;
    }

    fn propagate_op(&mut self, i: usize, op: &Op<R>, g: &[R]) {
        match *op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                let ga = self.reduce_to(a, g.to_vec());
                let gb = self.reduce_to(b, g.to_vec());
                self.accumulate(a, ga);
                self.accumulate(b, gb);
            }
            Op::Sub(a, b) => {
                let ga = self.reduce_to(a, g.to_vec());
                let gb = self.reduce_to(b, g.iter().map(|&x| -x).collect());
                self.accumulate(a, ga);
                self.accumulate(b, gb);
            }
            Op::Mul(a, b) => {
                let (ga, gb) = {
                    let av = self.nodes[a].value.data();
                    let bv = self.nodes[b].value.data();
                    let n = g.len();
                    let at = |k: usize| if av.len() == 1 { av[0] } else { av[k] };
                    let bt = |k: usize| if bv.len() == 1 { bv[0] } else { bv[k] };
                    let ga: Vec<R> = (0..n).map(|k| g[k] * bt(k)).collect();
                    let gb: Vec<R> = (0..n).map(|k| g[k] * at(k)).collect();
                    (ga, gb)
                };
                let ga = self.reduce_to(a, ga);
                let gb = self.reduce_to(b, gb);
                self.accumulate(a, ga);
                self.accumulate(b, gb);
            }
            Op::Min(a, b) => {
                let (ga, gb) = {
                    let av = self.nodes[a].value.data();
                    let bv = self.nodes[b].value.data();
                    let mut ga = vec![R::zero(); g.len()];
                    let mut gb = vec![R::zero(); g.len()];
                    for k in 0..g.len() {
                        let x = if av.len() == 1 { av[0] } else { av[k] };
                        let y = if bv.len() == 1 { bv[0] } else { bv[k] };
                        if x <= y {
                            ga[k] = g[k];
                        } else {
                            gb[k] = g[k];
                        }
                    }
                    (ga, gb)
                };
                let ga = self.reduce_to(a, ga);
                let gb = self.reduce_to(b, gb);
                self.accumulate(a, ga);
                self.accumulate(b, gb);
            }
            Op::Unary(a, kind) => {
                let gi = crate::ops::unary_backward(
                    kind,
                    self.nodes[a].value.data(),
                    self.nodes[i].value.data(),
                    g,
                );
                self.accumulate(a, gi);
            }
            Op::MatMul { a, b, ta, tb } => {
                let (ga, gb) = crate::ops::matmul_backward(
                    &self.nodes[a].value,
                    &self.nodes[b].value,
                    ta,
                    tb,
                    g,
                    self.nodes[a].requires_grad,
                    self.nodes[b].requires_grad,
                );
                if let Some(ga) = ga {
                    self.accumulate(a, ga);
                }
                if let Some(gb) = gb {
                    self.accumulate(b, gb);
                }
            }
            Op::Sum(a) => {
                let n = self.nodes[a].value.len();
                self.accumulate(a, vec![g[0]; n]);
            }
            Op::SumLast(a) => {
                let shape = self.nodes[a].value.shape();
                let n = *shape.last().unwrap_or(&1);
                let total = self.nodes[a].value.len();
                let ga: Vec<R> = (0..total).map(|k| g[k / n]).collect();
                self.accumulate(a, ga);
            }
            Op::AddBias(x, b) => {
                let n = self.nodes[b].value.len();
                let mut gb = vec![R::zero(); n];
                for (k, &gk) in g.iter().enumerate() {
                    gb[k % n] = gb[k % n] + gk;
                }
                self.accumulate(x, g.to_vec());
                self.accumulate(b, gb);
            }
            Op::Softmax(a) => {
                let y = self.nodes[i].value.data();
                let n = *self.nodes[i].value.shape().last().unwrap_or(&1);
                let mut gx = vec![R::zero(); y.len()];
                for (row, (yr, gr)) in y.chunks(n).zip(g.chunks(n)).enumerate() {
                    let dot = yr.iter().zip(gr).fold(R::zero(), |s, (&p, &q)| s + p * q);
                    for k in 0..n {
                        gx[row * n + k] = yr[k] * (gr[k] - dot);
                    }
                }
                self.accumulate(a, gx);
            }
            Op::LayerNorm {
                x,
                gain,
                bias,
                ref xhat,
                ref inv_std,
            } => {
                let n = self.nodes[gain].value.len();
                let gv = self.nodes[gain].value.data().to_vec();
                let nr = R::from_usize(n).unwrap();
                let mut gx = vec![R::zero(); xhat.len()];
                let mut ggain = vec![R::zero(); n];
                let mut gbias = vec![R::zero(); n];
                for (row, (xh, gr)) in xhat.chunks(n).zip(g.chunks(n)).enumerate() {
                    let mut mean_d = R::zero();
                    let mut mean_dx = R::zero();
                    for k in 0..n {
                        let d = gr[k] * gv[k];
                        mean_d = mean_d + d;
                        mean_dx = mean_dx + d * xh[k];
                        ggain[k] = ggain[k] + gr[k] * xh[k];
                        gbias[k] = gbias[k] + gr[k];
                    }
                    mean_d = mean_d / nr;
                    mean_dx = mean_dx / nr;
                    for k in 0..n {
                        let d = gr[k] * gv[k];
                        gx[row * n + k] = inv_std[row] * (d - mean_d - xh[k] * mean_dx);
                    }
                }
                self.accumulate(x, gx);
                self.accumulate(gain, ggain);
                self.accumulate(bias, gbias);
            }
            Op::Reshape(a) => self.accumulate(a, g.to_vec()),
            Op::Permute(a, ref axes) => {
                let out_shape = self.nodes[i].value.shape().to_vec();
                let mut inverse = vec![0; axes.len()];
                for (k, &ax) in axes.iter().enumerate() {
                    inverse[ax] = k;
                }
                let ga = crate::ops::permute_data(g, &out_shape, &inverse);
                self.accumulate(a, ga);
            }
            Op::Slice { x, axis, start } => {
                let in_shape = self.nodes[x].value.shape().to_vec();
                let len = self.nodes[i].value.shape()[axis];
                let (outer, inner) = crate::ops::split_axis(&in_shape, axis);
                let full = in_shape[axis];
                let mut gx = vec![R::zero(); numel(&in_shape)];
                for o in 0..outer {
                    let src = &g[o * len * inner..(o + 1) * len * inner];
                    let dst = o * full * inner + start * inner;
                    gx[dst..dst + len * inner].copy_from_slice(src);
                }
                self.accumulate(x, gx);
            }
            Op::Concat { ref parts, axis } => {
                let out_shape = self.nodes[i].value.shape().to_vec();
                let (outer, inner) = crate::ops::split_axis(&out_shape, axis);
                let full = out_shape[axis];
                let mut offset = 0;
                for &p in parts {
                    let len = self.nodes[p].value.shape()[axis];
                    let mut gp = Vec::with_capacity(outer * len * inner);
                    for o in 0..outer {
                        let s = o * full * inner + offset * inner;
                        gp.extend_from_slice(&g[s..s + len * inner]);
                    }
                    offset += len;
                    self.accumulate(p, gp);
                }
            }
            Op::Tile(a) => {
                let n = self.nodes[a].value.len();
                let mut ga = vec![R::zero(); n];
                for (k, &gk) in g.iter().enumerate() {
                    ga[k % n] = ga[k % n] + gk;
                }
                self.accumulate(a, ga);
            }
        }
    }
}
