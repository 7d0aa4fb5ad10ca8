use std::sync::atomic::{AtomicU64, Ordering};

use crate::real::Real;
use crate::tensor::Tensor;

static NEXT_SET: AtomicU64 = AtomicU64::new(1);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub usize);

#[derive(Clone, Debug)]
pub struct ParamEntry<R> {
    pub name: String,
    pub value: Tensor<R>,
    pub grad: Vec<R>,
}

/// Named trainable tensors with gradient buffers. Every set (including
/// clones) carries its own identity so a tape only routes gradients to the set
/// its parameter leaves came from.
#[derive(Debug)]
pub struct ParamSet<R> {
    uid: u64,
    entries: Vec<ParamEntry<R>>,
}

impl<R: Real> Clone for ParamSet<R> {
    fn clone(&self) -> Self {
        Self {
            uid: NEXT_SET.fetch_add(1, Ordering::Relaxed),
            entries: self.entries.clone(),
        }
    }
}

impl<R: Real> Default for ParamSet<R> {
    fn default() -> Self {
        Self::new()
    }
}

impl<R: Real> ParamSet<R> {
    pub fn new() -> Self {
        Self {
            uid: NEXT_SET.fetch_add(1, Ordering::Relaxed),
            entries: Vec::new(),
        }
    }

    pub fn uid(&self) -> u64 {
        self.uid
    }

    pub fn add(&mut self, name: impl Into<String>, value: Tensor<R>) -> ParamId {
        let grad = vec![R::zero(); value.len()];
        self.entries.push(ParamEntry {
            name: name.into(),
            value,
            grad,
        });
        ParamId(self.entries.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Total scalar parameter count.
    pub fn numel(&self) -> usize {
        self.entries.iter().map(|e| e.value.len()).sum()
    }

    pub fn entries(&self) -> &[ParamEntry<R>] {
        &self.entries
    }

    pub fn entries_mut(&mut self) -> &mut [ParamEntry<R>] {
        &mut self.entries
    }

    pub fn value(&self, id: ParamId) -> &Tensor<R> {
        &self.entries[id.0].value
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut Tensor<R> {
        &mut self.entries[id.0].value
    }

    pub fn grad(&self, id: ParamId) -> &[R] {
        &self.entries[id.0].grad
    }

    pub fn grad_mut(&mut self, id: ParamId) -> &mut [R] {
        &mut self.entries[id.0].grad
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.entries.iter().position(|e| e.name == name).map(ParamId)
    }

    pub fn zero_grad(&mut self) {
        for e in &mut self.entries {
            e.grad.iter_mut().for_each(|g| *g = R::zero());
        }
    }

    pub fn grad_norm(&self) -> f64 {
        self.entries
            .iter()
            .flat_map(|e| e.grad.iter())
            .map(|g| g.f64() * g.f64())
            .sum::<f64>()
            .sqrt()
    }

    /// Rescale gradients so their global L2 norm is at most `max_norm`.
    /// Returns the norm before clipping.
    pub fn clip_grad_norm(&mut self, max_norm: f64) -> f64 {
        let norm = self.grad_norm();
        if norm.is_finite() && norm > max_norm && norm > 0.0 {
            let s = R::lit(max_norm / norm);
            for e in &mut self.entries {
                e.grad.iter_mut().for_each(|g| *g = *g * s);
            }
        }
        norm
    }

    pub fn grads_finite(&self) -> bool {
        self.entries.iter().all(|e| e.grad.iter().all(|g| g.is_finite()))
    }

    /// Copy values from another set with the same layout.
    pub fn copy_values_from(&mut self, other: &ParamSet<R>) {
        assert_eq!(self.entries.len(), other.entries.len(), "layout mismatch");
        for (a, b) in self.entries.iter_mut().zip(&other.entries) {
            assert_eq!(a.value.shape(), b.value.shape(), "layout mismatch for {}", a.name);
            a.value = b.value.clone();
        }
    }

    /// Same layout with values converted to another precision.
    pub fn cast<S: Real>(&self) -> ParamSet<S> {
        let mut out = ParamSet::new();
        for e in &self.entries {
            out.add(e.name.clone(), e.value.cast());
        }
        out
    }
}
