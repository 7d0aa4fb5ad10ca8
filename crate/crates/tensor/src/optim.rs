//! AdamW with decoupled weight decay.

use crate::param::ParamSet;
use crate::real::Real;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamWConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StepOutcome {
    Applied,
    /// A gradient was non-finite; parameters and the step counter are untouched.
    SkippedNonFinite,
}

#[derive(Clone, Debug)]
pub struct AdamW<R> {
    pub config: AdamWConfig,
    step: u64,
    m: Vec<Vec<R>>,
    v: Vec<Vec<R>>,
}

impl<R: Real> AdamW<R> {
    pub fn new(config: AdamWConfig, params: &ParamSet<R>) -> Self {
        let zeros = || params.entries().iter().map(|e| vec![R::zero(); e.value.len()]).collect();
        Self {
            config,
            step: 0,
            m: zeros(),
            v: zeros(),
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn moments(&self) -> (&[Vec<R>], &[Vec<R>]) {
        (&self.m, &self.v)
    }

    /// Restore optimiser state saved from [`AdamW::moments`].
    pub fn restore(&mut self, step: u64, m: Vec<Vec<R>>, v: Vec<Vec<R>>) {
        assert_eq!(m.len(), self.m.len());
        assert_eq!(v.len(), self.v.len());
        self.step = step;
        self.m = m;
        self.v = v;
    }

    /// Adam moment update with bias correction followed by
    /// `p <- p - lr * weight_decay * p`.
    pub fn step(&mut self, params: &mut ParamSet<R>) -> StepOutcome {
        if !params.grads_finite() {
            return StepOutcome::SkippedNonFinite;
        }
        self.step += 1;
        let c = self.config;
        let t = self.step as i32;
        let bc1 = 1.0 - c.beta1.powi(t);
        let bc2 = 1.0 - c.beta2.powi(t);
        let (b1, b2) = (R::lit(c.beta1), R::lit(c.beta2));
        let (one_b1, one_b2) = (R::lit(1.0 - c.beta1), R::lit(1.0 - c.beta2));
        let step_size = R::lit(c.lr / bc1);
        let inv_bc2_sqrt = R::lit(1.0 / bc2.sqrt());
        let eps = R::lit(c.eps);
        let decay = R::lit(c.lr * c.weight_decay);
        for ((e, m), v) in params.entries_mut().iter_mut().zip(&mut self.m).zip(&mut self.v) {
            let p = e.value.data_mut();
            for k in 0..p.len() {
                let g = e.grad[k];
                m[k] = b1 * m[k] + one_b1 * g;
                v[k] = b2 * v[k] + one_b2 * g * g;
                let denom = v[k].sqrt() * inv_bc2_sqrt + eps;
                p[k] = p[k] - step_size * m[k] / denom;
                p[k] = p[k] - decay * p[k];
            }
        }
        StepOutcome::Applied
    }
}
