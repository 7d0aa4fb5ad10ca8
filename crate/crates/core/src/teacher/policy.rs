//! Privileged Gaussian policy and critic.

use std::f64::consts::PI;

use ptensor::nn::{Activation, Mlp};
use ptensor::{ParamId, ParamSet, Real, Tape, Tensor, Var};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::io::checkpoint::Checkpoint;

pub const LOG_STD_MIN: f64 = -5.0;
pub const LOG_STD_MAX: f64 = 2.0;
const HALF_LOG_2PI: f64 = 0.918_938_533_204_672_7;

/// `log(1 - tanh(u)^2)` without cancellation.
pub fn log_squash_jacobian(u: f64) -> f64 {
    2.0 * (std::f64::consts::LN_2 - u - softplus(-2.0 * u))
}

fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else {
        x.exp().ln_1p()
    }
}

/// Log density of `tanh(u)` where `u ~ N(mean, exp(log_std)^2)`, per sample.
pub fn squashed_log_prob(u: &[f64], mean: &[f64], log_std: &[f64]) -> f64 {
    u.iter()
        .zip(mean)
        .zip(log_std)
        .map(|((&u, &m), &ls)| {
            let z = (u - m) * (-ls).exp();
            -0.5 * z * z - ls - HALF_LOG_2PI - log_squash_jacobian(u)
        })
        .sum()
}

/// Differential entropy of `tanh(u)`, `u ~ N(mean, σ²)` for one dimension,
/// by midpoint quadrature over ±8σ.
pub fn squashed_entropy_1d(mean: f64, log_std: f64) -> f64 {
    let sigma = log_std.exp();
    let n = 4000;
    let (lo, hi) = (-8.0, 8.0);
    let h = (hi - lo) / n as f64;
    let mut e_jac = 0.0;
    for k in 0..n {
        let z = lo + (k as f64 + 0.5) * h;
        let w = (-0.5 * z * z).exp() / (2.0 * PI).sqrt() * h;
        e_jac += w * log_squash_jacobian(mean + sigma * z);
    }
    0.5 + HALF_LOG_2PI + log_std + e_jac
}

#[derive(Clone, Debug)]
pub struct GaussianPolicy {
    pub trunk: Mlp,
    pub log_std: ParamId,
}

#[derive(Clone, Debug)]
pub struct ValueNet {
    pub mlp: Mlp,
}

/// Policy and critic sharing one parameter set.
#[derive(Clone, Debug)]
pub struct TeacherNets<R: Real> {
    pub params: ParamSet<R>,
    pub policy: GaussianPolicy,
    pub value: ValueNet,
    pub obs_dim: usize,
    pub dof: usize,
    pub hidden: Vec<usize>,
}

/// Output of one stochastic or deterministic action query.
#[derive(Clone, Debug, Default)]
pub struct ActOutput {
    /// Squashed action in `[-1, 1]^D`, row-major `[batch, D]`.
    pub action: Vec<f64>,
    /// Pre-squash sample.
    pub pre_tanh: Vec<f64>,
    /// Log-probability of each squashed action (squash-corrected).
    pub log_prob: Vec<f64>,
    /// Log-probability of each pre-squash sample (no correction).
    pub gauss_log_prob: Vec<f64>,
    pub value: Vec<f64>,
}

impl<R: Real> TeacherNets<R> {
    pub fn new(rng: &mut impl Rng, obs_dim: usize, dof: usize, hidden: &[usize], init_log_std: f64) -> Self {
        let mut params = ParamSet::new();
        let mut widths = vec![obs_dim];
        widths.extend_from_slice(hidden);
        widths.push(dof);
        let trunk = Mlp::new(&mut params, rng, "policy", &widths, Activation::Elu);
        let log_std = params.add("policy.log_std", Tensor::full(&[dof], R::lit(init_log_std)));
        *widths.last_mut().expect("widths") = 1;
        let mlp = Mlp::new(&mut params, rng, "value", &widths, Activation::Elu);
        // Small output layer so initial means sit near zero.
        let last = trunk.layers.last().expect("policy layers").weight;
        for w in params.value_mut(last).data_mut() {
            *w = *w * R::lit(0.01);
        }
        Self {
            params,
            policy: GaussianPolicy { trunk, log_std },
            value: ValueNet { mlp },
            obs_dim,
            dof,
            hidden: hidden.to_vec(),
        }
    }

    /// Pre-squash means `[B, D]`.
    pub fn mean(&self, tape: &mut Tape<R>, obs: Var) -> Result<Var> {
        Ok(self.policy.trunk.forward(tape, &self.params, obs)?)
    }

    /// Clamped log standard deviation `[D]`.
    pub fn log_std(&self, tape: &mut Tape<R>) -> Result<Var> {
        let ls = tape.param(&self.params, self.policy.log_std);
        Ok(tape.clamp(ls, LOG_STD_MIN, LOG_STD_MAX)?)
    }

    /// State values `[B]`.
    pub fn value(&self, tape: &mut Tape<R>, obs: Var) -> Result<Var> {
        let v = self.value.mlp.forward(tape, &self.params, obs)?;
        let b = tape.shape(v)[0];
        Ok(tape.reshape(v, &[b])?)
    }

    /// Gaussian log-density `[B]` of pre-squash samples `u` under the current policy.
    pub fn gauss_log_prob(&self, tape: &mut Tape<R>, obs: Var, u: Var) -> Result<Var> {
        let mean = self.mean(tape, obs)?;
        let ls = self.log_std(tape)?;
        let b = tape.shape(mean)[0];
        let d = self.dof;
        let ls_row = tape.reshape(ls, &[1, d])?;
        let ls_b = tape.tile(ls_row, b)?;
        let neg = tape.neg(ls_b)?;
        let inv_std = tape.exp(neg)?;
        let diff = tape.sub(u, mean)?;
        let z = tape.mul(diff, inv_std)?;
        let z2 = tape.square(z)?;
        let half = tape.scale(z2, -0.5)?;
        let per = tape.sub(half, ls_b)?;
        let per = tape.shift(per, -HALF_LOG_2PI)?;
        Ok(tape.sum_last(per)?)
    }

    /// Entropy of the pre-squash Gaussian, summed over action dimensions.
    pub fn gauss_entropy(&self, tape: &mut Tape<R>) -> Result<Var> {
        let ls = self.log_std(tape)?;
        let s = tape.sum(ls)?;
        Ok(tape.shift(s, self.dof as f64 * (0.5 + HALF_LOG_2PI))?)
    }

    fn check_obs(&self, obs: &[f64]) -> Result<usize> {
        if !obs.len().is_multiple_of(self.obs_dim) || obs.is_empty() {
            return Err(Error::Contract(format!(
                "observation batch of {} values is not a multiple of {}",
                obs.len(),
                self.obs_dim
            )));
        }
        if obs.iter().any(|v| !v.is_finite()) {
            return Err(Error::Contract("non-finite observation".into()));
        }
        Ok(obs.len() / self.obs_dim)
    }

    /// Action query for a row-major observation batch. Deterministic mode
    /// returns `tanh(mean)`; otherwise a squashed Gaussian sample.
    pub fn act(&self, obs: &[f64], deterministic: bool, rng: &mut impl Rng, with_value: bool) -> Result<ActOutput> {
        let b = self.check_obs(obs)?;
        let d = self.dof;
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::from_f64(&[b, self.obs_dim], obs)?);
        let mean_v = self.mean(&mut tape, x)?;
        let mean = tape.value(mean_v).to_f64_vec();
        let ls_v = self.log_std(&mut tape)?;
        let ls = tape.value(ls_v).to_f64_vec();
        let value = if with_value {
            let v = self.value(&mut tape, x)?;
            tape.value(v).to_f64_vec()
        } else {
            Vec::new()
        };
        let mut out = ActOutput {
            action: Vec::with_capacity(b * d),
            pre_tanh: Vec::with_capacity(b * d),
            log_prob: Vec::with_capacity(b),
            gauss_log_prob: Vec::with_capacity(b),
            value,
        };
        for i in 0..b {
            let m = &mean[i * d..(i + 1) * d];
            let start = out.pre_tanh.len();
            for k in 0..d {
                let u = if deterministic {
                    m[k]
                } else {
                    m[k] + ls[k].exp() * rng.sample::<f64, _>(StandardNormal)
                };
                out.pre_tanh.push(u);
                out.action.push(u.tanh());
            }
            let u = &out.pre_tanh[start..];
            let lp = squashed_log_prob(u, m, &ls);
            let jac: f64 = u.iter().map(|&x| log_squash_jacobian(x)).sum();
            out.log_prob.push(lp);
            out.gauss_log_prob.push(lp + jac);
        }
        Ok(out)
    }

    /// Critic values for a row-major observation batch.
    pub fn values(&self, obs: &[f64]) -> Result<Vec<f64>> {
        let b = self.check_obs(obs)?;
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::from_f64(&[b, self.obs_dim], obs)?);
        let v = self.value(&mut tape, x)?;
        Ok(tape.value(v).to_f64_vec())
    }
}

/// Checkpoint variant tag for teacher networks.
pub const TEACHER_VARIANT: &str = "teacher";

impl<R: Real> TeacherNets<R> {
    /// `tanh(mean)` for a row-major observation batch.
    pub fn act_deterministic(&self, obs: &[f64]) -> Result<Vec<f64>> {
        let b = self.check_obs(obs)?;
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::from_f64(&[b, self.obs_dim], obs)?);
        let m = self.mean(&mut tape, x)?;
        let a = tape.tanh(m)?;
        Ok(tape.value(a).to_f64_vec())
    }
}

impl TeacherNets<f32> {
    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut ck = Checkpoint::new(TEACHER_VARIANT, 0, self.dof);
        let hidden: Vec<String> = self.hidden.iter().map(|h| h.to_string()).collect();
        ck.meta.insert("hidden".into(), hidden.join(","));
        ck.meta.insert("obs_dim".into(), self.obs_dim.to_string());
        ck.push_params("", &self.params);
        ck
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        ck.expect_variant(TEACHER_VARIANT)?;
        let obs_dim: usize = ck.meta_parse("obs_dim")?;
        let raw = ck.meta.get("hidden").map(String::as_str).unwrap_or("");
        let hidden = raw
            .split(',')
            .filter(|s| !s.is_empty())
            .map(|s| s.parse::<usize>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|_| Error::Contract(format!("malformed hidden sizes `{raw}`")))?;
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut nets = Self::new(&mut rng, obs_dim, ck.d as usize, &hidden, 0.0);
        ck.load_params("", &mut nets.params)?;
        Ok(nets)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn squash_jacobian_matches_direct_form() {
        for &u in &[-3.0, -0.5, 0.0, 0.7, 2.5] {
            let direct = (1.0 - f64::tanh(u).powi(2)).ln();
            assert!((log_squash_jacobian(u) - direct).abs() < 1e-12);
        }
        assert!(log_squash_jacobian(40.0).is_finite());
    }

    #[test]
    fn entropy_of_narrow_squash_tracks_gaussian() {
        let h = squashed_entropy_1d(0.0, -4.0);
        let gauss = 0.5 + HALF_LOG_2PI - 4.0;
        assert!((h - gauss).abs() < 1e-3);
    }
}
