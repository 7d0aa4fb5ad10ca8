//! Rollout storage, advantage estimation and the clipped-surrogate update.

use ptensor::optim::{AdamW, StepOutcome};
use ptensor::{Real, Tape, Tensor, Var};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::policy::TeacherNets;
use super::TeacherConfig;
use crate::error::{Error, Result};

/// Generalised advantage estimation over one env's trajectory segment.
/// `dones[t]` marks that step `t` ended an episode; `last_value` bootstraps
/// past the end of the segment.
pub fn gae(rewards: &[f64], values: &[f64], dones: &[bool], last_value: f64, gamma: f64, lambda: f64) -> (Vec<f64>, Vec<f64>) {
    let n = rewards.len();
    assert!(values.len() == n && dones.len() == n, "gae inputs must be aligned");
    let mut adv = vec![0.0; n];
    let mut next_adv = 0.0;
    let mut next_value = last_value;
    for t in (0..n).rev() {
        let live = if dones[t] { 0.0 } else { 1.0 };
        let delta = rewards[t] + gamma * live * next_value - values[t];
        next_adv = delta + gamma * lambda * live * next_adv;
        adv[t] = next_adv;
        next_value = values[t];
    }
    let ret = adv.iter().zip(values).map(|(a, v)| a + v).collect();
    (adv, ret)
}

/// Shift and scale to zero mean and unit standard deviation.
pub fn normalize(x: &mut [f64]) {
    let n = x.len() as f64;
    if x.is_empty() {
        return;
    }
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let std = var.sqrt().max(1e-8);
    for v in x.iter_mut() {
        *v = (*v - mean) / std;
    }
}

/// Time-major storage for `horizon × n_envs` transitions.
#[derive(Clone, Debug)]
pub struct RolloutBuffer {
    pub n_envs: usize,
    pub horizon: usize,
    pub obs_dim: usize,
    pub dof: usize,
    pub obs: Vec<f64>,
    pub pre_tanh: Vec<f64>,
    pub log_prob: Vec<f64>,
    pub rewards: Vec<f64>,
    pub values: Vec<f64>,
    pub dones: Vec<bool>,
    pub advantages: Vec<f64>,
    pub returns: Vec<f64>,
}

impl RolloutBuffer {
    pub fn new(n_envs: usize, horizon: usize, obs_dim: usize, dof: usize) -> Self {
        let n = n_envs * horizon;
        Self {
            n_envs,
            horizon,
            obs_dim,
            dof,
            obs: Vec::with_capacity(n * obs_dim),
            pre_tanh: Vec::with_capacity(n * dof),
            log_prob: Vec::with_capacity(n),
            rewards: Vec::with_capacity(n),
            values: Vec::with_capacity(n),
            dones: Vec::with_capacity(n),
            advantages: Vec::new(),
            returns: Vec::new(),
        }
    }

    pub fn clear(&mut self) {
        self.obs.clear();
        self.pre_tanh.clear();
        self.log_prob.clear();
        self.rewards.clear();
        self.values.clear();
        self.dones.clear();
        self.advantages.clear();
        self.returns.clear();
    }

    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }

    /// Fills advantages and returns per env, then normalises advantages.
    pub fn finish(&mut self, last_values: &[f64], gamma: f64, lambda: f64) {
        let (n, h) = (self.n_envs, self.horizon);
        assert_eq!(self.len(), n * h, "buffer not full");
        self.advantages = vec![0.0; n * h];
        self.returns = vec![0.0; n * h];
        let (mut r, mut v, mut d) = (vec![0.0; h], vec![0.0; h], vec![false; h]);
        for e in 0..n {
            for t in 0..h {
                r[t] = self.rewards[t * n + e];
                v[t] = self.values[t * n + e];
                d[t] = self.dones[t * n + e];
            }
            let (adv, ret) = gae(&r, &v, &d, last_values[e], gamma, lambda);
            for t in 0..h {
                self.advantages[t * n + e] = adv[t];
                self.returns[t * n + e] = ret[t];
            }
        }
        normalize(&mut self.advantages);
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PpoStats {
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub kl: f64,
    pub clip_frac: f64,
}

/// One minibatch worth of PPO inputs.
#[derive(Clone, Copy, Debug)]
pub struct PpoBatch<'a> {
    pub obs: &'a [f64],
    pub pre_tanh: &'a [f64],
    pub old_log_prob: &'a [f64],
    pub advantages: &'a [f64],
    pub returns: &'a [f64],
}

/// Builds the PPO loss on `tape`. Returns the loss and its component statistics.
pub fn ppo_loss<R: Real>(
    nets: &TeacherNets<R>,
    tape: &mut Tape<R>,
    batch: &PpoBatch<'_>,
    cfg: &TeacherConfig,
) -> Result<(Var, PpoStats)> {
    let b = batch.returns.len();
    let (od, d) = (nets.obs_dim, nets.dof);
    let obs = tape.constant(Tensor::from_f64(&[b, od], batch.obs)?);
    let u = tape.constant(Tensor::from_f64(&[b, d], batch.pre_tanh)?);
    let old = tape.constant(Tensor::from_f64(&[b], batch.old_log_prob)?);
    let adv = tape.constant(Tensor::from_f64(&[b], batch.advantages)?);
    let ret = tape.constant(Tensor::from_f64(&[b], batch.returns)?);

    let lp = nets.gauss_log_prob(tape, obs, u)?;
    let log_ratio = tape.sub(lp, old)?;
    let ratio = tape.exp(log_ratio)?;
    let s1 = tape.mul(ratio, adv)?;
    let clipped = tape.clamp(ratio, 1.0 - cfg.clip, 1.0 + cfg.clip)?;
    let s2 = tape.mul(clipped, adv)?;
    let surr = tape.minimum(s1, s2)?;
    let surr = tape.mean(surr)?;
    let policy_loss = tape.neg(surr)?;

    let v = nets.value(tape, obs)?;
    let value_loss = tape.mse(v, ret)?;
    let entropy = nets.gauss_entropy(tape)?;

    let vl = tape.scale(value_loss, cfg.value_coef)?;
    let ent = tape.scale(entropy, -cfg.entropy_coef)?;
    let loss = tape.add(policy_loss, vl)?;
    let loss = tape.add(loss, ent)?;

    let r = tape.value(ratio).to_f64_vec();
    let lr = tape.value(log_ratio).to_f64_vec();
    let kl = r.iter().zip(&lr).map(|(r, l)| (r - 1.0) - l).sum::<f64>() / b as f64;
    let clip_frac = r.iter().filter(|r| (**r - 1.0).abs() > cfg.clip).count() as f64 / b as f64;
    let stats = PpoStats {
        policy_loss: tape.value(policy_loss).item().f64(),
        value_loss: tape.value(value_loss).item().f64(),
        entropy: tape.value(entropy).item().f64(),
        kl,
        clip_frac,
    };
    Ok((loss, stats))
}

/// Several epochs of minibatch updates over a finished buffer.
pub fn ppo_update<R: Real>(
    nets: &mut TeacherNets<R>,
    opt: &mut AdamW<R>,
    buf: &RolloutBuffer,
    cfg: &TeacherConfig,
    rng: &mut impl Rng,
) -> Result<PpoStats> {
    let n = buf.len();
    let (od, d) = (buf.obs_dim, buf.dof);
    let mb = (n / cfg.minibatches.max(1)).max(1);
    let mut idx: Vec<usize> = (0..n).collect();
    let mut acc = PpoStats::default();
    let mut count = 0usize;
    let (mut o, mut u, mut lp, mut a, mut r) = (Vec::new(), Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for _ in 0..cfg.epochs {
        idx.shuffle(rng);
        for chunk in idx.chunks(mb) {
            o.clear();
            u.clear();
            lp.clear();
            a.clear();
            r.clear();
            for &i in chunk {
                o.extend_from_slice(&buf.obs[i * od..(i + 1) * od]);
                u.extend_from_slice(&buf.pre_tanh[i * d..(i + 1) * d]);
                lp.push(buf.log_prob[i]);
                a.push(buf.advantages[i]);
                r.push(buf.returns[i]);
            }
            let batch = PpoBatch {
                obs: &o,
                pre_tanh: &u,
                old_log_prob: &lp,
                advantages: &a,
                returns: &r,
            };
            let mut tape = Tape::new();
            let (loss, stats) = ppo_loss(nets, &mut tape, &batch, cfg)?;
            let lv = tape.value(loss).item().f64();
            if !lv.is_finite() {
                return Err(Error::NonFinite(format!("ppo loss {lv} with stats {stats:?}")));
            }
            tape.backward(loss)?;
            nets.params.zero_grad();
            tape.write_param_grads(&mut nets.params);
            nets.params.clip_grad_norm(cfg.max_grad_norm);
            if opt.step(&mut nets.params) == StepOutcome::SkippedNonFinite {
                return Err(Error::NonFinite(format!("ppo gradient with stats {stats:?}")));
            }
            acc.policy_loss += stats.policy_loss;
            acc.value_loss += stats.value_loss;
            acc.entropy += stats.entropy;
            acc.kl += stats.kl;
            acc.clip_frac += stats.clip_frac;
            count += 1;
        }
    }
    let c = count.max(1) as f64;
    Ok(PpoStats {
        policy_loss: acc.policy_loss / c,
        value_loss: acc.value_loss / c,
        entropy: acc.entropy / c,
        kl: acc.kl / c,
        clip_frac: acc.clip_frac / c,
    })
}
