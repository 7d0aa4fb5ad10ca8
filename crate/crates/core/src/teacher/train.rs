use ptensor::optim::{AdamW, AdamWConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::policy::TeacherNets;
use super::ppo::{ppo_update, PpoStats, RolloutBuffer};
use super::TeacherConfig;
use crate::env::{teacher_obs_len, EnvConfig, EventKind, RewardTerms, VecEnv};
use crate::error::{Error, Result};

/// One learning-curve row.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub iteration: usize,
    pub r_pos: f64,
    pub r_mag: f64,
    pub r_dir: f64,
    pub r_smooth: f64,
    pub r_vel: f64,
    pub r_act: f64,
    pub r_rate: f64,
    pub r_total: f64,
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub kl: f64,
    pub clip_frac: f64,
    /// Correct-direction minus wrong-direction full turns.
    pub rotations: i64,
    pub drops: u64,
}

impl CurveRow {
    fn new(iteration: usize, mean: &RewardTerms, s: &PpoStats, rotations: i64, drops: u64) -> Self {
        Self {
            iteration,
            r_pos: mean.r_pos,
            r_mag: mean.r_mag,
            r_dir: mean.r_dir,
            r_smooth: mean.r_smooth,
            r_vel: mean.r_vel,
            r_act: mean.r_act,
            r_rate: mean.r_rate,
            r_total: mean.total,
            policy_loss: s.policy_loss,
            value_loss: s.value_loss,
            entropy: s.entropy,
            kl: s.kl,
            clip_frac: s.clip_frac,
            rotations,
            drops,
        }
    }
}

pub struct TeacherRun {
    pub nets: TeacherNets<f32>,
    pub opt: AdamW<f32>,
    pub curve: Vec<CurveRow>,
}

/// Initial teacher networks for `seed`.
pub fn init_teacher(env_cfg: &EnvConfig, cfg: &TeacherConfig, seed: u64) -> TeacherNets<f32> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dof = env_cfg.dof();
    TeacherNets::new(&mut rng, teacher_obs_len(dof), dof, &cfg.hidden, cfg.init_log_std)
}

/// Rollout → GAE → PPO loop. `on_iter` sees every curve row with the
/// current networks, e.g. to log or checkpoint.
pub fn train_teacher(
    env_cfg: &EnvConfig,
    cfg: &TeacherConfig,
    seed: u64,
    mut on_iter: impl FnMut(&CurveRow, &TeacherNets<f32>) -> Result<()>,
) -> Result<TeacherRun> {
    env_cfg.validate()?;
    cfg.validate()?;
    let mut nets = init_teacher(env_cfg, cfg, seed);
    let mut opt = AdamW::new(
        AdamWConfig {
            lr: cfg.lr,
            weight_decay: cfg.weight_decay,
            ..AdamWConfig::default()
        },
        &nets.params,
    );
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(2);
    let mut envs = VecEnv::new(env_cfg, cfg.n_envs, seed)?;
    let (n, dof) = (cfg.n_envs, envs.dof());
    let od = teacher_obs_len(dof);
    let mut buf = RolloutBuffer::new(n, cfg.horizon, od, dof);
    let mut obs = Vec::with_capacity(n * od);
    let mut curve = Vec::with_capacity(cfg.iterations);

    for it in 0..cfg.iterations {
        buf.clear();
        let mut sum = RewardTerms::default();
        let (mut rotations, mut drops) = (0i64, 0u64);
        for _ in 0..cfg.horizon {
            envs.teacher_obs(&mut obs);
            let out = nets.act(&obs, false, &mut rng, true)?;
            let steps = envs.step(&out.action).map_err(|e| match e {
                Error::Diverged { time, snapshot } => Error::Diverged {
                    time,
                    snapshot: format!("iteration {it}: {snapshot}"),
                },
                other => other,
            })?;
            let mut finals = Vec::new();
            let mut final_idx = Vec::new();
            for (e, s) in steps.iter().enumerate() {
                if s.truncated {
                    if let Some(f) = &s.final_obs {
                        finals.extend_from_slice(f);
                        final_idx.push(e);
                    }
                }
            }
            let boot = if final_idx.is_empty() {
                Vec::new()
            } else {
                nets.values(&finals)?
            };
            buf.obs.extend_from_slice(&obs);
            buf.pre_tanh.extend_from_slice(&out.pre_tanh);
            buf.log_prob.extend_from_slice(&out.gauss_log_prob);
            buf.values.extend_from_slice(&out.value);
            for (e, s) in steps.iter().enumerate() {
                let mut r = s.reward.total * cfg.reward_scale;
                if let Some(k) = final_idx.iter().position(|&i| i == e) {
                    r += cfg.gamma * boot[k];
                }
                buf.rewards.push(r);
                buf.dones.push(s.done());
                sum.add_assign(&s.reward);
                for ev in &s.events {
                    match ev.kind {
                        EventKind::Rotation(d) => {
                            rotations += if (d as f64) * s.omega_cmd > 0.0 { 1 } else { -1 };
                        }
                        EventKind::Drop => drops += 1,
                    }
                }
            }
        }
        envs.teacher_obs(&mut obs);
        let last = nets.values(&obs)?;
        buf.finish(&last, cfg.gamma, cfg.gae_lambda);
        let stats = ppo_update(&mut nets, &mut opt, &buf, cfg, &mut rng)?;
        let mean = sum.scaled(1.0 / (n * cfg.horizon) as f64);
        let row = CurveRow::new(it, &mean, &stats, rotations, drops);
        on_iter(&row, &nets)?;
        curve.push(row);
    }
    Ok(TeacherRun { nets, opt, curve })
}
