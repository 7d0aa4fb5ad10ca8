//! PPO training of the privileged teacher.

pub mod policy;
pub mod ppo;
mod train;

use serde::{Deserialize, Serialize};

pub use policy::{ActOutput, TeacherNets, TEACHER_VARIANT};
pub use ppo::{gae, ppo_update, PpoStats, RolloutBuffer};
pub use train::{init_teacher, train_teacher, CurveRow, TeacherRun};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TeacherConfig {
    pub hidden: Vec<usize>,
    pub lr: f64,
    pub weight_decay: f64,
    pub iterations: usize,
    pub n_envs: usize,
    /// Policy steps per env per iteration.
    pub horizon: usize,
    pub gamma: f64,
    pub gae_lambda: f64,
    pub clip: f64,
    pub epochs: usize,
    pub minibatches: usize,
    pub entropy_coef: f64,
    pub value_coef: f64,
    pub max_grad_norm: f64,
    pub init_log_std: f64,
    /// Multiplier applied to environment rewards before advantage estimation.
    pub reward_scale: f64,
    /// Write a checkpoint every this many iterations (0 disables intermediate checkpoints).
    pub checkpoint_every: usize,
}

impl Default for TeacherConfig {
    fn default() -> Self {
        Self {
            hidden: vec![512, 512, 256, 128],
            lr: 1e-4,
            weight_decay: 0.0,
            iterations: 2000,
            n_envs: 64,
            horizon: 160,
            gamma: 0.99,
            gae_lambda: 0.95,
            clip: 0.2,
            epochs: 5,
            minibatches: 4,
            entropy_coef: 0.003,
            value_coef: 0.5,
            max_grad_norm: 1.0,
            init_log_std: -0.5,
            reward_scale: 0.01,
            checkpoint_every: 0,
        }
    }
}

impl TeacherConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(format!("teacher.{m}")));
        if !(self.gamma > 0.0 && self.gamma <= 1.0) || !(self.gae_lambda > 0.0 && self.gae_lambda <= 1.0) {
            return bad("gamma and gae_lambda must lie in (0, 1]");
        }
        if !(self.clip > 0.0) {
            return bad("clip must be > 0");
        }
        if self.n_envs == 0 || self.horizon == 0 || self.epochs == 0 || self.minibatches == 0 {
            return bad("n_envs, horizon, epochs and minibatches must be >= 1");
        }
        if self.minibatches > self.n_envs * self.horizon {
            return bad("minibatches exceeds the rollout size");
        }
        if !(self.lr > 0.0 && self.max_grad_norm > 0.0 && self.reward_scale > 0.0) {
            return bad("lr, max_grad_norm and reward_scale must be > 0");
        }
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            return bad("hidden needs at least one nonzero width");
        }
        Ok(())
    }
}
