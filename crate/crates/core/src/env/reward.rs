//! Per-step tracking rewards and regularisers.

use serde::{Deserialize, Serialize};

use super::RewardConfig;

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RewardTerms {
    pub r_pos: f64,
    pub r_mag: f64,
    pub r_dir: f64,
    pub r_smooth: f64,
    pub r_vel: f64,
    pub r_act: f64,
    pub r_rate: f64,
    pub total: f64,
}

impl RewardTerms {
    pub const NAMES: [&'static str; 8] = ["r_pos", "r_mag", "r_dir", "r_smooth", "r_vel", "r_act", "r_rate", "total"];

    pub fn as_array(&self) -> [f64; 8] {
        [
            self.r_pos,
            self.r_mag,
            self.r_dir,
            self.r_smooth,
            self.r_vel,
            self.r_act,
            self.r_rate,
            self.total,
        ]
    }

    pub fn add_assign(&mut self, o: &RewardTerms) {
        self.r_pos += o.r_pos;
        self.r_mag += o.r_mag;
        self.r_dir += o.r_dir;
        self.r_smooth += o.r_smooth;
        self.r_vel += o.r_vel;
        self.r_act += o.r_act;
        self.r_rate += o.r_rate;
        self.total += o.total;
    }

    pub fn scaled(&self, s: f64) -> RewardTerms {
        let a = self.as_array().map(|v| v * s);
        RewardTerms {
            r_pos: a[0],
            r_mag: a[1],
            r_dir: a[2],
            r_smooth: a[3],
            r_vel: a[4],
            r_act: a[5],
            r_rate: a[6],
            total: a[7],
        }
    }
}

/// Quantities the reward reads from two consecutive policy steps.
#[derive(Clone, Copy, Debug)]
pub struct RewardInputs<'a> {
    /// Object position error `p - p*`, m.
    pub pos_err: [f64; 3],
    pub omega: [f64; 3],
    pub omega_prev: [f64; 3],
    pub omega_cmd: [f64; 3],
    pub qdot: &'a [f64],
    pub action: &'a [f64],
    pub prev_action: &'a [f64],
    /// Policy period, s.
    pub dt: f64,
}

fn norm3(v: [f64; 3]) -> f64 {
    (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt()
}

fn sq(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum()
}

/// Cosine between two vectors; zero when either vanishes.
pub fn cosine(a: [f64; 3], b: [f64; 3]) -> f64 {
    let (na, nb) = (norm3(a), norm3(b));
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    (a[0] * b[0] + a[1] * b[1] + a[2] * b[2]) / (na * nb)
}

pub fn reward_terms(cfg: &RewardConfig, x: &RewardInputs<'_>) -> RewardTerms {
    let r_pos = cfg.w_pos * (-norm3(x.pos_err) / cfg.sigma_pos).exp();
    let r_mag = cfg.w_mag * (-(norm3(x.omega) - norm3(x.omega_cmd)).abs() / cfg.sigma_omega).exp();
    let r_dir = cfg.w_dir * cosine(x.omega, x.omega_cmd);
    let d_omega = [
        x.omega[0] - x.omega_prev[0],
        x.omega[1] - x.omega_prev[1],
        x.omega[2] - x.omega_prev[2],
    ];
    let accel = norm3(d_omega) / (x.dt * cfg.sigma_smooth);
    let r_smooth = if cfg.smooth_as_penalty {
        -cfg.w_smooth * accel
    } else {
        cfg.w_smooth * (-accel).exp()
    };
    let r_vel = cfg.w_vel * sq(x.qdot);
    let r_act = cfg.w_act * sq(x.action);
    let rate: f64 = x
        .action
        .iter()
        .zip(x.prev_action)
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    let r_rate = cfg.w_rate * rate;
    RewardTerms {
        r_pos,
        r_mag,
        r_dir,
        r_smooth,
        r_vel,
        r_act,
        r_rate,
        total: r_pos + r_mag + r_dir + r_smooth + r_vel + r_act + r_rate,
    }
}
