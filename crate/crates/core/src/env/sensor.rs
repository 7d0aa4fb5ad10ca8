//! Noisy proprioceptive readings and the history window the student sees.

use std::collections::VecDeque;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::{SensorConfig, SensorMode};

/// One noisy proprioceptive reading.
#[derive(Clone, Debug, PartialEq)]
pub struct Reading {
    pub pos: Vec<f64>,
    pub vel: Vec<f64>,
}

/// Student-visible observation at one policy step.
#[derive(Clone, Debug, PartialEq)]
pub struct StudentObs {
    /// `T` readings, oldest first, each laid out as `[pos (D), vel (D)]`.
    pub history: Vec<f64>,
    /// `[prev raw action (D), prev applied command (D)]`.
    pub action_ctx: Vec<f64>,
    pub command: [f64; 6],
}

#[derive(Clone, Debug)]
pub struct SensorModel {
    pub cfg: SensorConfig,
    bias: Vec<f64>,
    prev_motor: Vec<f64>,
    window: VecDeque<Reading>,
    rng: ChaCha8Rng,
}

fn gauss(rng: &mut ChaCha8Rng, std: f64) -> f64 {
    if std == 0.0 {
        return 0.0;
    }
    std * rng.sample::<f64, _>(StandardNormal)
}

impl SensorModel {
    pub fn new(cfg: SensorConfig, dof: usize, rng: ChaCha8Rng) -> Self {
        Self {
            cfg,
            bias: vec![0.0; dof],
            prev_motor: vec![0.0; dof],
            window: VecDeque::new(),
            rng,
        }
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    /// Resamples the episode bias and fills the window with the first reading.
    pub fn reset(&mut self, rng: ChaCha8Rng, q: &[f64], motor: &[f64]) {
        self.rng = rng;
        let sb = self.cfg.bias_std;
        for b in self.bias.iter_mut() {
            *b = gauss(&mut self.rng, sb);
        }
        self.prev_motor.copy_from_slice(motor);
        let zero = vec![0.0; q.len()];
        let first = self.read(q, &zero, motor, 1.0);
        self.window.clear();
        for _ in 0..self.cfg.history {
            self.window.push_back(first.clone());
        }
    }

    fn read(&mut self, q: &[f64], qdot: &[f64], motor: &[f64], dt: f64) -> Reading {
        let d = q.len();
        let mut pos = Vec::with_capacity(d);
        let mut vel = Vec::with_capacity(d);
        for j in 0..d {
            let (p, v) = match self.cfg.mode {
                SensorMode::JointSensor => (q[j], qdot[j]),
                SensorMode::MotorEncoder => (motor[j], (motor[j] - self.prev_motor[j]) / dt),
            };
            pos.push(p + self.bias[j] + gauss(&mut self.rng, self.cfg.position_noise));
            vel.push(v + gauss(&mut self.rng, self.cfg.velocity_noise));
        }
        self.prev_motor.copy_from_slice(motor);
        Reading { pos, vel }
    }

    /// Takes a reading `dt` seconds after the previous one and appends it to the window.
    pub fn observe(&mut self, q: &[f64], qdot: &[f64], motor: &[f64], dt: f64) {
        let r = self.read(q, qdot, motor, dt);
        self.window.pop_front();
        self.window.push_back(r);
    }

    pub fn latest(&self) -> &Reading {
        self.window.back().expect("sensor window is filled at reset")
    }

    pub fn history_into(&self, out: &mut Vec<f64>) {
        out.clear();
        for r in &self.window {
            out.extend_from_slice(&r.pos);
            out.extend_from_slice(&r.vel);
        }
    }
}
