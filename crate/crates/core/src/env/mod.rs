//! Planar tendon-driven hand with a disk object.

mod config;
pub mod contact;
pub mod events;
pub mod kinematics;
pub mod reward;
pub mod sensor;
pub mod transmission;
mod vec_env;

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub use config::*;
pub use contact::{ContactParams, ContactReport, ObjectState};
pub use events::{Event, EventKind};
pub use reward::RewardTerms;
pub use sensor::{Reading, StudentObs};
pub use vec_env::VecEnv;

use crate::error::{Error, Result};
use contact::contact_forces;
use events::{DropDetector, RotationCounter};
use kinematics::{build_fingers, Finger, TipFrame};
use reward::{reward_terms, RewardInputs};
use sensor::SensorModel;

/// Physics substep, s.
pub const SIM_DT: f64 = 1.0 / 120.0;
/// Physics substeps per policy step.
pub const DECIMATION: usize = 6;
/// Policy period, s.
pub const POLICY_DT: f64 = SIM_DT * DECIMATION as f64;

pub fn teacher_obs_len(dof: usize) -> usize {
    4 * dof + 13
}

/// Deterministic per-episode seed.
pub fn episode_seed(base: u64, env_idx: usize, episode: u64) -> u64 {
    let mut z = splitmix(base);
    z = splitmix(z ^ env_idx as u64);
    splitmix(z ^ episode)
}

fn splitmix(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Physical parameters drawn at reset.
#[derive(Clone, Debug, PartialEq)]
pub struct EpisodeParams {
    pub series_stiffness: f64,
    pub series_damping: f64,
    pub joint_viscous: f64,
    pub joint_inertia: f64,
    pub hand_friction: f64,
    pub obj_friction: f64,
    pub obj_mass: f64,
    pub obj_inertia: f64,
}

#[derive(Clone, Debug, Default)]
pub struct StepOutput {
    pub reward: RewardTerms,
    /// Episode ended by a drop.
    pub terminated: bool,
    /// Episode ended by the time limit.
    pub truncated: bool,
    pub events: Vec<Event>,
    /// Commanded yaw rate during this step.
    pub omega_cmd: f64,
    /// Observation reached before an automatic reset (set by [`VecEnv`]).
    pub final_obs: Option<Vec<f64>>,
}

impl StepOutput {
    pub fn done(&self) -> bool {
        self.terminated || self.truncated
    }
}

fn uniform(rng: &mut ChaCha8Rng, [lo, hi]: [f64; 2]) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.random_range(lo..hi)
    }
}

fn log_uniform(rng: &mut ChaCha8Rng, [lo, hi]: [f64; 2]) -> f64 {
    uniform(rng, [lo.ln(), hi.ln()]).exp()
}

/// Gaussian elimination with partial pivoting on a row-major `n × n` system.
fn solve_small(a: &mut [f64], b: &mut [f64], n: usize) {
    for c in 0..n {
        let mut piv = c;
        for r in c + 1..n {
            if a[r * n + c].abs() > a[piv * n + c].abs() {
                piv = r;
            }
        }
        if piv != c {
            for k in 0..n {
                a.swap(c * n + k, piv * n + k);
            }
            b.swap(c, piv);
        }
        let d = a[c * n + c];
        for r in c + 1..n {
            let f = a[r * n + c] / d;
            if f != 0.0 {
                for k in c..n {
                    a[r * n + k] -= f * a[c * n + k];
                }
                b[r] -= f * b[c];
            }
        }
    }
    for c in (0..n).rev() {
        let mut s = b[c];
        for k in c + 1..n {
            s -= a[c * n + k] * b[k];
        }
        b[c] = s / a[c * n + c];
    }
}

#[derive(Clone, Debug)]
pub struct HandEnv {
    cfg: EnvConfig,
    fingers: Vec<Finger>,
    limits: Vec<[f64; 2]>,
    dof: usize,
    jpf: usize,
    pub(crate) base_seed: u64,
    pub(crate) env_idx: usize,
    episode: u64,
    params: EpisodeParams,

    q: Vec<f64>,
    qdot: Vec<f64>,
    motor: Vec<f64>,
    eff: Vec<f64>,
    obj: ObjectState,
    applied: Vec<f64>,
    prev_action: Vec<f64>,
    command: [f64; 6],
    time: f64,
    omega_prev: f64,
    n_contacts: usize,
    rotations: RotationCounter,
    drops: DropDetector,
    sensor: SensorModel,
    pose_rng: ChaCha8Rng,
    /// Error added to the privileged object pose: x, y (m) and yaw (rad).
    pose_err: [f64; 3],

    frames: Vec<TipFrame>,
    report: ContactReport,
}

impl HandEnv {
    pub fn new(cfg: EnvConfig, base_seed: u64, env_idx: usize) -> Result<Self> {
        cfg.validate()?;
        let dof = cfg.dof();
        let fingers = build_fingers(&cfg.hand);
        let limits = cfg.hand.all_limits();
        let sensor = SensorModel::new(cfg.sensor.clone(), dof, ChaCha8Rng::seed_from_u64(0));
        let drops = DropDetector::new(cfg.task.drop_distance, cfg.task.support_timeout);
        let jpf = cfg.hand.joints_per_finger;
        let n_fingers = fingers.len();
        let mut env = Self {
            params: EpisodeParams {
                series_stiffness: cfg.hand.series_stiffness,
                series_damping: cfg.hand.series_damping,
                joint_viscous: cfg.hand.joint_viscous,
                joint_inertia: cfg.hand.joint_inertia,
                hand_friction: cfg.hand.friction,
                obj_friction: cfg.object.friction,
                obj_mass: cfg.object.mass,
                obj_inertia: cfg.object.inertia_for(cfg.object.mass),
            },
            cfg,
            fingers,
            limits,
            dof,
            jpf,
            base_seed,
            env_idx,
            episode: 0,
            q: vec![0.0; dof],
            qdot: vec![0.0; dof],
            motor: vec![0.0; dof],
            eff: vec![0.0; dof],
            obj: ObjectState::default(),
            applied: vec![0.0; dof],
            prev_action: vec![0.0; dof],
            command: [0.0; 6],
            time: 0.0,
            omega_prev: 0.0,
            n_contacts: 0,
            rotations: RotationCounter::default(),
            drops,
            sensor,
            pose_rng: ChaCha8Rng::seed_from_u64(0),
            pose_err: [0.0; 3],
            frames: vec![
                TipFrame {
                    tip: [0.0; 2],
                    jac: Vec::new()
                };
                n_fingers
            ],
            report: ContactReport::default(),
        };
        env.reset();
        env.episode = 0;
        Ok(env)
    }

    pub fn config(&self) -> &EnvConfig {
        &self.cfg
    }

    pub fn dof(&self) -> usize {
        self.dof
    }

    pub fn limits(&self) -> &[[f64; 2]] {
        &self.limits
    }

    pub fn episode(&self) -> u64 {
        self.episode
    }

    /// Starts the next episode with the derived seed and returns the first teacher observation.
    pub fn reset(&mut self) -> Vec<f64> {
        let seed = episode_seed(self.base_seed, self.env_idx, self.episode);
        self.episode += 1;
        self.reset_with_seed(seed)
    }

    pub fn reset_with_seed(&mut self, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut sensor_rng = ChaCha8Rng::seed_from_u64(seed);
        sensor_rng.set_stream(1);
        self.pose_rng = ChaCha8Rng::seed_from_u64(seed);
        self.pose_rng.set_stream(2);
        let r = self.cfg.randomization.clone();
        let h = &self.cfg.hand;
        let o = &self.cfg.object;
        let damp = log_uniform(&mut rng, r.damping_scale);
        let mass_scale = uniform(&mut rng, r.obj_mass_scale);
        let obj_mass = o.mass * mass_scale;
        self.params = EpisodeParams {
            hand_friction: h.friction * uniform(&mut rng, r.hand_friction_scale),
            joint_inertia: h.joint_inertia * uniform(&mut rng, r.link_mass_scale),
            series_stiffness: h.series_stiffness * log_uniform(&mut rng, r.stiffness_scale),
            series_damping: h.series_damping * damp,
            joint_viscous: h.joint_viscous * damp,
            obj_friction: uniform(&mut rng, r.obj_friction),
            obj_mass,
            obj_inertia: o.inertia_for(obj_mass),
        };
        let yaw = uniform(&mut rng, r.initial_yaw);
        let [slo, shi] = self.cfg.task.command_speed;
        let speed = uniform(&mut rng, [slo, shi]);
        let sign = match self.cfg.task.command_sign {
            CommandSign::Positive => 1.0,
            CommandSign::Negative => -1.0,
            CommandSign::Random => {
                if rng.random::<bool>() {
                    1.0
                } else {
                    -1.0
                }
            }
        };
        self.command = [0.0, 0.0, 0.0, 0.0, 0.0, sign * speed];

        for j in 0..self.dof {
            let [lo, hi] = self.limits[j];
            let mid = 0.5 * (lo + hi);
            self.q[j] = mid;
            self.motor[j] = mid;
            self.eff[j] = mid;
        }
        self.qdot.fill(0.0);
        self.applied.fill(0.0);
        self.prev_action.fill(0.0);
        self.obj = ObjectState {
            yaw,
            ..ObjectState::default()
        };
        self.time = 0.0;
        self.omega_prev = 0.0;
        self.rotations = RotationCounter::default();
        self.drops.reset();
        self.update_contacts();
        self.sensor.reset(sensor_rng, &self.q, &self.motor);
        self.sample_pose_error();
        self.teacher_obs()
    }

    pub fn params(&self) -> &EpisodeParams {
        &self.params
    }

    pub fn q(&self) -> &[f64] {
        &self.q
    }

    pub fn qdot(&self) -> &[f64] {
        &self.qdot
    }

    pub fn motor(&self) -> &[f64] {
        &self.motor
    }

    pub fn theta_eff(&self) -> &[f64] {
        &self.eff
    }

    pub fn object(&self) -> &ObjectState {
        &self.obj
    }

    pub fn command(&self) -> [f64; 6] {
        self.command
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn n_contacts(&self) -> usize {
        self.n_contacts
    }

    /// Whether each fingertip currently touches the object.
    pub fn tip_contacts(&self) -> Vec<bool> {
        if !self.cfg.object.present {
            return vec![false; self.fingers.len()];
        }
        self.report.tips.iter().map(|t| t.active).collect()
    }

    pub fn applied_action(&self) -> &[f64] {
        &self.applied
    }

    pub fn prev_action(&self) -> &[f64] {
        &self.prev_action
    }

    pub fn sensor_bias(&self) -> &[f64] {
        self.sensor.bias()
    }

    pub fn latest_reading(&self) -> &Reading {
        self.sensor.latest()
    }

    pub fn rotation_accumulator(&self) -> f64 {
        self.rotations.accumulated
    }

    /// Object position lifted to 3D (`z = 0`).
    pub fn object_pos3(&self) -> [f64; 3] {
        [self.obj.pos[0], self.obj.pos[1], 0.0]
    }

    pub fn set_command(&mut self, omega_z: f64) {
        self.command = [0.0, 0.0, 0.0, 0.0, 0.0, omega_z];
    }

    pub fn set_object(&mut self, obj: ObjectState) {
        self.obj = obj;
        self.update_contacts();
    }

    /// Joint command for a normalised action.
    pub fn joint_target(&self, j: usize, a: f64) -> f64 {
        let [lo, hi] = self.limits[j];
        0.5 * (lo + hi) + 0.5 * (hi - lo) * a
    }

    pub fn joint_targets(&self) -> Vec<f64> {
        (0..self.dof).map(|j| self.joint_target(j, self.applied[j])).collect()
    }

    /// Total kinetic energy of joints and object.
    pub fn kinetic_energy(&self) -> f64 {
        let p = &self.params;
        let joints: f64 = self.qdot.iter().map(|v| 0.5 * p.joint_inertia * v * v).sum();
        joints + self.object_kinetic_energy()
    }

    pub fn object_kinetic_energy(&self) -> f64 {
        if !self.cfg.object.present {
            return 0.0;
        }
        let p = &self.params;
        let v = self.obj.vel;
        0.5 * p.obj_mass * (v[0] * v[0] + v[1] * v[1]) + 0.5 * p.obj_inertia * self.obj.omega * self.obj.omega
    }

    /// Flattened state, used for determinism checks.
    pub fn state_vector(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(5 * self.dof + 12);
        v.extend_from_slice(&self.q);
        v.extend_from_slice(&self.qdot);
        v.extend_from_slice(&self.motor);
        v.extend_from_slice(&self.eff);
        v.extend_from_slice(&self.applied);
        v.extend_from_slice(&[
            self.obj.pos[0],
            self.obj.pos[1],
            self.obj.yaw,
            self.obj.vel[0],
            self.obj.vel[1],
            self.obj.omega,
            self.time,
            self.rotations.accumulated,
        ]);
        v.extend_from_slice(&self.command);
        v
    }

    fn contact_params(&self) -> ContactParams {
        let o = &self.cfg.object;
        let h = &self.cfg.hand;
        ContactParams {
            radius: o.radius(),
            stiffness: h.contact_stiffness,
            damping: h.contact_damping,
            friction: 0.5 * (self.params.hand_friction + self.params.obj_friction),
            v_eps: h.friction_velocity,
            load_force: self.params.obj_mass * h.gravity * h.load_fraction,
        }
    }

    fn update_contacts(&mut self) {
        for (i, f) in self.fingers.iter().enumerate() {
            f.frame(&self.q[i * self.jpf..(i + 1) * self.jpf], &mut self.frames[i]);
        }
        if self.cfg.object.present {
            let cp = self.contact_params();
            contact_forces(&self.fingers, &self.frames, &self.qdot, &self.obj, &cp, &mut self.report);
            self.n_contacts = self.report.n_contacts;
        } else {
            self.report.n_contacts = 0;
            self.n_contacts = 0;
        }
    }

    fn micro_step(&mut self, h: f64, targets: &[f64], cp: &ContactParams) {
        let hc = &self.cfg.hand;
        let p = &self.params;
        let beta = hc.backlash_halfwidth;
        for j in 0..self.dof {
            self.motor[j] = transmission::motor_lag(self.motor[j], targets[j], h, hc.motor_time_constant);
            self.eff[j] = transmission::play(self.motor[j], self.eff[j], beta);
        }
        for (i, f) in self.fingers.iter().enumerate() {
            f.frame(&self.q[i * self.jpf..(i + 1) * self.jpf], &mut self.frames[i]);
        }
        let present = self.cfg.object.present;
        if present {
            contact_forces(&self.fingers, &self.frames, &self.qdot, &self.obj, cp, &mut self.report);
        } else {
            self.report.tips.clear();
            self.report.n_contacts = 0;
        }
        self.n_contacts = self.report.n_contacts;

        let damp = p.series_damping + p.joint_viscous;
        let n = self.jpf;
        let mut a = [0.0; 36];
        let mut b = [0.0; 6];
        let mut jt = [0.0; 6];
        for i in 0..self.fingers.len() {
            let a = &mut a[..n * n];
            let b = &mut b[..n];
            a.fill(0.0);
            for k in 0..n {
                let j = i * n + k;
                a[k * n + k] = p.joint_inertia + h * damp;
                let spring = p.series_stiffness * (self.eff[j] - self.q[j]);
                let contact = if present { self.report.joint_torque[j] } else { 0.0 };
                b[k] = h * (spring - damp * self.qdot[j] + contact);
            }
            if present && self.report.tips[i].active {
                let tc = &self.report.tips[i];
                for (k, col) in self.frames[i].jac.iter().enumerate() {
                    jt[k] = col[0] * tc.tangent[0] + col[1] * tc.tangent[1];
                }
                let s = h * tc.slope;
                for r in 0..n {
                    for c in 0..n {
                        a[r * n + c] += s * jt[r] * jt[c];
                    }
                }
            }
            solve_small(a, b, n);
            for k in 0..n {
                self.qdot[i * n + k] += b[k];
            }
        }
        if hc.wrist {
            let j = self.dof - 1;
            let spring = p.series_stiffness * (self.eff[j] - self.q[j]);
            self.qdot[j] += h * (spring - damp * self.qdot[j]) / (p.joint_inertia + h * damp);
        }
        for j in 0..self.dof {
            self.q[j] += h * self.qdot[j];
            let [lo, hi] = self.limits[j];
            if self.q[j] < lo || self.q[j] > hi {
                self.q[j] = self.q[j].clamp(lo, hi);
                self.qdot[j] = 0.0;
            }
        }

        if present {
            let oc = &self.cfg.object;
            let (m, inertia) = (p.obj_mass, p.obj_inertia);
            // Palm friction as a lagged-coefficient viscous law, smooth near rest.
            let eps = self.cfg.hand.friction_velocity;
            let support = oc.palm_friction * m * self.cfg.hand.gravity;
            let arm = 2.0 * cp.radius / 3.0;
            let o = &self.obj;
            let speed = o.vel[0].hypot(o.vel[1]);
            let lin = m * oc.linear_damping + support / speed.hypot(eps);
            let rot = oc.rotational_damping + support * arm * arm / (o.omega * arm).hypot(eps);
            let mut a = [0.0; 9];
            a[0] = m + h * lin;
            a[4] = m + h * lin;
            a[8] = inertia + h * rot;
            let r = cp.radius;
            for tc in self.report.tips.iter().filter(|t| t.active) {
                let v = [tc.tangent[0], tc.tangent[1], r];
                let s = h * tc.slope;
                for row in 0..3 {
                    for col in 0..3 {
                        a[row * 3 + col] += s * v[row] * v[col];
                    }
                }
            }
            let o = &self.obj;
            let mut b = [
                h * (self.report.force[0] - lin * o.vel[0]),
                h * (self.report.force[1] - lin * o.vel[1]),
                h * (self.report.torque - rot * o.omega),
            ];
            solve_small(&mut a, &mut b, 3);
            let o = &mut self.obj;
            o.vel[0] += b[0];
            o.vel[1] += b[1];
            o.omega += b[2];
            o.pos[0] += h * o.vel[0];
            o.pos[1] += h * o.vel[1];
            o.yaw += h * o.omega;
        }
    }

    fn finite(&self) -> bool {
        let o = &self.obj;
        self.q.iter().chain(&self.qdot).chain(&self.motor).all(|v| v.is_finite())
            && [o.pos[0], o.pos[1], o.yaw, o.vel[0], o.vel[1], o.omega]
                .iter()
                .all(|v| v.is_finite())
    }

    fn diverged(&self) -> Error {
        Error::Diverged {
            time: self.time,
            snapshot: format!(
                "q={:?} qdot={:?} motor={:?} object={:?}",
                self.q, self.qdot, self.motor, self.obj
            ),
        }
    }

    fn reseat_object(&mut self) {
        self.obj = ObjectState {
            yaw: self.obj.yaw,
            ..ObjectState::default()
        };
    }

    /// Advances one policy period with a raw action in `[-1, 1]^D`.
    pub fn step(&mut self, action: &[f64]) -> Result<StepOutput> {
        if action.len() != self.dof || action.iter().any(|a| !a.is_finite()) {
            return Err(Error::Contract(format!(
                "action must hold {} finite values, got {:?}",
                self.dof, action
            )));
        }
        let alpha = self.cfg.task.ema_alpha;
        for j in 0..self.dof {
            let a = action[j].clamp(-1.0, 1.0);
            self.applied[j] = alpha * a + (1.0 - alpha) * self.applied[j];
        }
        let targets = self.joint_targets();
        let cp = self.contact_params();
        let micro = self.cfg.hand.solver_iterations;
        let h = SIM_DT / micro as f64;
        let yaw0 = self.obj.yaw;
        let mut out = StepOutput {
            omega_cmd: self.command[5],
            ..StepOutput::default()
        };
        let mut turns = Vec::new();
        let mut dropped = false;
        for _ in 0..DECIMATION {
            let yaw_before = self.obj.yaw;
            for _ in 0..micro {
                self.micro_step(h, &targets, &cp);
            }
            self.time += SIM_DT;
            if !self.finite() {
                return Err(self.diverged());
            }
            if !self.cfg.object.present {
                continue;
            }
            self.rotations.push(self.obj.yaw - yaw_before, &mut turns);
            for s in turns.drain(..) {
                out.events.push(Event {
                    time: self.time,
                    kind: EventKind::Rotation(s),
                });
            }
            let dist = self.obj.pos[0].hypot(self.obj.pos[1]);
            if self.drops.update(self.n_contacts, dist, SIM_DT) {
                out.events.push(Event {
                    time: self.time,
                    kind: EventKind::Drop,
                });
                dropped = true;
                self.reseat_object();
                if self.cfg.task.terminate_on_drop {
                    break;
                }
            }
        }
        // Snap the clock to the policy grid so long trials do not drift.
        let steps = (self.time / POLICY_DT).round();
        self.time = steps * POLICY_DT;

        let omega = if dropped { 0.0 } else { (self.obj.yaw - yaw0) / POLICY_DT };
        let pos = self.object_pos3();
        out.reward = reward_terms(
            &self.cfg.reward,
            &RewardInputs {
                pos_err: [pos[0] - self.command[0], pos[1] - self.command[1], pos[2] - self.command[2]],
                omega: [0.0, 0.0, omega],
                omega_prev: [0.0, 0.0, self.omega_prev],
                omega_cmd: [self.command[3], self.command[4], self.command[5]],
                qdot: &self.qdot,
                action,
                prev_action: &self.prev_action,
                dt: POLICY_DT,
            },
        );
        self.omega_prev = omega;
        self.prev_action.copy_from_slice(action);
        self.sensor.observe(&self.q, &self.qdot, &self.motor, POLICY_DT);
        self.sample_pose_error();
        out.terminated = dropped && self.cfg.task.terminate_on_drop;
        out.truncated = !out.terminated && self.time >= self.cfg.task.episode_seconds - 1e-9;
        Ok(out)
    }

    fn sample_pose_error(&mut self) {
        let s = &self.cfg.sensor;
        if s.pose_noise == 0.0 && s.yaw_noise == 0.0 {
            return;
        }
        let n: [f64; 3] = std::array::from_fn(|_| self.pose_rng.sample(StandardNormal));
        self.pose_err = [n[0] * s.pose_noise, n[1] * s.pose_noise, n[2] * s.yaw_noise];
    }

    /// Privileged observation: `[q_norm, q̇, p_obj, quat, command, prev_action, prev_cmd]`.
    pub fn teacher_obs(&self) -> Vec<f64> {
        let mut o = Vec::with_capacity(teacher_obs_len(self.dof));
        self.teacher_obs_into(&mut o);
        o
    }

    pub fn teacher_obs_into(&self, o: &mut Vec<f64>) {
        let s = &self.cfg.obs;
        o.clear();
        for j in 0..self.dof {
            let [lo, hi] = self.limits[j];
            o.push((2.0 * self.q[j] - lo - hi) / (hi - lo));
        }
        o.extend(self.qdot.iter().map(|v| v * s.velocity_scale));
        let p = self.object_pos3();
        let e = self.pose_err;
        o.extend([p[0] + e[0], p[1] + e[1], p[2]].iter().map(|v| v * s.position_scale));
        let half = 0.5 * (self.obj.yaw + e[2]);
        o.extend_from_slice(&[half.cos(), 0.0, 0.0, half.sin()]);
        o.extend_from_slice(&self.command);
        o.extend_from_slice(&self.prev_action);
        o.extend_from_slice(&self.applied);
    }

    pub fn student_obs(&self) -> StudentObs {
        let mut history = Vec::with_capacity(self.cfg.sensor.history * 2 * self.dof);
        self.sensor.history_into(&mut history);
        let mut action_ctx = Vec::with_capacity(2 * self.dof);
        action_ctx.extend_from_slice(&self.prev_action);
        action_ctx.extend_from_slice(&self.applied);
        StudentObs {
            history,
            action_ctx,
            command: self.command,
        }
    }
}

/// Wraps an angle into `[-π, π)`.
pub fn wrap_angle(a: f64) -> f64 {
    (a + PI).rem_euclid(2.0 * PI) - PI
}
