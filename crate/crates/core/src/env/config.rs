//! Simulator configuration. Every struct deserialises from the `env.*`
//! section of the run config with unknown keys rejected.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

fn bad(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HandConfig {
    pub n_fingers: usize,
    pub joints_per_finger: usize,
    /// Adds one actuated joint with no kinematic effect (parity with a
    /// 16+1 joint hand whose wrist is held fixed).
    pub wrist: bool,
    /// Distance of each finger base from the palm centre, m.
    pub base_radius: f64,
    /// One length per joint in a finger, m.
    pub link_lengths: Vec<f64>,
    /// Angular placement of finger bases around the palm; evenly spaced when empty.
    pub finger_base_angles: Vec<f64>,
    /// Added to each joint angle when computing link headings, rad.
    pub joint_offsets: Vec<f64>,
    /// `[lo, hi]` per joint in a finger, rad.
    pub joint_limits: Vec<[f64; 2]>,
    pub wrist_limits: [f64; 2],
    pub motor_time_constant: f64,
    pub series_stiffness: f64,
    pub series_damping: f64,
    pub backlash_halfwidth: f64,
    pub joint_inertia: f64,
    pub joint_viscous: f64,
    pub contact_stiffness: f64,
    pub contact_damping: f64,
    pub friction: f64,
    /// Velocity scale of the smooth Coulomb law, m/s.
    pub friction_velocity: f64,
    /// Fraction of the object weight carried by the fingertips in contact.
    pub load_fraction: f64,
    pub gravity: f64,
    /// Integration increments inside each 1/120 s physics substep.
    pub solver_iterations: usize,
}

impl Default for HandConfig {
    fn default() -> Self {
        Self {
            n_fingers: 4,
            joints_per_finger: 2,
            wrist: false,
            base_radius: 0.09,
            link_lengths: vec![0.045, 0.035],
            finger_base_angles: Vec::new(),
            joint_offsets: vec![0.0, -1.7],
            joint_limits: vec![[-0.6, 0.6], [0.4, 1.7]],
            wrist_limits: [-0.5, 0.5],
            motor_time_constant: 0.04,
            series_stiffness: 4.0,
            series_damping: 0.05,
            backlash_halfwidth: 0.0,
            joint_inertia: 4e-4,
            joint_viscous: 0.02,
            contact_stiffness: 3000.0,
            contact_damping: 5.0,
            friction: 1.0,
            friction_velocity: 0.02,
            load_fraction: 1.0,
            gravity: 9.81,
            solver_iterations: 8,
        }
    }
}

impl HandConfig {
    /// 17-joint layout: four 4-joint fingers plus a fixed wrist.
    pub fn parity() -> Self {
        Self {
            joints_per_finger: 4,
            wrist: true,
            link_lengths: vec![0.03, 0.02, 0.015, 0.015],
            joint_offsets: vec![0.0, -0.6, -0.5, -0.4],
            joint_limits: vec![[-0.4, 0.4], [0.0, 0.9], [0.0, 0.8], [0.0, 0.7]],
            ..Self::default()
        }
    }

    /// Total actuated joint count.
    pub fn dof(&self) -> usize {
        self.n_fingers * self.joints_per_finger + usize::from(self.wrist)
    }

    pub fn base_angles(&self) -> Vec<f64> {
        if self.finger_base_angles.is_empty() {
            (0..self.n_fingers)
                .map(|i| std::f64::consts::TAU * i as f64 / self.n_fingers as f64)
                .collect()
        } else {
            self.finger_base_angles.clone()
        }
    }

    /// Joint limits for every actuated joint, finger-major then wrist.
    pub fn all_limits(&self) -> Vec<[f64; 2]> {
        let mut out = Vec::with_capacity(self.dof());
        for _ in 0..self.n_fingers {
            out.extend_from_slice(&self.joint_limits);
        }
        if self.wrist {
            out.push(self.wrist_limits);
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        let j = self.joints_per_finger;
        if self.n_fingers == 0 || j == 0 || j > 6 {
            return Err(bad("hand needs at least one finger and 1..=6 joints per finger"));
        }
        if self.link_lengths.len() != j || self.joint_offsets.len() != j || self.joint_limits.len() != j {
            return Err(bad(format!(
                "link_lengths, joint_offsets and joint_limits need {j} entries each"
            )));
        }
        if !self.finger_base_angles.is_empty() && self.finger_base_angles.len() != self.n_fingers {
            return Err(bad("finger_base_angles must be empty or have one entry per finger"));
        }
        let positive = [
            ("base_radius", self.base_radius),
            ("motor_time_constant", self.motor_time_constant),
            ("series_stiffness", self.series_stiffness),
            ("series_damping", self.series_damping),
            ("joint_inertia", self.joint_inertia),
            ("joint_viscous", self.joint_viscous),
            ("contact_stiffness", self.contact_stiffness),
            ("contact_damping", self.contact_damping),
            ("friction_velocity", self.friction_velocity),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(bad(format!("env.hand.{name} must be > 0, got {v}")));
            }
        }
        if self.link_lengths.iter().any(|&l| !(l > 0.0)) {
            return Err(bad("link lengths must be > 0"));
        }
        if !(self.backlash_halfwidth >= 0.0) || !(self.friction >= 0.0) || !(self.load_fraction >= 0.0) {
            return Err(bad("backlash_halfwidth, friction and load_fraction must be >= 0"));
        }
        for l in self.joint_limits.iter().chain(std::iter::once(&self.wrist_limits)) {
            if !(l[0] < l[1]) {
                return Err(bad(format!("joint limit {l:?} needs lo < hi")));
            }
        }
        if self.solver_iterations == 0 {
            return Err(bad("solver_iterations must be >= 1"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ObjectConfig {
    pub present: bool,
    /// Cube edge, m. The planar contact disk has radius `edge / 2`.
    pub edge: f64,
    pub mass: f64,
    pub friction: f64,
    /// Yaw inertia, kg·m². Zero means a solid cube: `mass · edge² / 6`.
    pub yaw_inertia: f64,
    pub linear_damping: f64,
    pub rotational_damping: f64,
    /// Coulomb coefficient between the object and the palm it rests on.
    pub palm_friction: f64,
}

impl Default for ObjectConfig {
    fn default() -> Self {
        Self::cube(0.055)
    }
}

impl ObjectConfig {
    /// Cube of the given edge with mass scaled by volume (0.1 kg at 55 mm).
    pub fn cube(edge: f64) -> Self {
        Self {
            present: true,
            edge,
            mass: 0.1 * (edge / 0.055).powi(3),
            friction: 0.7,
            yaw_inertia: 0.0,
            linear_damping: 2.0,
            rotational_damping: 2e-4,
            palm_friction: 0.3,
        }
    }

    pub fn absent() -> Self {
        Self {
            present: false,
            ..Self::default()
        }
    }

    pub fn radius(&self) -> f64 {
        0.5 * self.edge
    }

    pub fn inertia_for(&self, mass: f64) -> f64 {
        if self.yaw_inertia > 0.0 {
            self.yaw_inertia * mass / self.mass
        } else {
            mass * self.edge * self.edge / 6.0
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.edge > 0.0 && self.mass > 0.0 && self.yaw_inertia >= 0.0) {
            return Err(bad("object edge and mass must be > 0, yaw_inertia >= 0"));
        }
        if !(0.0..=1.2).contains(&self.friction) {
            return Err(bad(format!("object friction {} outside [0, 1.2]", self.friction)));
        }
        if !(self.linear_damping >= 0.0 && self.rotational_damping >= 0.0 && self.palm_friction >= 0.0) {
            return Err(bad("object damping and palm friction must be >= 0"));
        }
        Ok(())
    }
}

/// Per-episode sampling ranges. Scales multiply nominal values.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RandomizationRanges {
    pub hand_friction_scale: [f64; 2],
    pub link_mass_scale: [f64; 2],
    /// Log-uniform scale applied to series stiffness.
    pub stiffness_scale: [f64; 2],
    /// Log-uniform scale applied to series and joint damping.
    pub damping_scale: [f64; 2],
    /// Absolute object friction coefficient.
    pub obj_friction: [f64; 2],
    pub obj_mass_scale: [f64; 2],
    pub initial_yaw: [f64; 2],
}

impl Default for RandomizationRanges {
    fn default() -> Self {
        Self {
            hand_friction_scale: [0.8, 2.0],
            link_mass_scale: [0.95, 1.05],
            stiffness_scale: [0.8, 1.25],
            damping_scale: [0.8, 1.25],
            obj_friction: [0.3, 1.0],
            obj_mass_scale: [0.5, 1.5],
            initial_yaw: [-std::f64::consts::PI, std::f64::consts::PI],
        }
    }
}

impl RandomizationRanges {
    /// Every range collapsed onto the nominal configuration.
    pub fn none(obj: &ObjectConfig) -> Self {
        Self {
            hand_friction_scale: [1.0, 1.0],
            link_mass_scale: [1.0, 1.0],
            stiffness_scale: [1.0, 1.0],
            damping_scale: [1.0, 1.0],
            obj_friction: [obj.friction, obj.friction],
            obj_mass_scale: [1.0, 1.0],
            initial_yaw: [0.0, 0.0],
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ranges = [
            ("hand_friction_scale", self.hand_friction_scale, true),
            ("link_mass_scale", self.link_mass_scale, true),
            ("stiffness_scale", self.stiffness_scale, true),
            ("damping_scale", self.damping_scale, true),
            ("obj_friction", self.obj_friction, false),
            ("obj_mass_scale", self.obj_mass_scale, true),
            ("initial_yaw", self.initial_yaw, false),
        ];
        for (name, [lo, hi], positive) in ranges {
            if !(lo <= hi) {
                return Err(bad(format!("env.randomization.{name}: lo {lo} > hi {hi}")));
            }
            if positive && !(lo > 0.0) {
                return Err(bad(format!("env.randomization.{name} must be strictly positive")));
            }
        }
        if self.obj_friction[0] < 0.0 || self.obj_friction[1] > 1.2 {
            return Err(bad("env.randomization.obj_friction must lie in [0, 1.2]"));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SensorMode {
    /// Angle sensors at the joints.
    JointSensor,
    /// Motor-side encoders; velocity by finite difference.
    MotorEncoder,
}

impl SensorMode {
    pub fn name(self) -> &'static str {
        match self {
            SensorMode::JointSensor => "joint_sensor",
            SensorMode::MotorEncoder => "motor_encoder",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SensorConfig {
    pub mode: SensorMode,
    /// Per-episode bias std, rad.
    pub bias_std: f64,
    /// Per-step position noise std, rad.
    pub position_noise: f64,
    /// Per-step velocity noise std, rad/s.
    pub velocity_noise: f64,
    /// History window length T.
    pub history: usize,
    /// Std of the Gaussian error on the privileged object position, m.
    /// Nonzero values emulate an external pose estimate.
    pub pose_noise: f64,
    /// Std of the Gaussian error on the privileged object yaw, rad.
    pub yaw_noise: f64,
}

impl Default for SensorConfig {
    fn default() -> Self {
        Self {
            mode: SensorMode::JointSensor,
            bias_std: 0.02,
            position_noise: 0.01,
            velocity_noise: 0.1,
            history: 10,
            pose_noise: 0.0,
            yaw_noise: 0.0,
        }
    }
}

impl SensorConfig {
    pub fn noiseless(mut self) -> Self {
        self.bias_std = 0.0;
        self.position_noise = 0.0;
        self.velocity_noise = 0.0;
        self.pose_noise = 0.0;
        self.yaw_noise = 0.0;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let levels = [self.bias_std, self.position_noise, self.velocity_noise, self.pose_noise, self.yaw_noise];
        if !levels.iter().all(|&v| v >= 0.0) {
            return Err(bad("sensor noise levels must be >= 0"));
        }
        if self.history == 0 {
            return Err(bad("env.sensor.history must be >= 1"));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CommandSign {
    Random,
    Positive,
    Negative,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TaskConfig {
    /// EMA smoothing of raw actions; 1 applies raw actions directly.
    pub ema_alpha: f64,
    pub episode_seconds: f64,
    pub terminate_on_drop: bool,
    /// Commanded |omega_z| is drawn uniformly from this range, rad/s.
    pub command_speed: [f64; 2],
    pub command_sign: CommandSign,
    /// Object-centre distance from the palm centre that counts as a drop, m.
    pub drop_distance: f64,
    /// Time with fewer than two fingertip contacts that counts as a drop, s.
    pub support_timeout: f64,
}

impl Default for TaskConfig {
    fn default() -> Self {
        Self {
            ema_alpha: 0.5,
            episode_seconds: 32.0,
            terminate_on_drop: true,
            command_speed: [0.5, 1.5],
            command_sign: CommandSign::Random,
            drop_distance: 0.03,
            support_timeout: 0.25,
        }
    }
}

impl TaskConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.ema_alpha > 0.0 && self.ema_alpha <= 1.0) {
            return Err(bad("env.task.ema_alpha must lie in (0, 1]"));
        }
        let [lo, hi] = self.command_speed;
        if !(0.0 <= lo && lo <= hi && hi <= 1.5) {
            return Err(bad("env.task.command_speed must satisfy 0 <= lo <= hi <= 1.5"));
        }
        if !(self.episode_seconds > 0.0 && self.drop_distance > 0.0 && self.support_timeout > 0.0) {
            return Err(bad("episode_seconds, drop_distance and support_timeout must be > 0"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RewardConfig {
    pub w_pos: f64,
    pub sigma_pos: f64,
    pub w_mag: f64,
    pub sigma_omega: f64,
    pub w_dir: f64,
    pub w_smooth: f64,
    pub sigma_smooth: f64,
    /// Read the smoothness term as a penalty `-w·|Δω|/(Δt·σ)` instead of a
    /// positive kernel.
    pub smooth_as_penalty: bool,
    pub w_vel: f64,
    pub w_act: f64,
    pub w_rate: f64,
}

impl Default for RewardConfig {
    fn default() -> Self {
        Self {
            w_pos: 10.0,
            sigma_pos: 0.02,
            w_mag: 30.0,
            sigma_omega: 0.5,
            w_dir: 60.0,
            w_smooth: 1.0,
            sigma_smooth: 1.0,
            smooth_as_penalty: false,
            w_vel: -1e-5,
            w_act: -2e-4,
            w_rate: -0.075,
        }
    }
}

/// Scaling applied to observation components fed to networks.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ObsConfig {
    pub velocity_scale: f64,
    pub position_scale: f64,
}

impl Default for ObsConfig {
    fn default() -> Self {
        Self {
            velocity_scale: 0.1,
            position_scale: 20.0,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnvConfig {
    pub hand: HandConfig,
    pub object: ObjectConfig,
    pub randomization: RandomizationRanges,
    pub sensor: SensorConfig,
    pub task: TaskConfig,
    pub reward: RewardConfig,
    pub obs: ObsConfig,
}

impl EnvConfig {
    pub fn validate(&self) -> Result<()> {
        self.hand.validate()?;
        self.object.validate()?;
        self.randomization.validate()?;
        self.sensor.validate()?;
        self.task.validate()?;
        if !(self.reward.sigma_pos > 0.0 && self.reward.sigma_omega > 0.0 && self.reward.sigma_smooth > 0.0) {
            return Err(bad("reward temperatures must be > 0"));
        }
        Ok(())
    }

    pub fn dof(&self) -> usize {
        self.hand.dof()
    }

    /// Nominal physics with no randomisation and no sensor noise.
    pub fn deterministic(mut self) -> Self {
        self.randomization = RandomizationRanges::none(&self.object);
        self.sensor = self.sensor.noiseless();
        self
    }
}
