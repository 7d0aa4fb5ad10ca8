//! Timed rotation trials.

use std::f64::consts::{PI, TAU};

use crate::env::{EnvConfig, EventKind, HandEnv, RewardTerms, StepOutput, POLICY_DT};
use crate::error::Result;
use crate::io::{fmt_f64, Table};
use crate::student::StudentPolicy;
use crate::teacher::TeacherNets;

use super::metrics::{aggregate, trial_metrics, Aggregate, TrialEvent, TrialMetrics};

/// Anything that maps a batch of environments to row-major actions.
pub trait Policy {
    fn act(&mut self, envs: &[HandEnv]) -> Result<Vec<f64>>;
}

impl Policy for TeacherNets<f32> {
    fn act(&mut self, envs: &[HandEnv]) -> Result<Vec<f64>> {
        let mut obs = Vec::new();
        let mut buf = Vec::new();
        for e in envs {
            e.teacher_obs_into(&mut buf);
            obs.extend_from_slice(&buf);
        }
        self.act_deterministic(&obs)
    }
}

impl Policy for StudentPolicy {
    fn act(&mut self, envs: &[HandEnv]) -> Result<Vec<f64>> {
        let obs: Vec<_> = envs.iter().map(HandEnv::student_obs).collect();
        StudentPolicy::act(self, &obs)
    }
}

/// Zero action: the hand holds its mid pose.
#[derive(Clone, Copy, Debug, Default)]
pub struct HoldStill;

impl Policy for HoldStill {
    fn act(&mut self, envs: &[HandEnv]) -> Result<Vec<f64>> {
        Ok(vec![0.0; envs.iter().map(HandEnv::dof).sum()])
    }
}

/// Open-loop finger gait: opposite fingers in phase, proximal joints swing
/// while distal joints alternate grip, turning in the commanded direction.
#[derive(Clone, Copy, Debug)]
pub struct ScriptedGait {
    pub frequency: f64,
    pub swing: f64,
    pub grip: f64,
}

impl Default for ScriptedGait {
    fn default() -> Self {
        Self {
            frequency: 1.5,
            swing: 0.8,
            grip: 0.6,
        }
    }
}

impl Policy for ScriptedGait {
    fn act(&mut self, envs: &[HandEnv]) -> Result<Vec<f64>> {
        let mut out = Vec::new();
        for e in envs {
            let jpf = e.config().hand.joints_per_finger;
            let dir = e.command()[5].signum();
            let mut a = vec![0.0; e.dof()];
            for f in 0..e.config().hand.n_fingers {
                let ph = TAU * self.frequency * e.time() + (f % 2) as f64 * PI;
                a[f * jpf] = dir * self.swing * ph.sin();
                if jpf > 1 {
                    a[f * jpf + 1] = self.grip * ph.cos();
                }
            }
            out.extend(a);
        }
        Ok(out)
    }
}

/// Per-trial metrics, their aggregate, and the raw event log.
#[derive(Clone, Debug, PartialEq)]
pub struct TrialReport {
    pub trials: Vec<TrialMetrics>,
    pub aggregate: Aggregate,
    pub events: Vec<TrialEvent>,
    pub duration: f64,
}

/// Column names of the per-step trajectory log.
pub fn trajectory_header(d: usize) -> Vec<String> {
    let mut h = vec!["time_s".to_string(), "env_id".to_string()];
    for prefix in ["q", "qdot", "motor"] {
        h.extend((0..d).map(|j| format!("{prefix}{j}")));
    }
    h.extend(["obj_x", "obj_y", "yaw", "omega_z"].map(String::from));
    h.extend((0..d).map(|j| format!("action{j}")));
    h.push("reward_total".into());
    h.extend(RewardTerms::NAMES[..7].iter().map(|n| n.to_string()));
    h.push("event".into());
    h
}

/// Runs `n_trials` trials of `duration` seconds side by side. Drops do not
/// end a trial: the object is re-seated and the clock keeps running.
pub fn run_trial(policy: &mut dyn Policy, env_cfg: &EnvConfig, duration: f64, n_trials: usize, seed: u64) -> Result<TrialReport> {
    run_trial_logged(policy, env_cfg, duration, n_trials, seed, None)
}

/// [`run_trial`] that also appends one row per env and policy step to `log`
/// (see [`trajectory_header`]).
pub fn run_trial_logged(
    policy: &mut dyn Policy,
    env_cfg: &EnvConfig,
    duration: f64,
    n_trials: usize,
    seed: u64,
    mut log: Option<&mut Table>,
) -> Result<TrialReport> {
    let mut cfg = env_cfg.clone();
    cfg.task.episode_seconds = duration;
    cfg.task.terminate_on_drop = false;
    cfg.validate()?;
    let mut envs = (0..n_trials)
        .map(|k| HandEnv::new(cfg.clone(), seed, k))
        .collect::<Result<Vec<_>>>()?;
    for e in &mut envs {
        e.reset();
    }
    let d = cfg.dof();
    let steps = (duration / POLICY_DT).round() as usize;
    let mut per_trial: Vec<Vec<TrialEvent>> = vec![Vec::new(); n_trials];
    for _ in 0..steps {
        let actions = policy.act(&envs)?;
        for (k, e) in envs.iter_mut().enumerate() {
            let action = &actions[k * d..(k + 1) * d];
            let yaw0 = e.object().yaw;
            let out = e.step(action)?;
            if let Some(t) = log.as_deref_mut() {
                t.push(trajectory_row(e, k, action, &out, yaw0));
            }
            per_trial[k].extend(out.events.iter().map(|ev| TrialEvent::from_env(k, ev, out.omega_cmd)));
        }
    }
    let trials: Vec<TrialMetrics> = per_trial.iter().map(|ev| trial_metrics(ev, duration)).collect();
    Ok(TrialReport {
        aggregate: aggregate(&trials),
        trials,
        events: per_trial.into_iter().flatten().collect(),
        duration,
    })
}

fn trajectory_row(e: &HandEnv, k: usize, action: &[f64], out: &StepOutput, yaw0: f64) -> Vec<String> {
    let f = |v: &f64| fmt_f64(*v);
    let mut row = vec![fmt_f64(e.time()), k.to_string()];
    row.extend(e.q().iter().map(f));
    row.extend(e.qdot().iter().map(f));
    row.extend(e.motor().iter().map(f));
    let o = e.object();
    let omega = (o.yaw - yaw0) / POLICY_DT;
    row.extend([o.pos[0], o.pos[1], o.yaw, omega].iter().map(f));
    row.extend(action.iter().map(f));
    row.push(fmt_f64(out.reward.total));
    row.extend(out.reward.as_array()[..7].iter().map(f));
    let events: Vec<&str> = out
        .events
        .iter()
        .map(|ev| match ev.kind {
            EventKind::Rotation(s) if s > 0 => "rotation_ccw",
            EventKind::Rotation(_) => "rotation_cw",
            EventKind::Drop => "drop",
        })
        .collect();
    row.push(events.join(";"));
    row
}
