//! Object-position and joint-state reconstruction accuracy across encoders.

use crate::env::{EnvConfig, HandEnv};
use crate::error::{Error, Result};
use crate::io::{fmt_f64, Table};
use crate::student::StudentPolicy;
use crate::teacher::TeacherNets;

use super::metrics::mean_std;
use super::stats::{bonferroni, ttest_paired, TTest};

/// RMSE of one student on one environment's trajectory.
#[derive(Clone, Debug, PartialEq)]
pub struct EnvRecon {
    pub env: usize,
    /// Euclidean position error RMSE, mm.
    pub pos_mm: f64,
    pub axis_mm: [f64; 3],
    /// Per joint, rad.
    pub q: Vec<f64>,
    /// Per joint, rad/s.
    pub qdot: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ArchRecon {
    pub name: String,
    pub envs: Vec<EnvRecon>,
    pub pos_mean: f64,
    pub pos_std: f64,
    pub q_mean: Vec<f64>,
    pub q_std: Vec<f64>,
    pub qdot_mean: Vec<f64>,
    pub qdot_std: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Comparison {
    pub a: String,
    pub b: String,
    /// Test on per-environment position RMSE, `a - b`.
    pub test: TTest,
    pub p_bonferroni: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReconReport {
    pub archs: Vec<ArchRecon>,
    pub comparisons: Vec<Comparison>,
}

#[derive(Clone, Debug, Default)]
struct Accum {
    n: usize,
    pos: f64,
    axis: [f64; 3],
    q: Vec<f64>,
    qdot: Vec<f64>,
}

/// Replays identical teacher-driven trajectories on `n_envs` environments
/// for `steps` policy steps and scores every student's reconstructions.
pub fn recon_eval(
    students: &[(&str, &StudentPolicy)],
    teacher: &TeacherNets<f32>,
    env_cfg: &EnvConfig,
    n_envs: usize,
    steps: usize,
    seed: u64,
) -> Result<ReconReport> {
    let Some((_, first)) = students.first() else {
        return Err(Error::Contract("reconstruction needs at least one student".into()));
    };
    let (t, d) = (first.net.t, first.net.dof);
    for (name, s) in students {
        if s.net.t != t || s.net.dof != d {
            return Err(Error::Contract(format!(
                "student `{name}` has T={}, D={} but `{}` has T={t}, D={d}",
                s.net.t, s.net.dof, students[0].0
            )));
        }
    }
    if env_cfg.sensor.history != t || env_cfg.dof() != d {
        return Err(Error::Contract(format!(
            "environment has T={}, D={} but the students expect T={t}, D={d}",
            env_cfg.sensor.history,
            env_cfg.dof()
        )));
    }
    let mut cfg = env_cfg.clone();
    cfg.task.terminate_on_drop = false;
    let mut envs = (0..n_envs)
        .map(|i| HandEnv::new(cfg.clone(), seed, i))
        .collect::<Result<Vec<_>>>()?;
    for e in &mut envs {
        e.reset();
    }
    let blank = Accum {
        q: vec![0.0; d],
        qdot: vec![0.0; d],
        ..Accum::default()
    };
    let mut acc = vec![vec![blank; n_envs]; students.len()];
    let mut tobs = Vec::new();
    let mut buf = Vec::new();
    for _ in 0..steps {
        let sobs: Vec<_> = envs.iter().map(HandEnv::student_obs).collect();
        for (k, (_, s)) in students.iter().enumerate() {
            let pred = s.predict(&sobs)?;
            for (i, e) in envs.iter().enumerate() {
                let a = &mut acc[k][i];
                let truth = e.object_pos3();
                a.n += 1;
                for x in 0..3 {
                    let err = pred.obj_pos[i * 3 + x] - truth[x];
                    a.axis[x] += err * err;
                    a.pos += err * err;
                }
                for j in 0..d {
                    a.q[j] += (pred.q[i * d + j] - e.q()[j]).powi(2);
                    a.qdot[j] += (pred.qdot[i * d + j] - e.qdot()[j]).powi(2);
                }
            }
        }
        tobs.clear();
        for e in &envs {
            e.teacher_obs_into(&mut buf);
            tobs.extend_from_slice(&buf);
        }
        let actions = teacher.act_deterministic(&tobs)?;
        for (i, e) in envs.iter_mut().enumerate() {
            if e.step(&actions[i * d..(i + 1) * d])?.done() {
                e.reset();
            }
        }
    }
    let archs: Vec<ArchRecon> = students
        .iter()
        .zip(acc)
        .map(|((name, _), per_env)| {
            let envs: Vec<EnvRecon> = per_env
                .into_iter()
                .enumerate()
                .map(|(i, a)| {
                    let n = a.n.max(1) as f64;
                    EnvRecon {
                        env: i,
                        pos_mm: 1e3 * (a.pos / n).sqrt(),
                        axis_mm: a.axis.map(|s| 1e3 * (s / n).sqrt()),
                        q: a.q.iter().map(|s| (s / n).sqrt()).collect(),
                        qdot: a.qdot.iter().map(|s| (s / n).sqrt()).collect(),
                    }
                })
                .collect();
            summarize(name, envs, d)
        })
        .collect();
    let mut comparisons = Vec::new();
    let m = archs.len() * archs.len().saturating_sub(1) / 2;
    for i in 0..archs.len() {
        for j in i + 1..archs.len() {
            if n_envs < 2 {
                continue;
            }
            let xs: Vec<f64> = archs[i].envs.iter().map(|e| e.pos_mm).collect();
            let ys: Vec<f64> = archs[j].envs.iter().map(|e| e.pos_mm).collect();
            let test = ttest_paired(&xs, &ys)?;
            comparisons.push(Comparison {
                a: archs[i].name.clone(),
                b: archs[j].name.clone(),
                test,
                p_bonferroni: bonferroni(test.p, m),
            });
        }
    }
    Ok(ReconReport { archs, comparisons })
}

fn summarize(name: &str, envs: Vec<EnvRecon>, d: usize) -> ArchRecon {
    let ms = |f: &dyn Fn(&EnvRecon) -> f64| mean_std(envs.iter().map(|e| Some(f(e)))).unwrap_or((0.0, 0.0));
    let (pos_mean, pos_std) = ms(&|e| e.pos_mm);
    let per_joint = |f: &dyn Fn(&EnvRecon, usize) -> f64| -> (Vec<f64>, Vec<f64>) {
        (0..d).map(|j| ms(&|e| f(e, j))).unzip()
    };
    let (q_mean, q_std) = per_joint(&|e, j| e.q[j]);
    let (qdot_mean, qdot_std) = per_joint(&|e, j| e.qdot[j]);
    ArchRecon {
        name: name.to_string(),
        envs,
        pos_mean,
        pos_std,
        q_mean,
        q_std,
        qdot_mean,
        qdot_std,
    }
}

impl ReconReport {
    pub fn arch(&self, name: &str) -> Option<&ArchRecon> {
        self.archs.iter().find(|a| a.name == name)
    }

    pub fn comparison(&self, a: &str, b: &str) -> Option<&Comparison> {
        self.comparisons.iter().find(|c| c.a == a && c.b == b)
    }

    /// One row per architecture and environment.
    pub fn per_env_table(&self) -> Table {
        let mut t = Table::new(
            ["arch", "env", "pos_rmse_mm", "x_rmse_mm", "y_rmse_mm", "z_rmse_mm"]
                .map(String::from)
                .to_vec(),
        );
        for a in &self.archs {
            for e in &a.envs {
                let mut row = vec![a.name.clone(), e.env.to_string(), fmt_f64(e.pos_mm)];
                row.extend(e.axis_mm.iter().map(|&v| fmt_f64(v)));
                t.push(row);
            }
        }
        t
    }

    /// One row per architecture and joint.
    pub fn per_joint_table(&self) -> Table {
        let mut t = Table::new(
            ["arch", "joint", "q_rmse_mean", "q_rmse_std", "qdot_rmse_mean", "qdot_rmse_std"]
                .map(String::from)
                .to_vec(),
        );
        for a in &self.archs {
            for j in 0..a.q_mean.len() {
                t.push(vec![
                    a.name.clone(),
                    j.to_string(),
                    fmt_f64(a.q_mean[j]),
                    fmt_f64(a.q_std[j]),
                    fmt_f64(a.qdot_mean[j]),
                    fmt_f64(a.qdot_std[j]),
                ]);
            }
        }
        t
    }

    pub fn comparison_table(&self) -> Table {
        let mut t = Table::new(
            ["a", "b", "mean_a_mm", "mean_b_mm", "t", "p", "p_bonferroni", "cohens_d"]
                .map(String::from)
                .to_vec(),
        );
        for c in &self.comparisons {
            let mean = |n: &str| self.arch(n).map(|a| a.pos_mean).unwrap_or(f64::NAN);
            t.push(vec![
                c.a.clone(),
                c.b.clone(),
                fmt_f64(mean(&c.a)),
                fmt_f64(mean(&c.b)),
                fmt_f64(c.test.t),
                fmt_f64(c.test.p),
                fmt_f64(c.p_bonferroni),
                fmt_f64(c.test.cohens_d),
            ]);
        }
        t
    }
}
