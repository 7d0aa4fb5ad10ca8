//! Teacher-to-student data collection and supervised distillation.

use ptensor::optim::{AdamW, AdamWConfig, StepOutcome};
use ptensor::Tape;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::env::{EnvConfig, HandEnv, StudentObs};
use crate::error::{Error, Result};
use crate::io::checkpoint::Checkpoint;
use crate::io::dataset::Dataset;
use crate::student::{EncoderVariant, LossWeights, Normalizer, Student, StudentBatch, StudentConfig, StudentPolicy};
use crate::teacher::TeacherNets;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Driver {
    Teacher,
    /// Per-step mixing: the teacher acts with probability β, β falling linearly from 1 to 0.
    Dagger,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DistillConfig {
    pub samples: usize,
    pub batch: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub epochs: usize,
    /// Gradient-step budget; takes precedence over `epochs` when nonzero.
    pub steps: usize,
    pub driver: Driver,
    /// Environments stepped side by side during collection.
    pub collect_envs: usize,
    pub no_recon: bool,
}

impl Default for DistillConfig {
    fn default() -> Self {
        Self {
            samples: 50_000,
            batch: 256,
            lr: 1e-5,
            weight_decay: 0.01,
            epochs: 1200,
            steps: 6000,
            driver: Driver::Teacher,
            collect_envs: 16,
            no_recon: false,
        }
    }
}

impl DistillConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch == 0 || self.collect_envs == 0 {
            return Err(Error::Config("distill.batch and distill.collect_envs must be >= 1".into()));
        }
        if !(self.lr > 0.0 && self.weight_decay >= 0.0) {
            return Err(Error::Config("distill.lr must be > 0 and distill.weight_decay >= 0".into()));
        }
        Ok(())
    }

    pub fn steps_per_epoch(&self, n: usize) -> usize {
        n.div_ceil(self.batch).max(1)
    }

    pub fn total_steps(&self, n: usize) -> usize {
        if self.steps > 0 {
            self.steps
        } else {
            self.epochs * self.steps_per_epoch(n)
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct CollectStats {
    pub episodes: usize,
    /// Episodes abandoned after the simulator diverged.
    pub diverged: usize,
    pub teacher_steps: usize,
    pub student_steps: usize,
}

/// Rolls out `cfg.collect_envs` environments and records `cfg.samples`
/// student-view samples labelled with deterministic teacher actions.
/// `student` is required for [`Driver::Dagger`]. The result is not shuffled.
pub fn collect(
    teacher: &TeacherNets<f32>,
    student: Option<&StudentPolicy>,
    env_cfg: &EnvConfig,
    cfg: &DistillConfig,
    seed: u64,
) -> Result<(Dataset, CollectStats)> {
    cfg.validate()?;
    env_cfg.validate()?;
    if cfg.driver == Driver::Dagger && student.is_none() {
        return Err(Error::Config("dagger collection needs a student policy".into()));
    }
    let dof = env_cfg.dof();
    if teacher.dof != dof {
        return Err(Error::Contract(format!("teacher drives {} joints, env has {dof}", teacher.dof)));
    }
    let t = env_cfg.sensor.history;
    let n = cfg.collect_envs;
    let mut envs = (0..n)
        .map(|i| HandEnv::new(env_cfg.clone(), seed, i))
        .collect::<Result<Vec<_>>>()?;
    for e in &mut envs {
        e.reset();
    }
    let mut mix_rng = ChaCha8Rng::seed_from_u64(seed);
    mix_rng.set_stream(3);
    let mut stats = CollectStats::default();
    let mut data = Dataset::new(t, dof);
    let mut pending: Vec<Dataset> = (0..n).map(|_| Dataset::new(t, dof)).collect();
    let stored = |data: &Dataset, pending: &[Dataset]| data.len() + pending.iter().map(Dataset::len).sum::<usize>();
    let mut tobs = Vec::new();
    let mut buf = Vec::new();
    while stored(&data, &pending) < cfg.samples {
        tobs.clear();
        for e in &envs {
            e.teacher_obs_into(&mut buf);
            tobs.extend_from_slice(&buf);
        }
        let labels = teacher.act_deterministic(&tobs)?;
        let sobs: Vec<StudentObs> = envs.iter().map(HandEnv::student_obs).collect();
        let beta = 1.0 - stored(&data, &pending) as f64 / cfg.samples as f64;
        let student_actions = match (cfg.driver, student) {
            (Driver::Dagger, Some(s)) => Some(s.act(&sobs)?),
            _ => None,
        };
        for (i, e) in envs.iter_mut().enumerate() {
            let label = &labels[i * dof..(i + 1) * dof];
            let o = &sobs[i];
            let pos = e.object_pos3();
            pending[i].push(&o.history, &o.action_ctx, &o.command, label, &pos, e.q(), e.qdot())?;
            let action = match &student_actions {
                Some(sa) if mix_rng.random::<f64>() >= beta => {
                    stats.student_steps += 1;
                    &sa[i * dof..(i + 1) * dof]
                }
                _ => {
                    stats.teacher_steps += 1;
                    label
                }
            };
            match e.step(action) {
                Ok(out) if out.done() => {
                    data.data.append(&mut pending[i].data);
                    stats.episodes += 1;
                    e.reset();
                }
                Ok(_) => {}
                Err(Error::Diverged { .. }) => {
                    pending[i].data.clear();
                    stats.diverged += 1;
                    e.reset();
                }
                Err(other) => return Err(other),
            }
        }
    }
    for p in &mut pending {
        data.data.append(&mut p.data);
    }
    Ok((data.truncated(cfg.samples), stats))
}

/// Per-epoch mean losses.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    /// Gradient steps completed at the end of the epoch.
    pub steps: usize,
    pub l_bc: f64,
    pub l_pos: f64,
    pub l_q: f64,
    pub l_qdot: f64,
    pub l_total: f64,
}

/// Scalar losses of one gradient step.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct StepLoss {
    pub bc: f64,
    pub pos: f64,
    pub q: f64,
    pub qdot: f64,
}

impl StepLoss {
    pub fn total(&self) -> f64 {
        self.bc + self.pos + self.q + self.qdot
    }
}

/// Resumable distillation state.
pub struct Trainer {
    pub policy: StudentPolicy,
    pub opt: AdamW<f32>,
    pub cfg: DistillConfig,
    pub weights: LossWeights,
    pub seed: u64,
    pub step: usize,
    order: Vec<usize>,
    order_epoch: Option<usize>,
}

impl Trainer {
    pub fn new(env_cfg: &EnvConfig, student_cfg: &StudentConfig, cfg: &DistillConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let net = Student::new(&mut rng, env_cfg.sensor.history, env_cfg.dof(), student_cfg)?;
        let policy = StudentPolicy {
            net,
            norm: Normalizer::new(env_cfg),
        };
        Ok(Self::from_policy(policy, cfg, seed))
    }

    fn from_policy(policy: StudentPolicy, cfg: &DistillConfig, seed: u64) -> Self {
        let opt = AdamW::new(
            AdamWConfig {
                lr: cfg.lr,
                weight_decay: cfg.weight_decay,
                ..AdamWConfig::default()
            },
            &policy.net.params,
        );
        let weights = if cfg.no_recon {
            LossWeights::ZERO
        } else {
            policy.net.cfg.loss
        };
        Self {
            policy,
            opt,
            cfg: cfg.clone(),
            weights,
            seed,
            step: 0,
            order: Vec::new(),
            order_epoch: None,
        }
    }

    pub fn variant(&self) -> EncoderVariant {
        self.policy.net.variant()
    }

    /// Sample indices of the minibatch used at `self.step`.
    fn batch_indices(&mut self, n: usize) -> Vec<usize> {
        let spe = self.cfg.steps_per_epoch(n);
        let epoch = self.step / spe;
        if self.order_epoch != Some(epoch) || self.order.len() != n {
            self.order = (0..n).collect();
            let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
            rng.set_stream(4 + epoch as u64);
            self.order.shuffle(&mut rng);
            self.order_epoch = Some(epoch);
        }
        let k = self.step % spe;
        let lo = k * self.cfg.batch;
        self.order[lo..(lo + self.cfg.batch).min(n)].to_vec()
    }

    pub fn make_batch(&self, data: &Dataset, idx: &[usize]) -> StudentBatch {
        let mut b = StudentBatch::default();
        for &i in idx {
            b.push_sample(&self.policy.norm, &data.sample(i));
        }
        b
    }

    /// Loss of the minibatch the next step would use, without updating.
    pub fn peek_loss(&mut self, data: &Dataset) -> Result<StepLoss> {
        let idx = self.batch_indices(data.len());
        let batch = self.make_batch(data, &idx);
        let mut tape = Tape::new();
        let l = self.policy.net.loss(&mut tape, &batch, self.weights)?;
        Ok(StepLoss {
            bc: l.bc,
            pos: l.pos,
            q: l.q,
            qdot: l.qdot,
        })
    }

    /// One AdamW step. A non-finite loss or gradient leaves the parameters untouched.
    pub fn train_step(&mut self, data: &Dataset) -> Result<StepLoss> {
        self.check_dataset(data)?;
        let idx = self.batch_indices(data.len());
        let batch = self.make_batch(data, &idx);
        let net = &mut self.policy.net;
        let mut tape = Tape::new();
        let l = net.loss(&mut tape, &batch, self.weights)?;
        let loss = StepLoss {
            bc: l.bc,
            pos: l.pos,
            q: l.q,
            qdot: l.qdot,
        };
        if !loss.total().is_finite() {
            return Err(Error::NonFinite(format!("distillation loss at step {}", self.step)));
        }
        tape.backward(l.total)?;
        net.params.zero_grad();
        tape.write_param_grads(&mut net.params);
        if self.opt.step(&mut net.params) == StepOutcome::SkippedNonFinite {
            return Err(Error::NonFinite(format!("distillation gradient at step {}", self.step)));
        }
        self.step += 1;
        Ok(loss)
    }

    fn check_dataset(&self, data: &Dataset) -> Result<()> {
        let net = &self.policy.net;
        if data.is_empty() {
            return Err(Error::Contract("distillation dataset is empty".into()));
        }
        if data.t != net.t || data.d != net.dof {
            return Err(Error::Contract(format!(
                "dataset has T={}, D={} but the student expects T={}, D={}",
                data.t, data.d, net.t, net.dof
            )));
        }
        Ok(())
    }

    /// Runs until the configured budget is spent, calling `on_epoch` after
    /// every (possibly partial) epoch. On a non-finite loss the parameters
    /// are those of the last good step and the error is returned.
    pub fn run(&mut self, data: &Dataset, mut on_epoch: impl FnMut(&EpochLog, &Trainer) -> Result<()>) -> Result<Vec<EpochLog>> {
        self.check_dataset(data)?;
        let n = data.len();
        let spe = self.cfg.steps_per_epoch(n);
        let total = self.cfg.total_steps(n);
        let mut logs = Vec::new();
        let mut acc = StepLoss::default();
        let mut count = 0usize;
        while self.step < total {
            let l = self.train_step(data)?;
            acc.bc += l.bc;
            acc.pos += l.pos;
            acc.q += l.q;
            acc.qdot += l.qdot;
            count += 1;
            if self.step.is_multiple_of(spe) || self.step == total {
                let c = count as f64;
                let row = EpochLog {
                    epoch: (self.step - 1) / spe,
                    steps: self.step,
                    l_bc: acc.bc / c,
                    l_pos: acc.pos / c,
                    l_q: acc.q / c,
                    l_qdot: acc.qdot / c,
                    l_total: acc.total() / c,
                };
                on_epoch(&row, self)?;
                logs.push(row);
                acc = StepLoss::default();
                count = 0;
            }
        }
        Ok(logs)
    }

    /// Student weights plus optimizer state and step counter.
    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut ck = self.policy.to_checkpoint();
        ck.push_moments("opt.", &self.policy.net.params, &self.opt);
        ck.meta.insert("train_step".into(), self.step.to_string());
        ck.meta.insert("train_seed".into(), self.seed.to_string());
        ck.meta.insert("no_recon".into(), self.cfg.no_recon.to_string());
        ck
    }

    /// Resumes from a checkpoint written by [`Trainer::to_checkpoint`].
    pub fn from_checkpoint(ck: &Checkpoint, cfg: &DistillConfig, loss: LossWeights) -> Result<Self> {
        cfg.validate()?;
        let mut policy = StudentPolicy::from_checkpoint(ck, None)?;
        policy.net.cfg.loss = loss;
        let seed = ck.meta_parse("train_seed")?;
        let mut tr = Self::from_policy(policy, cfg, seed);
        ck.load_moments("opt.", &tr.policy.net.params, &mut tr.opt)?;
        tr.step = ck.meta_parse("train_step")?;
        Ok(tr)
    }
}

/// Collect-free convenience: fresh trainer over `data` for the configured budget.
pub fn train_student(
    data: &Dataset,
    env_cfg: &EnvConfig,
    student_cfg: &StudentConfig,
    cfg: &DistillConfig,
    seed: u64,
    on_epoch: impl FnMut(&EpochLog, &Trainer) -> Result<()>,
) -> Result<(StudentPolicy, Vec<EpochLog>)> {
    let mut tr = Trainer::new(env_cfg, student_cfg, cfg, seed)?;
    let logs = tr.run(data, on_epoch)?;
    Ok((tr.policy, logs))
}
