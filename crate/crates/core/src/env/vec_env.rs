use super::{EnvConfig, HandEnv, StepOutput};
use crate::error::Result;

/// A batch of independent environments with automatic reset.
#[derive(Clone, Debug)]
pub struct VecEnv {
    pub envs: Vec<HandEnv>,
}

impl VecEnv {
    pub fn new(cfg: &EnvConfig, n: usize, base_seed: u64) -> Result<Self> {
        let envs = (0..n)
            .map(|i| HandEnv::new(cfg.clone(), base_seed, i))
            .collect::<Result<Vec<_>>>()?;
        let mut v = Self { envs };
        for e in &mut v.envs {
            e.reset();
        }
        Ok(v)
    }

    pub fn len(&self) -> usize {
        self.envs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.envs.is_empty()
    }

    pub fn dof(&self) -> usize {
        self.envs[0].dof()
    }

    /// Teacher observations of every env, concatenated.
    pub fn teacher_obs(&self, out: &mut Vec<f64>) {
        out.clear();
        let mut buf = Vec::new();
        for e in &self.envs {
            e.teacher_obs_into(&mut buf);
            out.extend_from_slice(&buf);
        }
    }

    /// Steps every env with its slice of `actions`; finished envs are reset
    /// after their output is recorded.
    pub fn step(&mut self, actions: &[f64]) -> Result<Vec<StepOutput>> {
        let d = self.dof();
        let mut outs = Vec::with_capacity(self.envs.len());
        for (i, e) in self.envs.iter_mut().enumerate() {
            let mut o = e.step(&actions[i * d..(i + 1) * d])?;
            if o.done() {
                o.final_obs = Some(e.teacher_obs());
                e.reset();
            }
            outs.push(o);
        }
        Ok(outs)
    }
}
