//! Student encoders (transformer, MLP, LSTM) with shared action and
//! reconstruction heads, and the distillation losses.

pub mod baselines;
pub mod pt;

use std::fmt;

use ptensor::nn::Linear;
use ptensor::{ParamSet, Real, Tape, Tensor, Var};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::env::{EnvConfig, StudentObs};
use crate::error::{Error, Result};
use crate::io::checkpoint::Checkpoint;
use crate::io::dataset::SampleView;
use baselines::{closest_size, lstm_param_count, mlp_param_count, LstmEncoder, MlpEncoder};
use pt::PtEncoder;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EncoderVariant {
    Pt,
    Mlp,
    Lstm,
}

impl EncoderVariant {
    pub const ALL: [EncoderVariant; 3] = [EncoderVariant::Pt, EncoderVariant::Mlp, EncoderVariant::Lstm];

    pub fn name(self) -> &'static str {
        match self {
            EncoderVariant::Pt => "pt",
            EncoderVariant::Mlp => "mlp",
            EncoderVariant::Lstm => "lstm",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "pt" => Ok(EncoderVariant::Pt),
            "mlp" => Ok(EncoderVariant::Mlp),
            "lstm" => Ok(EncoderVariant::Lstm),
            _ => Err(Error::Config(format!("unknown encoder variant `{s}`"))),
        }
    }
}

impl fmt::Display for EncoderVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossWeights {
    pub pos: f64,
    pub q: f64,
    pub qdot: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            pos: 0.5,
            q: 0.3,
            qdot: 0.2,
        }
    }
}

impl LossWeights {
    pub const ZERO: LossWeights = LossWeights {
        pos: 0.0,
        q: 0.0,
        qdot: 0.0,
    };
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StudentConfig {
    pub variant: EncoderVariant,
    pub d_model: usize,
    pub layers: usize,
    pub heads: usize,
    pub ff_dim: usize,
    /// Query tokens: 2 (action, reconstruction) or 4 (one per head).
    pub queries: usize,
    pub loss: LossWeights,
}

impl Default for StudentConfig {
    fn default() -> Self {
        Self {
            variant: EncoderVariant::Pt,
            d_model: 256,
            layers: 3,
            heads: 4,
            ff_dim: 1024,
            queries: 2,
            loss: LossWeights::default(),
        }
    }
}

impl StudentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.d_model == 0 || self.heads == 0 || !self.d_model.is_multiple_of(self.heads) {
            return Err(Error::Config("student.d_model must be a positive multiple of student.heads".into()));
        }
        if self.queries != 2 && self.queries != 4 {
            return Err(Error::Config("student.queries must be 2 or 4".into()));
        }
        let l = self.loss;
        if !(l.pos >= 0.0 && l.q >= 0.0 && l.qdot >= 0.0) {
            return Err(Error::Config("student.loss weights must be >= 0".into()));
        }
        Ok(())
    }
}

/// Maps raw readings and labels into network units and back.
#[derive(Clone, Debug, PartialEq)]
pub struct Normalizer {
    pub mid: Vec<f64>,
    pub half: Vec<f64>,
    pub vel_scale: f64,
    pub pos_scale: f64,
}

impl Normalizer {
    pub fn new(env: &EnvConfig) -> Self {
        let limits = env.hand.all_limits();
        // Rounded to f32 so a policy behaves the same before and after a checkpoint round trip.
        let r = |v: f64| v as f32 as f64;
        Self {
            mid: limits.iter().map(|l| r(0.5 * (l[0] + l[1]))).collect(),
            half: limits.iter().map(|l| r(0.5 * (l[1] - l[0]))).collect(),
            vel_scale: env.obs.velocity_scale,
            pos_scale: env.obs.position_scale,
        }
    }

    pub fn q(&self, j: usize, v: f64) -> f64 {
        (v - self.mid[j]) / self.half[j]
    }

    pub fn q_inv(&self, j: usize, v: f64) -> f64 {
        v * self.half[j] + self.mid[j]
    }
}

/// Network-ready batch, row-major.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct StudentBatch {
    pub b: usize,
    pub history: Vec<f64>,
    pub action_ctx: Vec<f64>,
    pub command: Vec<f64>,
    pub action: Vec<f64>,
    pub obj_pos: Vec<f64>,
    pub q: Vec<f64>,
    pub qdot: Vec<f64>,
}

impl StudentBatch {
    pub fn push_inputs(&mut self, norm: &Normalizer, history: &[f64], action_ctx: &[f64], command: &[f64]) {
        let d = norm.mid.len();
        for tok in history.chunks(2 * d) {
            for j in 0..d {
                self.history.push(norm.q(j, tok[j]));
            }
            for j in 0..d {
                self.history.push(tok[d + j] * norm.vel_scale);
            }
        }
        self.action_ctx.extend_from_slice(action_ctx);
        self.command.extend_from_slice(command);
        self.b += 1;
    }

    pub fn push_sample(&mut self, norm: &Normalizer, s: &SampleView<'_>) {
        let f = |x: &[f32]| x.iter().map(|&v| v as f64).collect::<Vec<_>>();
        self.push_inputs(norm, &f(s.history), &f(s.action_ctx), &f(s.command));
        self.action.extend(s.teacher_action.iter().map(|&v| v as f64));
        self.obj_pos.extend(s.obj_pos.iter().map(|&v| v as f64 * norm.pos_scale));
        self.q.extend(s.q.iter().enumerate().map(|(j, &v)| norm.q(j, v as f64)));
        self.qdot.extend(s.qdot.iter().map(|&v| v as f64 * norm.vel_scale));
    }
}

#[derive(Clone, Debug)]
pub enum Encoder {
    Pt(PtEncoder),
    Mlp(MlpEncoder),
    Lstm(LstmEncoder),
}

#[derive(Clone, Debug)]
pub struct Heads {
    pub action: Linear,
    pub pos: Linear,
    pub q: Linear,
    pub qdot: Linear,
}

#[derive(Clone, Debug)]
pub struct Student<R: Real> {
    pub params: ParamSet<R>,
    pub encoder: Encoder,
    pub heads: Heads,
    pub cfg: StudentConfig,
    pub t: usize,
    pub dof: usize,
}

/// Output tensors `[B, ·]` on the tape.
#[derive(Clone, Copy, Debug)]
pub struct StudentOut {
    pub action: Var,
    pub pos: Var,
    pub q: Var,
    pub qdot: Var,
}

/// Loss value handles and their scalar values.
#[derive(Clone, Copy, Debug)]
pub struct LossParts {
    pub total: Var,
    pub bc: f64,
    pub pos: f64,
    pub q: f64,
    pub qdot: f64,
}

fn pt_numel(t: usize, dof: usize, cfg: &StudentConfig) -> usize {
    let mut p = ParamSet::<f32>::new();
    let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(0);
    PtEncoder::new(&mut p, &mut rng, t, dof, cfg.d_model, cfg.layers, cfg.heads, cfg.ff_dim, cfg.queries)
        .map(|_| p.numel())
        .unwrap_or(0)
}

impl<R: Real> Student<R> {
    pub fn new(rng: &mut impl Rng, t: usize, dof: usize, cfg: &StudentConfig) -> Result<Self> {
        cfg.validate()?;
        if t == 0 {
            return Err(Error::Config("history length must be >= 1".into()));
        }
        let mut params = ParamSet::new();
        let dm = cfg.d_model;
        let encoder = match cfg.variant {
            EncoderVariant::Pt => Encoder::Pt(PtEncoder::new(
                &mut params,
                rng,
                t,
                dof,
                dm,
                cfg.layers,
                cfg.heads,
                cfg.ff_dim,
                cfg.queries,
            )?),
            EncoderVariant::Mlp => {
                let target = pt_numel(t, dof, cfg);
                let input = MlpEncoder::input_len(t, dof);
                let w = closest_size(target, 8 * dm + 64, |w| mlp_param_count(input, w, dm));
                Encoder::Mlp(MlpEncoder::new(&mut params, rng, t, dof, w, dm))
            }
            EncoderVariant::Lstm => {
                let target = pt_numel(t, dof, cfg);
                let h = closest_size(target, 8 * dm + 64, |h| lstm_param_count(dof, h, dm));
                Encoder::Lstm(LstmEncoder::new(&mut params, rng, t, dof, h, dm))
            }
        };
        let heads = Heads {
            action: Linear::new(&mut params, rng, "head.action", dm, dof, 1.0),
            pos: Linear::new(&mut params, rng, "head.pos", dm, 3, 1.0),
            q: Linear::new(&mut params, rng, "head.q", dm, dof, 1.0),
            qdot: Linear::new(&mut params, rng, "head.qdot", dm, dof, 1.0),
        };
        Ok(Self {
            params,
            encoder,
            heads,
            cfg: cfg.clone(),
            t,
            dof,
        })
    }

    pub fn variant(&self) -> EncoderVariant {
        self.cfg.variant
    }

    /// Encoder parameters, excluding the shared heads.
    pub fn encoder_numel(&self) -> usize {
        let h = &self.heads;
        self.params.numel() - h.action.numel() - h.pos.numel() - h.q.numel() - h.qdot.numel()
    }

    /// Forward pass. `attention` collects per-layer attention maps for the transformer.
    pub fn forward_with(
        &self,
        tape: &mut Tape<R>,
        hist: Var,
        ctx: Var,
        cmd: Var,
        attention: Option<&mut Vec<Var>>,
    ) -> Result<StudentOut> {
        let b = tape.shape(hist)[0];
        let dm = self.cfg.d_model;
        let p = &self.params;
        let feats: Vec<Var> = match &self.encoder {
            Encoder::Pt(enc) => {
                let e = enc.encode(tape, p, hist, ctx, cmd, attention.is_some())?;
                if let Some(a) = attention {
                    *a = e.attention;
                }
                (0..enc.n_queries)
                    .map(|k| {
                        let f = tape.slice(e.queries, 1, k, 1)?;
                        Ok(tape.reshape(f, &[b, dm])?)
                    })
                    .collect::<Result<_>>()?
            }
            Encoder::Mlp(enc) => vec![enc.encode(tape, p, hist, ctx, cmd)?],
            Encoder::Lstm(enc) => vec![enc.encode(tape, p, hist, ctx, cmd)?],
        };
        // Query k feeds head k; with fewer features the last one is reused.
        let feat = |k: usize| feats[k.min(feats.len() - 1)];
        let (fa, fp, fq, fv) = if feats.len() >= 4 {
            (feat(0), feat(1), feat(2), feat(3))
        } else {
            (feat(0), feat(1), feat(1), feat(1))
        };
        let a = self.heads.action.forward(tape, p, fa)?;
        Ok(StudentOut {
            action: tape.tanh(a)?,
            pos: self.heads.pos.forward(tape, p, fp)?,
            q: self.heads.q.forward(tape, p, fq)?,
            qdot: self.heads.qdot.forward(tape, p, fv)?,
        })
    }

    pub fn inputs(&self, tape: &mut Tape<R>, batch: &StudentBatch) -> Result<(Var, Var, Var)> {
        let (b, t, d) = (batch.b, self.t, self.dof);
        if batch.history.len() != b * t * 2 * d {
            return Err(Error::Contract(format!(
                "history holds {} values, expected {} for T={t}, D={d}",
                batch.history.len(),
                b * t * 2 * d
            )));
        }
        let h = tape.constant(Tensor::from_f64(&[b, t, 2 * d], &batch.history)?);
        let c = tape.constant(Tensor::from_f64(&[b, 2 * d], &batch.action_ctx)?);
        let m = tape.constant(Tensor::from_f64(&[b, 6], &batch.command)?);
        Ok((h, c, m))
    }

    pub fn forward(&self, tape: &mut Tape<R>, batch: &StudentBatch) -> Result<StudentOut> {
        let (h, c, m) = self.inputs(tape, batch)?;
        self.forward_with(tape, h, c, m, None)
    }

    /// Actions `[B·D]` for network-ready inputs.
    pub fn act(&self, batch: &StudentBatch) -> Result<Vec<f64>> {
        let mut tape = Tape::new();
        let out = self.forward(&mut tape, batch)?;
        Ok(tape.value(out.action).to_f64_vec())
    }

    /// `L_BC + L_recon` on a labelled batch.
    pub fn loss(&self, tape: &mut Tape<R>, batch: &StudentBatch, w: LossWeights) -> Result<LossParts> {
        let out = self.forward(tape, batch)?;
        let (b, d) = (batch.b, self.dof);
        let a = tape.constant(Tensor::from_f64(&[b, d], &batch.action)?);
        let p = tape.constant(Tensor::from_f64(&[b, 3], &batch.obj_pos)?);
        let q = tape.constant(Tensor::from_f64(&[b, d], &batch.q)?);
        let v = tape.constant(Tensor::from_f64(&[b, d], &batch.qdot)?);
        let bc = bc_loss(tape, out.action, a)?;
        let (recon, parts) = recon_loss(tape, &out, p, q, v, w)?;
        let total = tape.add(bc, recon)?;
        Ok(LossParts {
            total,
            bc: tape.value(bc).item().f64(),
            pos: parts[0],
            q: parts[1],
            qdot: parts[2],
        })
    }
}

/// Mean squared action error.
pub fn bc_loss<R: Real>(tape: &mut Tape<R>, pred: Var, target: Var) -> Result<Var> {
    Ok(tape.mse(pred, target)?)
}

/// Weighted reconstruction loss; also returns the weighted term values.
pub fn recon_loss<R: Real>(
    tape: &mut Tape<R>,
    out: &StudentOut,
    pos: Var,
    q: Var,
    qdot: Var,
    w: LossWeights,
) -> Result<(Var, [f64; 3])> {
    let lp = tape.mse(out.pos, pos)?;
    let lq = tape.mse(out.q, q)?;
    let lv = tape.mse(out.qdot, qdot)?;
    let lp = tape.scale(lp, w.pos)?;
    let lq = tape.scale(lq, w.q)?;
    let lv = tape.scale(lv, w.qdot)?;
    let parts = [
        tape.value(lp).item().f64(),
        tape.value(lq).item().f64(),
        tape.value(lv).item().f64(),
    ];
    let s = tape.add(lp, lq)?;
    Ok((tape.add(s, lv)?, parts))
}

/// Decoded predictions in physical units, row-major.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Prediction {
    pub action: Vec<f64>,
    /// Object position, m.
    pub obj_pos: Vec<f64>,
    pub q: Vec<f64>,
    pub qdot: Vec<f64>,
}

/// A student network bundled with its input normalization.
#[derive(Clone, Debug)]
pub struct StudentPolicy {
    pub net: Student<f32>,
    pub norm: Normalizer,
}

impl StudentPolicy {
    pub fn batch(&self, obs: &[StudentObs]) -> StudentBatch {
        let mut b = StudentBatch::default();
        for o in obs {
            b.push_inputs(&self.norm, &o.history, &o.action_ctx, &o.command);
        }
        b
    }

    pub fn act(&self, obs: &[StudentObs]) -> Result<Vec<f64>> {
        self.net.act(&self.batch(obs))
    }

    pub fn predict(&self, obs: &[StudentObs]) -> Result<Prediction> {
        let batch = self.batch(obs);
        let mut tape = Tape::new();
        let out = self.net.forward(&mut tape, &batch)?;
        let n = &self.norm;
        let d = self.net.dof;
        let q = tape.value(out.q).to_f64_vec();
        Ok(Prediction {
            action: tape.value(out.action).to_f64_vec(),
            obj_pos: tape.value(out.pos).to_f64_vec().iter().map(|v| v / n.pos_scale).collect(),
            q: q.iter().enumerate().map(|(i, &v)| n.q_inv(i % d, v)).collect(),
            qdot: tape.value(out.qdot).to_f64_vec().iter().map(|v| v / n.vel_scale).collect(),
        })
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let net = &self.net;
        let c = &net.cfg;
        let mut ck = Checkpoint::new(c.variant.name(), net.t, net.dof);
        for (k, v) in [
            ("d_model", c.d_model),
            ("layers", c.layers),
            ("heads", c.heads),
            ("ff_dim", c.ff_dim),
            ("queries", c.queries),
        ] {
            ck.meta.insert(k.into(), v.to_string());
        }
        ck.meta.insert("vel_scale".into(), self.norm.vel_scale.to_string());
        ck.meta.insert("pos_scale".into(), self.norm.pos_scale.to_string());
        let f = |v: &[f64]| v.iter().map(|&x| x as f32).collect::<Vec<_>>();
        ck.push("norm.mid", &[net.dof], f(&self.norm.mid));
        ck.push("norm.half", &[net.dof], f(&self.norm.half));
        ck.push_params("net.", &net.params);
        ck
    }

    /// Rebuilds a student; `expected` rejects checkpoints of another variant.
    pub fn from_checkpoint(ck: &Checkpoint, expected: Option<EncoderVariant>) -> Result<Self> {
        if let Some(v) = expected {
            ck.expect_variant(v.name())?;
        }
        let variant = EncoderVariant::parse(&ck.variant).map_err(|_| Error::Incompatible {
            expected: "a student encoder (pt, mlp or lstm)".into(),
            found: ck.variant.clone(),
        })?;
        let cfg = StudentConfig {
            variant,
            d_model: ck.meta_parse("d_model")?,
            layers: ck.meta_parse("layers")?,
            heads: ck.meta_parse("heads")?,
            ff_dim: ck.meta_parse("ff_dim")?,
            queries: ck.meta_parse("queries")?,
            loss: LossWeights::default(),
        };
        let (t, dof) = (ck.t as usize, ck.d as usize);
        let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(0);
        let mut net = Student::new(&mut rng, t, dof, &cfg)?;
        ck.load_params("net.", &mut net.params)?;
        let vec = |name: &str| -> Result<Vec<f64>> {
            ck.tensor(name)
                .filter(|t| t.data.len() == dof)
                .map(|t| t.data.iter().map(|&v| v as f64).collect())
                .ok_or_else(|| Error::Contract(format!("checkpoint lacks `{name}`")))
        };
        let norm = Normalizer {
            mid: vec("norm.mid")?,
            half: vec("norm.half")?,
            vel_scale: ck.meta_parse("vel_scale")?,
            pos_scale: ck.meta_parse("pos_scale")?,
        };
        Ok(Self { net, norm })
    }
}
