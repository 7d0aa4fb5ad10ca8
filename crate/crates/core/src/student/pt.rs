//! Proprioceptive transformer encoder.

use ptensor::nn::{Activation, LayerNorm, Linear, Mlp};
use ptensor::{init, ParamId, ParamSet, Real, Tape, Tensor, Var};
use rand::Rng;

use crate::error::{Error, Result};

/// Sinusoidal table `[len, dim]`: even columns `sin`, odd columns `cos`.
pub fn positional_table(len: usize, dim: usize) -> Vec<f64> {
    let mut out = vec![0.0; len * dim];
    for pos in 0..len {
        for i in (0..dim).step_by(2) {
            let freq = 1.0 / 10000f64.powf(i as f64 / dim as f64);
            let a = pos as f64 * freq;
            out[pos * dim + i] = a.sin();
            if i + 1 < dim {
                out[pos * dim + i + 1] = a.cos();
            }
        }
    }
    out
}

#[derive(Clone, Debug)]
pub struct Block {
    pub ln1: LayerNorm,
    pub qkv: Linear,
    pub proj: Linear,
    pub ln2: LayerNorm,
    pub ff: Mlp,
}

#[derive(Clone, Debug)]
pub struct PtEncoder {
    pub t: usize,
    pub d_model: usize,
    pub heads: usize,
    pub n_queries: usize,
    pub hist_proj: Linear,
    pub ctx_proj: Linear,
    pub cmd_proj: Linear,
    pub queries: ParamId,
    pub blocks: Vec<Block>,
    pub ln_out: LayerNorm,
}

/// Encoder output: one feature row per query token plus optional attention maps.
pub struct Encoded {
    /// `[B, n_queries, d_model]`.
    pub queries: Var,
    /// Per layer `[B·heads, L, L]`, filled when requested.
    pub attention: Vec<Var>,
}

impl PtEncoder {
    #[allow(clippy::too_many_arguments)]
    pub fn new<R: Real>(
        params: &mut ParamSet<R>,
        rng: &mut impl Rng,
        t: usize,
        dof: usize,
        d_model: usize,
        layers: usize,
        heads: usize,
        ff_dim: usize,
        n_queries: usize,
    ) -> Result<Self> {
        if heads == 0 || !d_model.is_multiple_of(heads) {
            return Err(Error::Config(format!("d_model {d_model} must be divisible by heads {heads}")));
        }
        let hist_proj = Linear::new(params, rng, "pt.hist", 2 * dof, d_model, 1.0);
        let ctx_proj = Linear::new(params, rng, "pt.ctx", 2 * dof, d_model, 1.0);
        let cmd_proj = Linear::new(params, rng, "pt.cmd", 6, d_model, 1.0);
        let queries = params.add("pt.queries", init::normal(rng, &[1, n_queries, d_model], 0.02));
        let blocks = (0..layers)
            .map(|l| Block {
                ln1: LayerNorm::new(params, &format!("pt.{l}.ln1"), d_model),
                qkv: Linear::new(params, rng, &format!("pt.{l}.qkv"), d_model, 3 * d_model, 1.0),
                proj: Linear::new(params, rng, &format!("pt.{l}.proj"), d_model, d_model, 1.0),
                ln2: LayerNorm::new(params, &format!("pt.{l}.ln2"), d_model),
                ff: Mlp::new(params, rng, &format!("pt.{l}.ff"), &[d_model, ff_dim, d_model], Activation::Gelu),
            })
            .collect();
        let ln_out = LayerNorm::new(params, "pt.ln_out", d_model);
        Ok(Self {
            t,
            d_model,
            heads,
            n_queries,
            hist_proj,
            ctx_proj,
            cmd_proj,
            queries,
            blocks,
            ln_out,
        })
    }

    /// Content tokens (history, action context, command).
    pub fn n_content(&self) -> usize {
        self.t + 2
    }

    pub fn seq_len(&self) -> usize {
        self.n_content() + self.n_queries
    }

    /// Projects the three input groups, appends the query tokens and adds
    /// positional encodings: `[B, T + 2 + n_queries, d_model]`.
    pub fn tokenize<R: Real>(
        &self,
        tape: &mut Tape<R>,
        params: &ParamSet<R>,
        hist: Var,
        ctx: Var,
        cmd: Var,
    ) -> Result<Var> {
        let hs = tape.shape(hist).to_vec();
        if hs.len() != 3 || hs[1] != self.t {
            return Err(Error::Contract(format!("history shape {hs:?} does not hold {} steps", self.t)));
        }
        let b = hs[0];
        let dm = self.d_model;
        let h = self.hist_proj.forward(tape, params, hist)?;
        let c = self.ctx_proj.forward(tape, params, ctx)?;
        let c = tape.reshape(c, &[b, 1, dm])?;
        let m = self.cmd_proj.forward(tape, params, cmd)?;
        let m = tape.reshape(m, &[b, 1, dm])?;
        let q = tape.param(params, self.queries);
        let q = tape.tile(q, b)?;
        let x = tape.concat(&[h, c, m, q], 1)?;
        let len = self.seq_len();
        let pe = Tensor::from_f64(&[1, len, dm], &positional_table(len, dm))?;
        let pe = tape.constant(pe);
        let pe = tape.tile(pe, b)?;
        Ok(tape.add(x, pe)?)
    }

    fn attention<R: Real>(
        &self,
        tape: &mut Tape<R>,
        params: &ParamSet<R>,
        blk: &Block,
        x: Var,
    ) -> Result<(Var, Var)> {
        let s = tape.shape(x).to_vec();
        let (b, l, dm) = (s[0], s[1], s[2]);
        let (h, dh) = (self.heads, dm / self.heads);
        let qkv = blk.qkv.forward(tape, params, x)?;
        let split = |tape: &mut Tape<R>, k: usize| -> Result<Var> {
            let part = tape.slice(qkv, 2, k * dm, dm)?;
            let part = tape.reshape(part, &[b, l, h, dh])?;
            let part = tape.permute(part, &[0, 2, 1, 3])?;
            Ok(tape.reshape(part, &[b * h, l, dh])?)
        };
        let q = split(tape, 0)?;
        let k = split(tape, 1)?;
        let v = split(tape, 2)?;
        let scores = tape.matmul_t(q, k, false, true)?;
        let scores = tape.scale(scores, 1.0 / (dh as f64).sqrt())?;
        let att = tape.softmax(scores)?;
        let o = tape.matmul(att, v)?;
        let o = tape.reshape(o, &[b, h, l, dh])?;
        let o = tape.permute(o, &[0, 2, 1, 3])?;
        let o = tape.reshape(o, &[b, l, dm])?;
        Ok((blk.proj.forward(tape, params, o)?, att))
    }

    pub fn encode<R: Real>(
        &self,
        tape: &mut Tape<R>,
        params: &ParamSet<R>,
        hist: Var,
        ctx: Var,
        cmd: Var,
        keep_attention: bool,
    ) -> Result<Encoded> {
        let mut x = self.tokenize(tape, params, hist, ctx, cmd)?;
        let mut attention = Vec::new();
        for blk in &self.blocks {
            let n = blk.ln1.forward(tape, params, x)?;
            let (a, att) = self.attention(tape, params, blk, n)?;
            if keep_attention {
                attention.push(att);
            }
            x = tape.add(x, a)?;
            let n = blk.ln2.forward(tape, params, x)?;
            let f = blk.ff.forward(tape, params, n)?;
            x = tape.add(x, f)?;
        }
        let x = self.ln_out.forward(tape, params, x)?;
        let queries = tape.slice(x, 1, self.n_content(), self.n_queries)?;
        Ok(Encoded { queries, attention })
    }
}
