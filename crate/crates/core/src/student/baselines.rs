//! MLP and LSTM encoders sized to match a transformer's parameter count.

use ptensor::nn::{Activation, Linear, Mlp};
use ptensor::{ParamSet, Real, Tape, Tensor, Var};
use rand::Rng;

use crate::error::Result;

/// Hidden layers in the MLP encoder.
pub const MLP_HIDDEN_LAYERS: usize = 3;

#[derive(Clone, Debug)]
pub struct MlpEncoder {
    pub t: usize,
    pub mlp: Mlp,
}

pub fn mlp_param_count(input: usize, width: usize, d_model: usize) -> usize {
    let mut n = input * width + width;
    n += (MLP_HIDDEN_LAYERS - 1) * (width * width + width);
    n + width * d_model + d_model
}

impl MlpEncoder {
    pub fn new<R: Real>(
        params: &mut ParamSet<R>,
        rng: &mut impl Rng,
        t: usize,
        dof: usize,
        width: usize,
        d_model: usize,
    ) -> Self {
        let mut widths = vec![2 * t * dof + 2 * dof + 6];
        widths.extend(std::iter::repeat_n(width, MLP_HIDDEN_LAYERS));
        widths.push(d_model);
        Self {
            t,
            mlp: Mlp::new(params, rng, "mlp", &widths, Activation::Gelu),
        }
    }

    pub fn input_len(t: usize, dof: usize) -> usize {
        2 * t * dof + 2 * dof + 6
    }

    /// Features `[B, d_model]`.
    pub fn encode<R: Real>(&self, tape: &mut Tape<R>, params: &ParamSet<R>, hist: Var, ctx: Var, cmd: Var) -> Result<Var> {
        let b = tape.shape(hist)[0];
        let flat = tape.reshape(hist, &[b, tape.value(hist).len() / b])?;
        let x = tape.concat(&[flat, ctx, cmd], 1)?;
        let y = self.mlp.forward(tape, params, x)?;
        Ok(tape.gelu(y)?)
    }
}

#[derive(Clone, Debug)]
pub struct LstmEncoder {
    pub t: usize,
    pub hidden: usize,
    pub input: Linear,
    pub recurrent: Linear,
    pub out: Linear,
}

pub fn lstm_param_count(dof: usize, hidden: usize, d_model: usize) -> usize {
    let gates = 4 * hidden;
    (2 * dof * gates + gates) + (hidden * gates + gates) + (hidden + 2 * dof + 6) * d_model + d_model
}

impl LstmEncoder {
    pub fn new<R: Real>(
        params: &mut ParamSet<R>,
        rng: &mut impl Rng,
        t: usize,
        dof: usize,
        hidden: usize,
        d_model: usize,
    ) -> Self {
        let input = Linear::new(params, rng, "lstm.input", 2 * dof, 4 * hidden, 1.0);
        let recurrent = Linear::new(params, rng, "lstm.recurrent", hidden, 4 * hidden, 1.0);
        // Forget-gate bias of one keeps early gradients flowing through the cell.
        let fb = params.value_mut(input.bias).data_mut();
        for v in &mut fb[hidden..2 * hidden] {
            *v = R::one();
        }
        let out = Linear::new(params, rng, "lstm.out", hidden + 2 * dof + 6, d_model, 1.0);
        Self {
            t,
            hidden,
            input,
            recurrent,
            out,
        }
    }

    pub fn encode<R: Real>(&self, tape: &mut Tape<R>, params: &ParamSet<R>, hist: Var, ctx: Var, cmd: Var) -> Result<Var> {
        let b = tape.shape(hist)[0];
        let hd = self.hidden;
        // All input projections at once: [B, T, 4H].
        let xs = self.input.forward(tape, params, hist)?;
        let mut h = tape.constant(Tensor::zeros(&[b, hd]));
        let mut c = tape.constant(Tensor::zeros(&[b, hd]));
        for step in 0..self.t {
            let x = tape.slice(xs, 1, step, 1)?;
            let x = tape.reshape(x, &[b, 4 * hd])?;
            let r = self.recurrent.forward(tape, params, h)?;
            let g = tape.add(x, r)?;
            let gi = tape.slice(g, 1, 0, hd)?;
            let gf = tape.slice(g, 1, hd, hd)?;
            let gg = tape.slice(g, 1, 2 * hd, hd)?;
            let go = tape.slice(g, 1, 3 * hd, hd)?;
            let i = tape.sigmoid(gi)?;
            let f = tape.sigmoid(gf)?;
            let gg = tape.tanh(gg)?;
            let o = tape.sigmoid(go)?;
            let fc = tape.mul(f, c)?;
            let ig = tape.mul(i, gg)?;
            c = tape.add(fc, ig)?;
            let tc = tape.tanh(c)?;
            h = tape.mul(o, tc)?;
        }
        let z = tape.concat(&[h, ctx, cmd], 1)?;
        let y = self.out.forward(tape, params, z)?;
        Ok(tape.gelu(y)?)
    }
}

/// Integer size in `1..=limit` whose parameter count is closest to `target`.
pub fn closest_size(target: usize, limit: usize, count: impl Fn(usize) -> usize) -> usize {
    (1..=limit)
        .min_by_key(|&w| count(w).abs_diff(target))
        .unwrap_or(1)
}
