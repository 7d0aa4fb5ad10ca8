//! Layer building blocks over a [`ParamSet`].

use rand::Rng;

use crate::error::Result;
use crate::init;
use crate::param::{ParamId, ParamSet};
use crate::real::Real;
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Elu,
    Gelu,
    Tanh,
}

impl Activation {
    pub fn apply<R: Real>(self, tape: &mut Tape<R>, x: Var) -> Result<Var> {
        match self {
            Activation::Elu => tape.elu(x),
            Activation::Gelu => tape.gelu(x),
            Activation::Tanh => tape.tanh(x),
        }
    }
}

/// Affine map `x·W + b` with `W: [in, out]`.
#[derive(Clone, Debug)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: ParamId,
    pub fan_in: usize,
    pub fan_out: usize,
}

impl Linear {
    pub fn new<R: Real>(
        params: &mut ParamSet<R>,
        rng: &mut impl Rng,
        name: &str,
        fan_in: usize,
        fan_out: usize,
        gain: f64,
    ) -> Self {
        let weight = params.add(format!("{name}.weight"), init::xavier_uniform(rng, fan_in, fan_out, gain));
        let bias = params.add(format!("{name}.bias"), Tensor::zeros(&[fan_out]));
        Self {
            weight,
            bias,
            fan_in,
            fan_out,
        }
    }

    pub fn numel(&self) -> usize {
        self.fan_in * self.fan_out + self.fan_out
    }

    /// Applies to the last axis of `x`; leading axes are preserved.
    pub fn forward<R: Real>(&self, tape: &mut Tape<R>, params: &ParamSet<R>, x: Var) -> Result<Var> {
        let shape = tape.shape(x).to_vec();
        let rows = shape[..shape.len() - 1].iter().product::<usize>().max(1);
        let flat = if shape.len() == 2 {
            x
        } else {
            tape.reshape(x, &[rows, *shape.last().unwrap_or(&0)])?
        };
        let w = tape.param(params, self.weight);
        let b = tape.param(params, self.bias);
        let y = tape.matmul(flat, w)?;
        let y = tape.add_bias(y, b)?;
        if shape.len() == 2 {
            Ok(y)
        } else {
            let mut out = shape;
            *out.last_mut().unwrap() = self.fan_out;
            tape.reshape(y, &out)
        }
    }
}

/// Fully connected stack with an activation between layers (none after the last).
#[derive(Clone, Debug)]
pub struct Mlp {
    pub layers: Vec<Linear>,
    pub activation: Activation,
}

impl Mlp {
    /// `widths` lists every layer width including input and output.
    pub fn new<R: Real>(
        params: &mut ParamSet<R>,
        rng: &mut impl Rng,
        name: &str,
        widths: &[usize],
        activation: Activation,
    ) -> Self {
        let layers = widths
            .windows(2)
            .enumerate()
            .map(|(i, w)| Linear::new(params, rng, &format!("{name}.{i}"), w[0], w[1], 1.0))
            .collect();
        Self { layers, activation }
    }

    pub fn forward<R: Real>(&self, tape: &mut Tape<R>, params: &ParamSet<R>, mut x: Var) -> Result<Var> {
        let n = self.layers.len();
        for (i, layer) in self.layers.iter().enumerate() {
            x = layer.forward(tape, params, x)?;
            if i + 1 < n {
                x = self.activation.apply(tape, x)?;
            }
        }
        Ok(x)
    }

    pub fn numel(&self) -> usize {
        self.layers.iter().map(Linear::numel).sum()
    }
}

#[derive(Clone, Debug)]
pub struct LayerNorm {
    pub gain: ParamId,
    pub bias: ParamId,
    pub eps: f64,
}

impl LayerNorm {
    pub fn new<R: Real>(params: &mut ParamSet<R>, name: &str, dim: usize) -> Self {
        let gain = params.add(format!("{name}.gain"), Tensor::full(&[dim], R::one()));
        let bias = params.add(format!("{name}.bias"), Tensor::zeros(&[dim]));
        Self { gain, bias, eps: 1e-5 }
    }

    pub fn forward<R: Real>(&self, tape: &mut Tape<R>, params: &ParamSet<R>, x: Var) -> Result<Var> {
        let g = tape.param(params, self.gain);
        let b = tape.param(params, self.bias);
        tape.layer_norm(x, g, b, self.eps)
    }
}
