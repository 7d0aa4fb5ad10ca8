//! Parameter initialisers.

use rand::Rng;

use crate::real::Real;
use crate::tensor::Tensor;

/// Glorot/Xavier uniform for a `[fan_in, fan_out]` weight.
pub fn xavier_uniform<R: Real>(rng: &mut impl Rng, fan_in: usize, fan_out: usize, gain: f64) -> Tensor<R> {
    let a = gain * (6.0 / (fan_in + fan_out) as f64).sqrt();
    uniform(rng, &[fan_in, fan_out], -a, a)
}

pub fn uniform<R: Real>(rng: &mut impl Rng, shape: &[usize], lo: f64, hi: f64) -> Tensor<R> {
    let n = shape.iter().product();
    let data = (0..n).map(|_| R::lit(rng.random_range(lo..hi))).collect();
    Tensor::new(shape.to_vec(), data).expect("shape")
}

/// Normal samples via Box-Muller, scaled by `std`.
pub fn normal<R: Real>(rng: &mut impl Rng, shape: &[usize], std: f64) -> Tensor<R> {
    let n: usize = shape.iter().product();
    let mut data = Vec::with_capacity(n);
    while data.len() < n {
        let u1: f64 = rng.random_range(f64::MIN_POSITIVE..1.0);
        let u2: f64 = rng.random();
        let r = (-2.0 * u1.ln()).sqrt();
        let t = std::f64::consts::TAU * u2;
        data.push(R::lit(std * r * t.cos()));
        if data.len() < n {
            data.push(R::lit(std * r * t.sin()));
        }
    }
    Tensor::new(shape.to_vec(), data).expect("shape")
}
