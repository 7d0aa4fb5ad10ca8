#![allow(dead_code)]

use ptensor::gradcheck::REL_FLOOR;
use ptensor::{ParamSet, Tape, Var};

/// Worst relative error between tape gradients and central differences over
/// up to `per_tensor` evenly spaced elements of every parameter tensor.
pub fn model_grad_error<M>(
    model: &mut M,
    params: impl Fn(&mut M) -> &mut ParamSet<f64>,
    loss: impl Fn(&M, &mut Tape<f64>) -> Var,
    eps: f64,
    per_tensor: usize,
) -> (f64, String) {
    let eval = |m: &M| {
        let mut t = Tape::new();
        let l = loss(m, &mut t);
        t.value(l).item()
    };
    let mut tape = Tape::new();
    let l = loss(model, &mut tape);
    tape.backward(l).unwrap();
    params(model).zero_grad();
    tape.write_param_grads(params(model));
    let mut worst = (0.0, String::new());
    for i in 0..params(model).len() {
        let n = params(model).entries()[i].value.len();
        let stride = (n / per_tensor).max(1);
        for k in (0..n).step_by(stride) {
            let analytic = params(model).entries()[i].grad[k];
            let orig = params(model).entries()[i].value.data()[k];
            params(model).entries_mut()[i].value.data_mut()[k] = orig + eps;
            let lp = eval(model);
            params(model).entries_mut()[i].value.data_mut()[k] = orig - eps;
            let lm = eval(model);
            params(model).entries_mut()[i].value.data_mut()[k] = orig;
            let num = (lp - lm) / (2.0 * eps);
            let e = (analytic - num).abs() / analytic.abs().max(num.abs()).max(REL_FLOOR);
            if e > worst.0 || e.is_nan() {
                let name = params(model).entries()[i].name.clone();
                worst = (if e.is_nan() { f64::INFINITY } else { e }, format!("{name}[{k}]: {analytic} vs {num}"));
            }
        }
    }
    worst
}
