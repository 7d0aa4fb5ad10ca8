//! Central finite-difference gradient checks (64-bit).

use crate::error::Result;
use crate::param::ParamSet;
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

/// Denominator floor for relative error, so gradients that are numerically
/// zero compare on absolute error.
pub const REL_FLOOR: f64 = 1e-3;

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheck {
    pub max_rel_err: f64,
    /// (input or parameter index, element index) of the worst element.
    pub worst: (usize, usize),
    pub checked: usize,
}

fn rel_err(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(REL_FLOOR)
}

fn update(report: &mut GradCheck, a: f64, n: f64, at: (usize, usize)) {
    let e = rel_err(a, n);
    report.checked += 1;
    if e > report.max_rel_err || e.is_nan() {
        report.max_rel_err = if e.is_nan() { f64::INFINITY } else { e };
        report.worst = at;
    }
}

fn eval_scalar<F>(f: &F, inputs: &[Tensor<f64>]) -> Result<f64>
where
    F: Fn(&mut Tape<f64>, &[Var]) -> Result<Var>,
{
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.leaf(t.clone())).collect();
    let out = f(&mut tape, &vars)?;
    Ok(tape.value(out).item())
}

/// Compare tape gradients of `f(inputs)` with central differences.
pub fn check_inputs<F>(inputs: &[Tensor<f64>], f: F, eps: f64) -> Result<GradCheck>
where
    F: Fn(&mut Tape<f64>, &[Var]) -> Result<Var>,
{
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.leaf(t.clone())).collect();
    let out = f(&mut tape, &vars)?;
    tape.backward(out)?;
    let mut report = GradCheck {
        max_rel_err: 0.0,
        worst: (0, 0),
        checked: 0,
    };
    for (i, v) in vars.iter().enumerate() {
        let analytic = tape.grad(*v).map(|g| g.into_data()).unwrap_or_else(|| vec![0.0; inputs[i].len()]);
        for k in 0..inputs[i].len() {
            let mut plus = inputs.to_vec();
            plus[i].data_mut()[k] += eps;
            let mut minus = inputs.to_vec();
            minus[i].data_mut()[k] -= eps;
            let num = (eval_scalar(&f, &plus)? - eval_scalar(&f, &minus)?) / (2.0 * eps);
            update(&mut report, analytic[k], num, (i, k));
        }
    }
    Ok(report)
}

/// Compare parameter gradients of a scalar loss with central differences.
/// At most `max_per_tensor` evenly spaced elements of each tensor are probed.
pub fn check_params<F>(params: &mut ParamSet<f64>, f: F, eps: f64, max_per_tensor: usize) -> Result<GradCheck>
where
    F: Fn(&mut Tape<f64>, &ParamSet<f64>) -> Result<Var>,
{
    params.zero_grad();
    let mut tape = Tape::new();
    let out = f(&mut tape, params)?;
    tape.backward(out)?;
    tape.write_param_grads(params);
    let mut report = GradCheck {
        max_rel_err: 0.0,
        worst: (0, 0),
        checked: 0,
    };
    for i in 0..params.len() {
        let n = params.entries()[i].value.len();
        let stride = (n / max_per_tensor.max(1)).max(1);
        for k in (0..n).step_by(stride) {
            let analytic = params.entries()[i].grad[k];
            let orig = params.entries()[i].value.data()[k];
            params.entries_mut()[i].value.data_mut()[k] = orig + eps;
            let lp = {
                let mut t = Tape::new();
                let o = f(&mut t, params)?;
                t.value(o).item()
            };
            params.entries_mut()[i].value.data_mut()[k] = orig - eps;
            let lm = {
                let mut t = Tape::new();
                let o = f(&mut t, params)?;
                t.value(o).item()
            };
            params.entries_mut()[i].value.data_mut()[k] = orig;
            update(&mut report, analytic, (lp - lm) / (2.0 * eps), (i, k));
        }
    }
    Ok(report)
}

fn rand_t<G: rand::Rng>(rng: &mut G, shape: &[usize], lo: f64, hi: f64) -> Result<Tensor<f64>> {
    let n = crate::numel(shape);
    Tensor::from_f64(shape, &(0..n).map(|_| rng.random_range(lo..hi)).collect::<Vec<_>>())
}

/// Reduce with a fixed uneven weighting so every output element matters.
fn weighted_sum(tape: &mut Tape<f64>, y: Var) -> Result<Var> {
    let n = tape.value(y).len();
    let w: Vec<f64> = (0..n).map(|k| ((k * 7919) % 13) as f64 / 13.0 - 0.4).collect();
    let wv = tape.constant(Tensor::from_f64(tape.shape(y), &w)?);
    let p = tape.mul(y, wv)?;
    tape.sum(p)
}

type Unary = fn(&mut Tape<f64>, Var) -> Result<Var>;
type Binary = fn(&mut Tape<f64>, Var, Var) -> Result<Var>;

/// Check every differentiable op on small random inputs.
type OpFn<'a> = dyn Fn(&mut Tape<f64>, &[Var]) -> Result<Var> + 'a;

/// Returns one named report per op and operand configuration.
pub fn op_suite(seed: u64, eps: f64) -> Result<Vec<(String, GradCheck)>> {
    use rand::SeedableRng;
    let mut rng = rand::rngs::StdRng::seed_from_u64(seed);
    let mut out = Vec::new();
    let mut run = |name: &str, inputs: &[Tensor<f64>], f: &OpFn<'_>| -> Result<()> {
        out.push((name.to_string(), check_inputs(inputs, f, eps)?));
        Ok(())
    };

    let a = rand_t(&mut rng, &[3, 4], -1.0, 1.0)?;
    let b = rand_t(&mut rng, &[3, 4], -1.0, 1.0)?;
    let s = rand_t(&mut rng, &[1], -1.0, 1.0)?;
    let binary: [(&str, Binary, bool); 6] = [
        ("add", |t, x, y| t.add(x, y), false),
        ("sub", |t, x, y| t.sub(x, y), false),
        ("mul", |t, x, y| t.mul(x, y), false),
        ("minimum", |t, x, y| t.minimum(x, y), false),
        ("mul scalar", |t, x, y| t.mul(y, x), true),
        ("sub scalar", |t, x, y| t.sub(x, y), true),
    ];
    for (name, op, scalar) in binary {
        let rhs = if scalar { s.clone() } else { b.clone() };
        run(name, &[a.clone(), rhs], &|t, v| {
            let y = op(t, v[0], v[1])?;
            weighted_sum(t, y)
        })?;
    }

    let x = rand_t(&mut rng, &[2, 5], -2.0, 2.0)?;
    let pos = rand_t(&mut rng, &[2, 5], 0.2, 3.0)?;
    let unary: [(&str, Unary); 11] = [
        ("exp", |t, v| t.exp(v)),
        ("tanh", |t, v| t.tanh(v)),
        ("sigmoid", |t, v| t.sigmoid(v)),
        ("elu", |t, v| t.elu(v)),
        ("gelu", |t, v| t.gelu(v)),
        ("square", |t, v| t.square(v)),
        ("scale", |t, v| t.scale(v, -1.7)),
        ("shift", |t, v| t.shift(v, 0.3)),
        ("neg", |t, v| t.neg(v)),
        ("clamp", |t, v| t.clamp(v, -0.9, 1.1)),
        ("log", |t, v| t.log(v)),
    ];
    for (name, op) in unary {
        let input = if name == "log" { pos.clone() } else { x.clone() };
        run(name, &[input], &|t, v| {
            let y = op(t, v[0])?;
            weighted_sum(t, y)
        })?;
    }

    for (ta, tb) in [(false, false), (true, false), (false, true), (true, true)] {
        let a = rand_t(&mut rng, if ta { &[4, 3] } else { &[3, 4] }, -1.0, 1.0)?;
        let b = rand_t(&mut rng, if tb { &[2, 4] } else { &[4, 2] }, -1.0, 1.0)?;
        let f = |t: &mut Tape<f64>, v: &[Var]| {
            let y = t.matmul_t(v[0], v[1], ta, tb)?;
            weighted_sum(t, y)
        };
        run(&format!("matmul2d ta={ta} tb={tb}"), &[a, b], &f)?;
        let a = rand_t(&mut rng, if ta { &[2, 4, 3] } else { &[2, 3, 4] }, -1.0, 1.0)?;
        let b = rand_t(&mut rng, if tb { &[2, 5, 4] } else { &[2, 4, 5] }, -1.0, 1.0)?;
        run(&format!("matmul3d ta={ta} tb={tb}"), &[a, b], &f)?;
    }

    let x = rand_t(&mut rng, &[2, 3, 4], -1.0, 1.0)?;
    let bias = rand_t(&mut rng, &[4], -1.0, 1.0)?;
    let y = rand_t(&mut rng, &[2, 3, 4], -1.0, 1.0)?;
    run("sum", std::slice::from_ref(&x), &|t, v| {
        let s = t.square(v[0])?;
        t.sum(s)
    })?;
    run("mean", std::slice::from_ref(&x), &|t, v| {
        let s = t.square(v[0])?;
        t.mean(s)
    })?;
    run("sum_last", std::slice::from_ref(&x), &|t, v| {
        let s = t.sum_last(v[0])?;
        weighted_sum(t, s)
    })?;
    run("add_bias", &[x.clone(), bias], &|t, v| {
        let s = t.add_bias(v[0], v[1])?;
        let s = t.square(s)?;
        t.sum(s)
    })?;
    run("mse", &[x.clone(), y], &|t, v| t.mse(v[0], v[1]))?;

    let m = rand_t(&mut rng, &[3, 5], -2.0, 2.0)?;
    let g = rand_t(&mut rng, &[5], 0.5, 1.5)?;
    let beta = rand_t(&mut rng, &[5], -0.5, 0.5)?;
    run("softmax", std::slice::from_ref(&m), &|t, v| {
        let y = t.softmax(v[0])?;
        weighted_sum(t, y)
    })?;
    run("layer_norm", &[m, g, beta], &|t, v| {
        let y = t.layer_norm(v[0], v[1], v[2], 1e-5)?;
        weighted_sum(t, y)
    })?;

    let z = rand_t(&mut rng, &[2, 2, 4], -1.0, 1.0)?;
    let q = rand_t(&mut rng, &[1, 3, 4], -1.0, 1.0)?;
    run("reshape", std::slice::from_ref(&x), &|t, v| {
        let y = t.reshape(v[0], &[6, 4])?;
        weighted_sum(t, y)
    })?;
    run("permute", std::slice::from_ref(&x), &|t, v| {
        let y = t.permute(v[0], &[2, 0, 1])?;
        weighted_sum(t, y)
    })?;
    run("slice", std::slice::from_ref(&x), &|t, v| {
        let y = t.slice(v[0], 1, 1, 2)?;
        weighted_sum(t, y)
    })?;
    run("concat", &[x, z], &|t, v| {
        let y = t.concat(&[v[0], v[1]], 1)?;
        weighted_sum(t, y)
    })?;
    run("tile", &[q], &|t, v| {
        let y = t.tile(v[0], 3)?;
        weighted_sum(t, y)
    })?;
    Ok(out)
}
