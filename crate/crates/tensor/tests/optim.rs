use ptensor::nn::{Activation, Mlp};
use ptensor::optim::{AdamW, AdamWConfig, StepOutcome};
use ptensor::{ParamSet, Tape, Tensor};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn single(p: f64, g: f64) -> ParamSet<f64> {
    let mut set = ParamSet::new();
    let id = set.add("p", Tensor::scalar(p));
    set.grad_mut(id)[0] = g;
    set
}

#[test]
fn zero_grad_no_decay_leaves_params() {
    let mut set = single(1.25, 0.0);
    let mut opt = AdamW::new(AdamWConfig::default(), &set);
    assert_eq!(opt.step(&mut set), StepOutcome::Applied);
    assert_eq!(set.entries()[0].value.item(), 1.25);
}

#[test]
fn decoupled_decay_closed_form() {
    let mut set = single(1.0, 0.0);
    let cfg = AdamWConfig {
        lr: 1e-5,
        weight_decay: 0.01,
        ..Default::default()
    };
    let mut opt = AdamW::new(cfg, &set);
    opt.step(&mut set);
    assert!((set.entries()[0].value.item() - (1.0 - 1e-7)).abs() < 1e-15);
}

#[test]
fn first_step_moves_by_lr_times_sign() {
    let mut set = single(0.5, 1.0);
    let cfg = AdamWConfig {
        lr: 0.1,
        ..Default::default()
    };
    let mut opt = AdamW::new(cfg, &set);
    opt.step(&mut set);
    assert!((set.entries()[0].value.item() - 0.4).abs() < 1e-6);
}

#[test]
fn nan_gradient_skips_step() {
    let mut set = single(0.5, f64::NAN);
    let mut opt = AdamW::new(AdamWConfig::default(), &set);
    assert_eq!(opt.step(&mut set), StepOutcome::SkippedNonFinite);
    assert_eq!(opt.step_count(), 0);
    assert_eq!(set.entries()[0].value.item(), 0.5);
}

fn train(seed: u64, steps: usize) -> Vec<f32> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = ParamSet::<f32>::new();
    let mlp = Mlp::new(&mut params, &mut rng, "mlp", &[4, 16, 16, 2], Activation::Elu);
    let mut opt = AdamW::new(
        AdamWConfig {
            lr: 1e-2,
            weight_decay: 0.01,
            ..Default::default()
        },
        &params,
    );
    let x = Tensor::from_f64(&[8, 4], &(0..32).map(|k| (k as f64 * 0.37).sin()).collect::<Vec<_>>()).unwrap();
    let y = Tensor::from_f64(&[8, 2], &(0..16).map(|k| (k as f64 * 0.11).cos()).collect::<Vec<_>>()).unwrap();
    for _ in 0..steps {
        let mut tape = Tape::new();
        let xv = tape.constant(x.clone());
        let yv = tape.constant(y.clone());
        let out = mlp.forward(&mut tape, &params, xv).unwrap();
        let loss = tape.mse(out, yv).unwrap();
        tape.backward(loss).unwrap();
        params.zero_grad();
        tape.write_param_grads(&mut params);
        opt.step(&mut params);
    }
    params.entries().iter().flat_map(|e| e.value.data().to_vec()).collect()
}

#[test]
fn same_seed_gives_bit_identical_parameters() {
    let a = train(11, 25);
    let b = train(11, 25);
    assert_eq!(a.len(), b.len());
    assert!(a.iter().zip(&b).all(|(x, y)| x.to_bits() == y.to_bits()));
    let c = train(12, 25);
    assert_ne!(a, c);
}

#[test]
fn clip_grad_norm_bounds_norm() {
    let mut set = ParamSet::<f64>::new();
    let id = set.add("w", Tensor::zeros(&[3]));
    set.grad_mut(id).copy_from_slice(&[3.0, 4.0, 0.0]);
    let before = set.clip_grad_norm(1.0);
    assert_eq!(before, 5.0);
    assert!((set.grad_norm() - 1.0).abs() < 1e-12);
}

proptest! {
    #[test]
    fn softmax_rows_sum_to_one(rows in proptest::collection::vec(proptest::collection::vec(-1e4f32..1e4f32, 1..9), 1..6)) {
        let n = rows[0].len();
        let data: Vec<f64> = rows.iter().flat_map(|r| r.iter().cycle().take(n).map(|&v| v as f64)).collect();
        let mut tape = Tape::<f32>::new();
        let x = tape.constant(Tensor::from_f64(&[rows.len(), n], &data).unwrap());
        let y = tape.softmax(x).unwrap();
        for row in tape.value(y).data().chunks(n) {
            let s: f64 = row.iter().map(|&v| v as f64).sum();
            prop_assert!((s - 1.0).abs() <= 1e-6);
            prop_assert!(row.iter().all(|&v| v >= 0.0));
        }
    }
}
