mod common;

use proprio::env::{teacher_obs_len, EnvConfig, HandEnv};
use proprio::io::checkpoint::Checkpoint;
use proprio::teacher::ppo::{gae, normalize, ppo_loss, PpoBatch};
use proprio::teacher::{init_teacher, train_teacher, TeacherConfig, TeacherNets};
use proprio::Error;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn gae_matches_truncated_sum_oracle() {
    // Oracle: sum_k (γλ)^k δ_{t+k}, stopping after a terminal step.
    let (adv, ret) = gae(&[1.0, 2.0, 3.0, 4.0], &[0.5, 1.0, 1.5, 2.0], &[false, true, false, false], 3.0, 0.9, 0.8);
    let expect_adv = [2.12, 1.0, 6.684, 4.7];
    let expect_ret = [2.62, 2.0, 8.184, 6.7];
    for k in 0..4 {
        assert!((adv[k] - expect_adv[k]).abs() < 1e-12, "{adv:?}");
        assert!((ret[k] - expect_ret[k]).abs() < 1e-12, "{ret:?}");
    }
}

#[test]
fn gae_with_unit_lambda_is_discounted_return() {
    let (_, ret) = gae(&[1.0, 1.0, 1.0], &[0.0; 3], &[false; 3], 0.0, 0.5, 1.0);
    assert!((ret[0] - 1.75).abs() < 1e-12);
    assert!((ret[2] - 1.0).abs() < 1e-12);
}

#[test]
fn normalize_gives_zero_mean_unit_std() {
    let mut x = vec![1.0, 4.0, -2.0, 7.0, 0.5];
    normalize(&mut x);
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    assert!(mean.abs() < 1e-12);
    assert!((var - 1.0).abs() < 1e-12);
}

#[test]
fn full_ppo_loss_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (od, d, b) = (9, 2, 6);
    let cfg = TeacherConfig {
        hidden: vec![8, 8],
        ..TeacherConfig::default()
    };
    let mut nets = TeacherNets::<f64>::new(&mut rng, od, d, &cfg.hidden, -0.5);
    let obs: Vec<f64> = (0..b * od).map(|_| rng.random_range(-1.0..1.0)).collect();
    let u: Vec<f64> = (0..b * d).map(|_| rng.random_range(-1.0..1.0)).collect();
    let adv: Vec<f64> = (0..b).map(|_| rng.random_range(-1.0..1.0)).collect();
    let ret: Vec<f64> = (0..b).map(|_| rng.random_range(-1.0..1.0)).collect();
    // Old log-probs near the current ones keep ratios inside the clip band
    // for some rows and outside it for others.
    let mut tape = ptensor::Tape::new();
    let o = tape.constant(ptensor::Tensor::from_f64(&[b, od], &obs).unwrap());
    let uu = tape.constant(ptensor::Tensor::from_f64(&[b, d], &u).unwrap());
    let lp = nets.gauss_log_prob(&mut tape, o, uu).unwrap();
    let old: Vec<f64> = tape
        .value(lp)
        .to_f64_vec()
        .iter()
        .enumerate()
        .map(|(k, v)| v + [0.05, -0.05, 0.4, -0.4, 0.1, -0.1][k])
        .collect();
    let (err, at) = common::model_grad_error(
        &mut nets,
        |n| &mut n.params,
        |n, tape| {
            let batch = PpoBatch {
                obs: &obs,
                pre_tanh: &u,
                old_log_prob: &old,
                advantages: &adv,
                returns: &ret,
            };
            ppo_loss(n, tape, &batch, &cfg).unwrap().0
        },
        1e-6,
        16,
    );
    assert!(err < 1e-4, "rel err {err} at {at}");
}

#[test]
fn deterministic_actions_are_bounded() {
    let env = HandEnv::new(EnvConfig::default(), 0, 0).unwrap();
    let nets = init_teacher(env.config(), &TeacherConfig::default(), 1);
    let mut obs = env.teacher_obs();
    obs.iter_mut().for_each(|v| *v *= 50.0);
    let a = nets.act_deterministic(&obs).unwrap();
    assert_eq!(a.len(), env.dof());
    assert!(a.iter().all(|v| v.abs() <= 1.0));
}

#[test]
fn teacher_checkpoint_round_trip() {
    let cfg = TeacherConfig {
        hidden: vec![16, 8],
        ..TeacherConfig::default()
    };
    let nets = init_teacher(&EnvConfig::default(), &cfg, 4);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("t.ptck");
    nets.to_checkpoint().save(&path).unwrap();
    let back = TeacherNets::from_checkpoint(&Checkpoint::load(&path).unwrap()).unwrap();
    assert_eq!(back.hidden, nets.hidden);
    assert_eq!(back.obs_dim, teacher_obs_len(8));
    for (a, b) in back.params.entries().iter().zip(nets.params.entries()) {
        assert_eq!(a.name, b.name);
        assert_eq!(a.value.data(), b.value.data());
    }
}

#[test]
fn zero_iterations_returns_initial_networks() {
    let env = EnvConfig::default();
    let cfg = TeacherConfig {
        hidden: vec![16],
        iterations: 0,
        n_envs: 2,
        horizon: 4,
        ..TeacherConfig::default()
    };
    let run = train_teacher(&env, &cfg, 5, |_, _| Ok(())).unwrap();
    let init = init_teacher(&env, &cfg, 5);
    assert!(run.curve.is_empty());
    for (a, b) in run.nets.params.entries().iter().zip(init.params.entries()) {
        assert_eq!(a.value.data(), b.value.data());
    }
}

#[test]
fn short_training_is_reproducible() {
    let env = EnvConfig::default();
    let cfg = TeacherConfig {
        hidden: vec![16],
        iterations: 2,
        n_envs: 2,
        horizon: 8,
        ..TeacherConfig::default()
    };
    let a = train_teacher(&env, &cfg, 6, |_, _| Ok(())).unwrap();
    let b = train_teacher(&env, &cfg, 6, |_, _| Ok(())).unwrap();
    assert_eq!(a.curve, b.curve);
    assert_eq!(a.nets.to_checkpoint().to_bytes(), b.nets.to_checkpoint().to_bytes());
}

#[test]
fn invalid_config_is_rejected() {
    let cfg = TeacherConfig {
        n_envs: 0,
        ..TeacherConfig::default()
    };
    let err = train_teacher(&EnvConfig::default(), &cfg, 0, |_, _| Ok(())).err().unwrap();
    assert!(matches!(err, Error::Config(_)));
}
