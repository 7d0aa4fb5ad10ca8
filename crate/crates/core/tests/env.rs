use proprio::env::reward::{reward_terms, RewardInputs};
use proprio::env::transmission::{play, tendon_transmission};
use proprio::env::{teacher_obs_len, EnvConfig, HandConfig, HandEnv, RewardConfig, SensorMode, VecEnv, POLICY_DT};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn inputs<'a>(pos_err: [f64; 3], omega: [f64; 3], cmd: [f64; 3], zeros: &'a [f64]) -> RewardInputs<'a> {
    RewardInputs {
        pos_err,
        omega,
        omega_prev: omega,
        omega_cmd: cmd,
        qdot: zeros,
        action: zeros,
        prev_action: zeros,
        dt: POLICY_DT,
    }
}

#[test]
fn teacher_observation_length() {
    assert_eq!(teacher_obs_len(17), 81);
    let env = HandEnv::new(EnvConfig::default(), 0, 0).unwrap();
    assert_eq!(env.teacher_obs().len(), teacher_obs_len(env.dof()));
    let cfg = EnvConfig {
        hand: HandConfig::parity(),
        ..EnvConfig::default()
    };
    assert_eq!(cfg.dof(), 17);
    let env = HandEnv::new(cfg, 0, 0).unwrap();
    assert_eq!(env.teacher_obs().len(), 81);
}

#[test]
fn student_observation_layout() {
    let env = HandEnv::new(EnvConfig::default(), 3, 0).unwrap();
    let d = env.dof();
    let o = env.student_obs();
    assert_eq!(o.history.len(), 10 * 2 * d);
    assert_eq!(o.action_ctx.len(), 2 * d);
}

#[test]
fn reward_kernel_values() {
    let c = RewardConfig::default();
    let z = [0.0; 8];
    let cmd = [0.0, 0.0, 1.0];
    let r = reward_terms(&c, &inputs([0.0; 3], cmd, cmd, &z));
    assert!((r.r_pos - 10.0).abs() < 1e-9);
    assert!((r.r_mag - 30.0).abs() < 1e-9);
    assert!((r.r_dir - 60.0).abs() < 1e-9);
    assert_eq!(r.r_rate, 0.0);

    let r = reward_terms(&c, &inputs([c.sigma_pos, 0.0, 0.0], [0.0, 0.0, -1.0], cmd, &z));
    assert!((r.r_pos - 10.0 * (-1f64).exp()).abs() < 1e-9);
    assert!((r.r_dir + 60.0).abs() < 1e-9);
}

#[test]
fn reward_total_sums_terms() {
    let c = RewardConfig::default();
    let a = [0.3, -0.2, 0.1, 0.0];
    let p = [0.1, 0.1, 0.1, 0.1];
    let qd = [1.0, -2.0, 0.5, 0.0];
    let x = RewardInputs {
        pos_err: [0.01, -0.004, 0.0],
        omega: [0.0, 0.0, 0.7],
        omega_prev: [0.0, 0.0, 0.6],
        omega_cmd: [0.0, 0.0, 1.0],
        qdot: &qd,
        action: &a,
        prev_action: &p,
        dt: POLICY_DT,
    };
    let r = reward_terms(&c, &x);
    let s: f64 = r.as_array()[..7].iter().sum();
    assert!((r.total - s).abs() < 1e-12);
    assert!(r.r_rate < 0.0 && r.r_act < 0.0 && r.r_vel < 0.0);
}

#[test]
fn backlash_bound_over_random_actions() {
    let mut cfg = EnvConfig::default();
    cfg.hand.backlash_halfwidth = 0.03;
    cfg.task.terminate_on_drop = false;
    cfg.task.episode_seconds = 1e6;
    let mut env = HandEnv::new(cfg, 9, 0).unwrap();
    env.reset();
    let d = env.dof();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let beta = 0.03;
    let mut steps = 0;
    while steps < 100_000 {
        let a: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
        env.step(&a).unwrap();
        for (e, m) in env.theta_eff().iter().zip(env.motor()) {
            assert!((e - m).abs() <= beta + 1e-12, "|{e} - {m}| > {beta}");
        }
        steps += d;
    }
}

#[test]
fn sensing_modes_agree_without_backlash_in_free_space() {
    let mut base = EnvConfig::default().deterministic();
    base.object.present = false;
    base.hand.backlash_halfwidth = 0.0;
    base.hand.series_stiffness = 1e3;
    base.hand.series_damping = 2.0;
    let run = |mode: SensorMode| {
        let mut cfg = base.clone();
        cfg.sensor.mode = mode;
        let mut env = HandEnv::new(cfg, 1, 0).unwrap();
        env.reset();
        let d = env.dof();
        for k in 0..40 {
            let a: Vec<f64> = (0..d).map(|j| if k < 20 { 0.3 * (j as f64 - 3.5) / 3.5 } else { 0.0 }).collect();
            env.step(&a).unwrap();
        }
        // Hold until the elastic transient has died out.
        for _ in 0..60 {
            env.step(&vec![0.0; d]).unwrap();
        }
        env.latest_reading().pos.clone()
    };
    let joint = run(SensorMode::JointSensor);
    let motor = run(SensorMode::MotorEncoder);
    for (a, b) in joint.iter().zip(&motor) {
        assert!((a - b).abs() < 1e-6, "{a} vs {b}");
    }
}

#[test]
fn stepping_is_deterministic_per_seed() {
    let run = |seed| {
        let mut env = HandEnv::new(EnvConfig::default(), seed, 2).unwrap();
        env.reset();
        let d = env.dof();
        for k in 0..50 {
            let a: Vec<f64> = (0..d).map(|j| ((k + j) as f64 * 0.37).sin()).collect();
            env.step(&a).unwrap();
        }
        env.state_vector()
    };
    assert_eq!(run(5), run(5));
    assert_ne!(run(5), run(6));
}

#[test]
fn vec_env_matches_single_envs() {
    let cfg = EnvConfig::default();
    let mut v = VecEnv::new(&cfg, 3, 11).unwrap();
    let mut singles: Vec<HandEnv> = (0..3).map(|i| HandEnv::new(cfg.clone(), 11, i).unwrap()).collect();
    for e in &mut singles {
        e.reset();
    }
    let d = v.dof();
    let mut obs = Vec::new();
    for k in 0..20 {
        let a: Vec<f64> = (0..3 * d).map(|j| ((k * 3 + j) as f64 * 0.11).cos()).collect();
        v.step(&a).unwrap();
        for (i, e) in singles.iter_mut().enumerate() {
            if e.step(&a[i * d..(i + 1) * d]).unwrap().done() {
                e.reset();
            }
        }
    }
    v.teacher_obs(&mut obs);
    let expect: Vec<f64> = singles.iter().flat_map(HandEnv::teacher_obs).collect();
    assert_eq!(obs, expect);
}

#[test]
fn hold_still_keeps_the_object() {
    let mut cfg = EnvConfig::default().deterministic();
    cfg.task.terminate_on_drop = false;
    let mut env = HandEnv::new(cfg, 0, 0).unwrap();
    env.reset();
    let d = env.dof();
    let mut drops = 0;
    for _ in 0..100 {
        let out = env.step(&vec![0.0; d]).unwrap();
        drops += out.events.iter().filter(|e| matches!(e.kind, proprio::env::EventKind::Drop)).count();
    }
    assert_eq!(drops, 0);
    assert!(env.object().pos[0].hypot(env.object().pos[1]) < 0.03);
}

proptest! {
    #[test]
    fn play_output_stays_within_band(inputs in prop::collection::vec(-2.0f64..2.0, 1..200), beta in 0.0f64..0.2) {
        let mut eff = 0.0;
        for m in inputs {
            eff = play(m, eff, beta);
            prop_assert!((eff - m).abs() <= beta + 1e-12);
        }
    }

    #[test]
    fn play_is_idle_inside_the_band(prev in -1.0f64..1.0, beta in 0.01f64..0.2, frac in -1.0f64..1.0) {
        let m = prev + frac * beta;
        prop_assert_eq!(play(m, prev, beta), prev);
    }

    #[test]
    fn transmission_torque_is_zero_at_rest_on_target(q in -1.0f64..1.0, beta in 0.0f64..0.1) {
        let (eff, tau) = tendon_transmission(q, q, q, 0.0, beta, 4.0, 0.05);
        prop_assert_eq!(eff, q);
        prop_assert_eq!(tau, 0.0);
    }
}

#[test]
fn pose_noise_perturbs_only_the_privileged_pose() {
    let run = |noise: f64| {
        let mut cfg = EnvConfig::default();
        cfg.sensor.pose_noise = noise;
        cfg.sensor.yaw_noise = 10.0 * noise;
        let mut env = HandEnv::new(cfg, 4, 1).unwrap();
        env.reset();
        let d = env.dof();
        for k in 0..5 {
            env.step(&vec![(k as f64 * 0.3).sin(); d]).unwrap();
        }
        (env.teacher_obs(), env.student_obs(), env.state_vector())
    };
    let (clean, s0, x0) = run(0.0);
    let (noisy, s1, x1) = run(0.005);
    let d = 8;
    let pose = 2 * d..2 * d + 7;
    assert_eq!(s0, s1);
    assert_eq!(x0, x1);
    for k in 0..clean.len() {
        if pose.contains(&k) && k != 2 * d + 2 {
            continue;
        }
        assert_eq!(clean[k], noisy[k], "index {k}");
    }
    assert_ne!(clean[2 * d], noisy[2 * d]);
    assert_ne!(clean[2 * d + 3], noisy[2 * d + 3]);
}

#[test]
fn sensing_modes_diverge_by_the_play_width_under_load() {
    let beta = 0.05;
    let mut base = EnvConfig::default().deterministic();
    base.hand.backlash_halfwidth = beta;
    base.task.terminate_on_drop = false;
    let make = |mode: SensorMode| {
        let mut cfg = base.clone();
        cfg.sensor.mode = mode;
        let mut env = HandEnv::new(cfg, 2, 0).unwrap();
        env.reset();
        env
    };
    let mut joint = make(SensorMode::JointSensor);
    let mut motor = make(SensorMode::MotorEncoder);
    let d = joint.dof();
    let mut widest = 0.0f64;
    for k in 0..200 {
        let a: Vec<f64> = (0..d).map(|j| (0.4 * k as f64 + j as f64).sin()).collect();
        joint.step(&a).unwrap();
        motor.step(&a).unwrap();
        let (pj, pm) = (&joint.latest_reading().pos, &motor.latest_reading().pos);
        widest = pj.iter().zip(pm).map(|(a, b)| (a - b).abs()).fold(widest, f64::max);
    }
    assert!(widest >= beta, "largest reading gap {widest}");
}
