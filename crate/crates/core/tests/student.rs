mod common;

use proprio::env::{EnvConfig, HandEnv};
use proprio::student::pt::PtEncoder;
use proprio::student::{EncoderVariant, LossWeights, Normalizer, Student, StudentBatch, StudentConfig, StudentPolicy};
use proprio::Error;
use ptensor::Tape;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn toy_cfg(variant: EncoderVariant, queries: usize) -> StudentConfig {
    StudentConfig {
        variant,
        d_model: 8,
        layers: 2,
        heads: 2,
        ff_dim: 16,
        queries,
        ..StudentConfig::default()
    }
}

fn random_batch(rng: &mut ChaCha8Rng, b: usize, t: usize, d: usize) -> StudentBatch {
    let mut v = |n: usize| -> Vec<f64> { (0..n).map(|_| rng.random_range(-1.0..1.0)).collect() };
    StudentBatch {
        b,
        history: v(b * t * 2 * d),
        action_ctx: v(b * 2 * d),
        command: v(b * 6),
        action: v(b * d),
        obj_pos: v(b * 3),
        q: v(b * d),
        qdot: v(b * d),
    }
}

fn check_loss_gradients(variant: EncoderVariant, queries: usize) {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let (t, d) = (3, 2);
    let mut net = Student::<f64>::new(&mut rng, t, d, &toy_cfg(variant, queries)).unwrap();
    let batch = random_batch(&mut rng, 4, t, d);
    let (err, at) = common::model_grad_error(
        &mut net,
        |n| &mut n.params,
        |n, tape| n.loss(tape, &batch, LossWeights::default()).unwrap().total,
        1e-6,
        12,
    );
    assert!(err < 1e-4, "{variant}: rel err {err} at {at}");
}

#[test]
fn pt_loss_gradients() {
    check_loss_gradients(EncoderVariant::Pt, 2);
}

#[test]
fn pt_four_query_loss_gradients() {
    check_loss_gradients(EncoderVariant::Pt, 4);
}

#[test]
fn mlp_loss_gradients() {
    check_loss_gradients(EncoderVariant::Mlp, 2);
}

#[test]
fn lstm_loss_gradients() {
    check_loss_gradients(EncoderVariant::Lstm, 2);
}

#[test]
fn content_tokens_are_history_plus_two() {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut params = ptensor::ParamSet::<f32>::new();
    let enc = PtEncoder::new(&mut params, &mut rng, 10, 17, 16, 1, 2, 32, 2).unwrap();
    assert_eq!(enc.n_content(), 12);
    assert_eq!(enc.seq_len(), 14);
}

#[test]
fn encoders_have_matching_parameter_counts() {
    for (t, cfg) in [
        (10, StudentConfig::default()),
        (
            10,
            StudentConfig {
                d_model: 64,
                layers: 2,
                ff_dim: 128,
                ..StudentConfig::default()
            },
        ),
        (1, toy_cfg(EncoderVariant::Pt, 2)),
    ] {
        let rng = ChaCha8Rng::seed_from_u64(1);
        let count = |v: EncoderVariant| {
            let c = StudentConfig { variant: v, ..cfg.clone() };
            Student::<f32>::new(&mut rng.clone(), t, 8, &c).unwrap().encoder_numel()
        };
        let pt = count(EncoderVariant::Pt) as f64;
        for v in [EncoderVariant::Mlp, EncoderVariant::Lstm] {
            let n = count(v) as f64;
            assert!((n - pt).abs() / pt <= 0.05, "{v} has {n} params vs PT {pt} (d_model {})", cfg.d_model);
        }
    }
}

#[test]
fn output_shapes_agree_across_encoders() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let (t, d, b) = (4, 3, 5);
    let batch = random_batch(&mut rng, b, t, d);
    for v in EncoderVariant::ALL {
        let net = Student::<f32>::new(&mut rng, t, d, &toy_cfg(v, 2)).unwrap();
        let mut tape = Tape::new();
        let out = net.forward(&mut tape, &batch).unwrap();
        assert_eq!(tape.shape(out.action), &[b, d], "{v}");
        assert_eq!(tape.shape(out.pos), &[b, 3], "{v}");
        assert_eq!(tape.shape(out.q), &[b, d], "{v}");
        assert_eq!(tape.shape(out.qdot), &[b, d], "{v}");
        let a = tape.value(out.action).to_f64_vec();
        assert!(a.iter().all(|x| x.abs() <= 1.0));
    }
}

#[test]
fn attention_rows_are_distributions() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (t, d) = (3, 2);
    let net = Student::<f64>::new(&mut rng, t, d, &toy_cfg(EncoderVariant::Pt, 2)).unwrap();
    let batch = random_batch(&mut rng, 2, t, d);
    let mut tape = Tape::new();
    let (h, c, m) = net.inputs(&mut tape, &batch).unwrap();
    let mut maps = Vec::new();
    net.forward_with(&mut tape, h, c, m, Some(&mut maps)).unwrap();
    assert_eq!(maps.len(), 2);
    let len = t + 2 + 2;
    for a in maps {
        assert_eq!(tape.shape(a), &[2 * 2, len, len]);
        for row in tape.value(a).data().chunks(len) {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }
}

#[test]
fn reversing_the_history_changes_actions() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let (t, d) = (3, 2);
    let batch = random_batch(&mut rng, 1, t, d);
    let mut reversed = batch.clone();
    let tok = 2 * d;
    reversed.history = batch.history.chunks(tok).rev().flatten().copied().collect();
    for v in EncoderVariant::ALL {
        let net = Student::<f64>::new(&mut rng, t, d, &toy_cfg(v, 2)).unwrap();
        assert_ne!(net.act(&batch).unwrap(), net.act(&reversed).unwrap(), "{v}");
    }
}

#[test]
fn loss_without_reconstruction_is_behaviour_cloning() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let net = Student::<f64>::new(&mut rng, 2, 2, &toy_cfg(EncoderVariant::Pt, 2)).unwrap();
    let batch = random_batch(&mut rng, 3, 2, 2);
    let mut tape = Tape::new();
    let l = net.loss(&mut tape, &batch, LossWeights::ZERO).unwrap();
    assert_eq!((l.pos, l.q, l.qdot), (0.0, 0.0, 0.0));
    assert_eq!(tape.value(l.total).item(), l.bc);
}

#[test]
fn invalid_student_configs_are_rejected() {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    for cfg in [
        StudentConfig {
            queries: 3,
            ..toy_cfg(EncoderVariant::Pt, 2)
        },
        StudentConfig {
            heads: 3,
            ..toy_cfg(EncoderVariant::Pt, 2)
        },
    ] {
        assert!(matches!(Student::<f32>::new(&mut rng, 3, 2, &cfg), Err(Error::Config(_))));
    }
    assert!(Student::<f32>::new(&mut rng, 0, 2, &toy_cfg(EncoderVariant::Mlp, 2)).is_err());
}

fn policy(variant: EncoderVariant) -> StudentPolicy {
    let env = EnvConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let cfg = StudentConfig {
        d_model: 16,
        layers: 1,
        heads: 2,
        ff_dim: 32,
        ..toy_cfg(variant, 2)
    };
    StudentPolicy {
        net: Student::new(&mut rng, env.sensor.history, env.dof(), &cfg).unwrap(),
        norm: Normalizer::new(&env),
    }
}

#[test]
fn policy_checkpoint_round_trip_is_exact() {
    let env = HandEnv::new(EnvConfig::default(), 1, 0).unwrap();
    let obs = [env.student_obs()];
    for v in EncoderVariant::ALL {
        let p = policy(v);
        let ck = p.to_checkpoint();
        let back = StudentPolicy::from_checkpoint(&ck, Some(v)).unwrap();
        assert_eq!(back.to_checkpoint().to_bytes(), ck.to_bytes());
        assert_eq!(back.act(&obs).unwrap(), p.act(&obs).unwrap());
    }
}

#[test]
fn cross_variant_load_names_both_variants() {
    let ck = policy(EncoderVariant::Mlp).to_checkpoint();
    let err = StudentPolicy::from_checkpoint(&ck, Some(EncoderVariant::Pt)).err().unwrap();
    assert!(matches!(err, Error::Incompatible { .. }));
    let msg = err.to_string();
    assert!(msg.contains("mlp") && msg.contains("pt"), "{msg}");
}

#[test]
fn predictions_decode_to_physical_units() {
    let p = policy(EncoderVariant::Pt);
    let env = HandEnv::new(EnvConfig::default(), 2, 0).unwrap();
    let pred = p.predict(&[env.student_obs(), env.student_obs()]).unwrap();
    assert_eq!(pred.obj_pos.len(), 6);
    assert_eq!(pred.q.len(), 2 * env.dof());
    let mut tape = Tape::new();
    let batch = p.batch(&[env.student_obs()]);
    let out = p.net.forward(&mut tape, &batch).unwrap();
    let raw = tape.value(out.pos).to_f64_vec();
    assert!((pred.obj_pos[0] - raw[0] / p.norm.pos_scale).abs() < 1e-12);
}
