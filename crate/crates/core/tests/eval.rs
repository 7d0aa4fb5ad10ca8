use proprio::env::EnvConfig;
use proprio::eval::ablation::{cells, summarize, AblationRow, Axis};
use proprio::eval::metrics::{mean_std, metrics_from_log};
use proprio::eval::signature::{
    object_classifier, presence_labels, signature_features, standard_conditions, FeatureSet, LogisticClassifier,
};
use proprio::eval::{
    aggregate, bonferroni, recon_eval, run_trial, run_trial_logged, signature_collect, trajectory_header, trial_metrics,
    ttest_paired, HoldStill, Script, ScriptedGait, TrialEvent, TrialEventKind,
};
use proprio::io::Table;
use proprio::student::{EncoderVariant, Normalizer, Student, StudentConfig, StudentPolicy};
use proprio::teacher::{init_teacher, TeacherConfig};
use proprio::{Config, Error};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn ev(time: f64, kind: TrialEventKind) -> TrialEvent {
    TrialEvent { trial: 0, time, kind }
}

#[test]
fn paired_t_matches_scipy() {
    // scipy.stats.ttest_rel; d = mean(x - y) / std(x - y, ddof=1).
    let x = [13.2, 14.1, 12.8, 15.0, 13.9];
    let y = [17.5, 16.9, 18.2, 17.0, 18.8];
    let r = ttest_paired(&x, &y).unwrap();
    assert!((r.t - -6.049222821390312).abs() < 1e-9);
    assert!((r.p - 0.0037679189201182553).abs() < 1e-9);
    assert!((r.cohens_d - -2.705294687934361).abs() < 1e-9);

    let r = ttest_paired(&[1.0, 2.0, 3.0, 4.0, 5.0], &[1.5, 1.9, 3.8, 4.1, 5.9]).unwrap();
    assert!((r.t - -2.269126741769344).abs() < 1e-9);
    assert!((r.p - 0.08581037844004442).abs() < 1e-9);
    assert!((r.cohens_d - -1.014784328831773).abs() < 1e-9);
    assert!((bonferroni(r.p, 3) - 3.0 * 0.08581037844004442).abs() < 1e-12);
}

#[test]
fn metric_examples() {
    // 10 correct in 60 s.
    let events: Vec<_> = (0..10).map(|k| ev(k as f64 * 5.0 + 1.0, TrialEventKind::Correct)).collect();
    let m = trial_metrics(&events, 60.0);
    assert_eq!(m.rpm, 10.0);
    assert_eq!(m.ra, Some(100.0));
    assert_eq!(m.dfsr, Some(100.0));
    assert_eq!(m.dc, 0);

    // 3 correct, 1 wrong, one drop before the last rotation.
    let events = [
        ev(5.0, TrialEventKind::Correct),
        ev(10.0, TrialEventKind::Wrong),
        ev(20.0, TrialEventKind::Correct),
        ev(25.0, TrialEventKind::Drop),
        ev(40.0, TrialEventKind::Correct),
    ];
    let m = trial_metrics(&events, 30.0);
    assert_eq!(m.rpm, 6.0);
    assert_eq!(m.ra, Some(75.0));
    assert_eq!(m.dfsr, Some(75.0));
    assert_eq!(m.dc, 1);

    let m = trial_metrics(&[ev(3.0, TrialEventKind::Drop)], 60.0);
    assert_eq!((m.rpm, m.ra, m.dfsr, m.dc), (0.0, None, None, 1));
}

#[test]
fn aggregate_skips_undefined_ratios() {
    let a = trial_metrics(&[ev(1.0, TrialEventKind::Correct)], 60.0);
    let b = trial_metrics(&[], 60.0);
    let agg = aggregate(&[a, b]);
    assert_eq!(agg.rpm_mean, 0.5);
    assert_eq!(agg.ra_mean, Some(100.0));
    assert_eq!(mean_std([Some(1.0), None, Some(3.0)]), Some((2.0, 2f64.sqrt())));
}

#[test]
fn idle_hand_scores_zero_rpm() {
    let r = run_trial(&mut HoldStill, &EnvConfig::default(), 10.0, 2, 0).unwrap();
    assert_eq!(r.trials.len(), 2);
    assert_eq!(r.aggregate.rpm_mean, 0.0);
}

#[test]
fn untrained_teacher_scores_near_zero() {
    let env = EnvConfig::default();
    let mut t = init_teacher(&env, &TeacherConfig::default(), 0);
    let r = run_trial(&mut t, &env, 20.0, 2, 1).unwrap();
    assert!(r.aggregate.rpm_mean <= 3.0, "{:?}", r.aggregate);
}

#[test]
fn trajectory_log_has_one_row_per_step() {
    let env = EnvConfig::default();
    let d = env.dof();
    let mut log = Table::new(trajectory_header(d));
    let r = run_trial_logged(&mut ScriptedGait::default(), &env, 2.0, 2, 3, Some(&mut log)).unwrap();
    assert_eq!(log.rows.len(), 2 * 40);
    assert_eq!(log.header.len(), 2 + 3 * d + 4 + d + 1 + 7 + 1);
    assert_eq!(log.header[0], "time_s");
    assert_eq!(log.header.last().unwrap(), "event");
    assert!(log.rows.iter().all(|row| row.len() == log.header.len()));
    let again = run_trial(&mut ScriptedGait::default(), &env, 2.0, 2, 3).unwrap();
    assert_eq!(r, again);
}

#[test]
fn metrics_recomputed_from_event_log() {
    let env = EnvConfig::default();
    let r = run_trial(&mut ScriptedGait::default(), &env, 30.0, 2, 4).unwrap();
    let again = metrics_from_log(&r.events, r.trials.len(), r.duration);
    assert_eq!(again, r.trials);
}

fn sig_env() -> EnvConfig {
    EnvConfig::default().deterministic()
}

#[test]
fn signatures_grow_with_size_and_mass() {
    let mut conds = standard_conditions();
    conds.push(conds[2].heavier(2.0));
    let data = signature_collect(&sig_env(), &Script::default(), &conds, 0).unwrap();
    let joints = data.contacting_joints();
    assert!(!joints.is_empty());
    let rms = |label: &str| data.run(label).unwrap().rms.clone();
    let order = ["none", "45mm", "55mm", "65mm"];
    for &j in &joints {
        for w in order.windows(2) {
            assert!(rms(w[1])[j] >= rms(w[0])[j], "joint {j}: {} < {}", w[1], w[0]);
        }
        assert!(rms("65mm")[j] - rms("none")[j] >= 1e-4);
        assert!(rms("55mm_x2")[j] >= rms("55mm")[j]);
    }
    assert!(data.run("none").unwrap().contact.iter().all(|&c| !c));
}

#[test]
fn signature_tables_parse_back() {
    let data = signature_collect(&sig_env(), &Script::default(), &standard_conditions()[..2], 1).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("rms.csv");
    let t = data.rms_table();
    t.write(&p).unwrap();
    assert_eq!(Table::read(&p).unwrap(), t);
}

#[test]
fn classifier_separates_presence_and_not_shuffled_labels() {
    let f = signature_features(&EnvConfig::default(), &Script::default(), &standard_conditions(), 12, 2).unwrap();
    let presence = presence_labels(&f);
    assert_eq!(presence.y.iter().filter(|&&c| c == 0).count(), 12);
    assert_eq!(presence.y.iter().filter(|&&c| c == 1).count(), 12);
    let r = object_classifier(&presence, 3).unwrap();
    assert!(r.accuracy >= 0.9, "{r:?}");
    assert!((r.shuffled_accuracy - 0.5).abs() <= 0.2, "{r:?}");
}

#[test]
fn logistic_classifier_fits_separable_data() {
    let x: Vec<Vec<f64>> = (0..40).map(|i| vec![i as f64, (i % 3) as f64]).collect();
    let y: Vec<usize> = (0..40).map(|i| usize::from(i >= 20)).collect();
    let c = LogisticClassifier::fit(&x, &y, 500, 0.5, 0.0).unwrap();
    assert_eq!(c.accuracy(&x, &y), 1.0);
    let one = FeatureSet {
        x: x.clone(),
        y: vec![0; 40],
    };
    assert!(matches!(LogisticClassifier::fit(&one.x, &one.y, 10, 0.1, 0.0), Err(Error::Config(_))));
}

fn tiny_student(env: &EnvConfig, variant: EncoderVariant, t: usize) -> StudentPolicy {
    let mut rng = ChaCha8Rng::seed_from_u64(variant as u64);
    let cfg = StudentConfig {
        variant,
        d_model: 8,
        layers: 1,
        heads: 2,
        ff_dim: 16,
        ..StudentConfig::default()
    };
    StudentPolicy {
        net: Student::new(&mut rng, t, env.dof(), &cfg).unwrap(),
        norm: Normalizer::new(env),
    }
}

#[test]
fn reconstruction_report_is_paired_across_architectures() {
    let env = EnvConfig::default();
    let teacher = init_teacher(&env, &TeacherConfig::default(), 1);
    let students: Vec<_> = EncoderVariant::ALL.iter().map(|&v| (v.name(), tiny_student(&env, v, 10))).collect();
    let refs: Vec<(&str, &StudentPolicy)> = students.iter().map(|(n, p)| (*n, p)).collect();
    let rep = recon_eval(&refs, &teacher, &env, 4, 20, 7).unwrap();
    assert_eq!(rep.archs.len(), 3);
    assert_eq!(rep.comparisons.len(), 3);
    for a in &rep.archs {
        assert_eq!(a.envs.len(), 4);
        assert_eq!(a.q_mean.len(), env.dof());
        assert!(a.pos_mean > 0.0);
    }
    let c = rep.comparison("pt", "mlp").unwrap();
    assert!((c.p_bonferroni - (3.0 * c.test.p).min(1.0)).abs() < 1e-12);
    assert_eq!(rep.per_env_table().rows.len(), 3 * 4);

    let short = tiny_student(&env, EncoderVariant::Pt, 3);
    let err = recon_eval(&[("pt", &short)], &teacher, &env, 4, 5, 7).err().unwrap();
    assert!(matches!(err, Error::Contract(_)));
}

#[test]
fn ablation_cells_vary_one_axis() {
    let c = Config::default();
    let w = cells(Axis::Window, &c.env, &c.student, &c.distill);
    assert_eq!(w.iter().map(|c| c.env.sensor.history).collect::<Vec<_>>(), vec![1, 3, 6, 10]);
    let s = cells(Axis::Sensor, &c.env, &c.student, &c.distill);
    assert_eq!(s.len(), 2);
    assert_ne!(s[0].env.sensor.mode, s[1].env.sensor.mode);
    let r = cells(Axis::NoRecon, &c.env, &c.student, &c.distill);
    assert_eq!(r.iter().map(|c| c.distill.no_recon).collect::<Vec<_>>(), vec![false, true]);
    assert!(Axis::parse("depth").is_err());
}

#[test]
fn summaries_ignore_failed_rows() {
    let row = |cell: &str, rpm: f64, err: bool| AblationRow {
        cell: cell.into(),
        rpm,
        dfsr: Some(rpm * 10.0),
        error: err.then(|| "diverged".into()),
        ..AblationRow::default()
    };
    let s = summarize(&[row("a", 2.0, false), row("a", 4.0, false), row("a", f64::NAN, true), row("b", 1.0, false)]);
    assert_eq!(s.len(), 2);
    assert_eq!((s[0].cell.as_str(), s[0].seeds, s[0].rpm_mean), ("a", 2, 3.0));
    assert_eq!(s[0].dfsr_mean, Some(30.0));
    assert_eq!(s[1].rpm_mean, 1.0);
}

#[test]
fn classifier_split_keeps_class_proportions() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let y: Vec<usize> = (0..40).map(|i| usize::from(i >= 30)).collect();
    let x: Vec<Vec<f64>> = y.iter().map(|&c| vec![c as f64 + rand::Rng::random_range(&mut rng, -0.2..0.2)]).collect();
    let r = object_classifier(&FeatureSet { x, y }, 1).unwrap();
    assert_eq!((r.train, r.test), (20, 20));
    assert_eq!(r.chance, 0.75);
    assert_eq!(r.accuracy, 1.0);
}
