use std::path::Path;
use std::process::{Command, Output};

use proprio::io::Table;

const SMALL: &str = r#"
[teacher]
hidden = [16]
iterations = 2
n_envs = 2
horizon = 8

[student]
d_model = 16
layers = 1
heads = 2
ff_dim = 32

[distill]
samples = 64
batch = 16
steps = 4
collect_envs = 2

[eval]
trial_seconds = 5.0
trials = 2
recon_envs = 2
recon_steps = 20
signature_runs = 2
"#;

fn proprio(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_proprio")).args(args).output().unwrap()
}

fn ok(args: &[&str]) -> Output {
    let o = proprio(args);
    assert!(o.status.success(), "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
    o
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn unknown_config_key_exits_with_code_two() {
    let dir = tempfile::tempdir().unwrap();
    let o = proprio(&["train-teacher", "--out", s(dir.path()), "--set", "teacher.nope=1"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("teacher.nope"));

    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "[env.hand]\nbacklash_halfwidth = -1.0\n").unwrap();
    let o = proprio(&["signature", "--out", s(dir.path()), "--config", s(&cfg)]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn corrupt_checkpoint_exits_with_code_three() {
    let dir = tempfile::tempdir().unwrap();
    let ck = dir.path().join("t.ptck");
    std::fs::write(&ck, b"PTCK garbage").unwrap();
    let o = proprio(&["eval", "--out", s(&dir.path().join("e")), "--policy", s(&ck)]);
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("t.ptck"));
}

#[test]
fn pipeline_runs_end_to_end_and_reproduces() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("small.toml");
    std::fs::write(&cfg, SMALL).unwrap();
    let c = s(&cfg);
    let t = dir.path().join("t");
    ok(&["train-teacher", "--config", c, "--seed", "3", "--out", s(&t), "--set", "teacher.iterations=0"]);
    assert!(t.join("config.toml").exists());
    assert!(t.join("teacher_curve.csv").exists());
    let teacher = t.join("teacher.ptck");

    // An untrained teacher does not rotate the object.
    let e1 = dir.path().join("e1");
    ok(&["eval", "--config", c, "--seed", "4", "--out", s(&e1), "--policy", s(&teacher)]);
    let summary = Table::read(&e1.join("summary.csv")).unwrap();
    let rpm: f64 = summary.rows[0][summary.column("rpm_mean").unwrap()].parse().unwrap();
    assert!(rpm <= 3.0, "{rpm}");

    let e2 = dir.path().join("e2");
    ok(&["eval", "--config", c, "--seed", "4", "--out", s(&e2), "--policy", s(&teacher)]);
    for f in ["metrics.csv", "events.csv", "summary.csv"] {
        assert_eq!(std::fs::read(e1.join(f)).unwrap(), std::fs::read(e2.join(f)).unwrap(), "{f}");
    }

    let d = dir.path().join("d");
    ok(&["distill", "--config", c, "--seed", "5", "--out", s(&d), "--teacher", s(&teacher)]);
    for f in ["dataset.ptds", "distill_log.csv", "student.ptck"] {
        assert!(d.join(f).exists(), "{f}");
    }
    let d2 = dir.path().join("d2");
    let ds = d.join("dataset.ptds");
    ok(&["distill", "--config", c, "--seed", "5", "--out", s(&d2), "--teacher", s(&teacher), "--dataset", s(&ds)]);
    assert_eq!(std::fs::read(d.join("student.ptck")).unwrap(), std::fs::read(d2.join("student.ptck")).unwrap());

    let e3 = dir.path().join("e3");
    ok(&["eval", "--config", c, "--out", s(&e3), "--policy", s(&d.join("student.ptck")), "--trajectory"]);
    assert!(!Table::read(&e3.join("trajectory.csv")).unwrap().rows.is_empty());

    let r = dir.path().join("r");
    let pt = format!("pt={}", s(&d.join("student.ptck")));
    ok(&["reconstruct", "--config", c, "--out", s(&r), "--teacher", s(&teacher), "--student", &pt]);
    assert_eq!(Table::read(&r.join("recon_per_env.csv")).unwrap().rows.len(), 2);
}

#[test]
fn malformed_student_spec_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = proprio(&["reconstruct", "--out", s(dir.path()), "--teacher", "x.ptck", "--student", "nopath"]);
    assert_eq!(o.status.code(), Some(2));
}
