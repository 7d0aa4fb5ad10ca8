use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use proprio::distill::{collect, EpochLog, Trainer};
use proprio::eval::ablation::{ablation_sweep, cells, summarize, Axis, TrialSpec};
use proprio::eval::signature::{
    object_classifier, presence_labels, signature_collect, signature_features, standard_conditions, Script,
};
use proprio::eval::{recon_eval, run_trial_logged, trajectory_header, Policy};
use proprio::io::checkpoint::Checkpoint;
use proprio::io::dataset::Dataset;
use proprio::io::{fmt_f64, write_atomic, write_csv, Table};
use proprio::student::StudentPolicy;
use proprio::teacher::{train_teacher, TeacherNets, TEACHER_VARIANT};
use proprio::{Config, Error, Result};

#[derive(Parser)]
#[command(name = "proprio", version, about = "In-hand rotation from joint proprioception")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// TOML configuration; defaults apply to omitted keys.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory for every artifact of the run.
    #[arg(long)]
    out: PathBuf,
    /// Override a configuration key, e.g. `--set teacher.lr=3e-4`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Train the privileged teacher with PPO.
    TrainTeacher {
        #[command(flatten)]
        common: Common,
    },
    /// Collect teacher-labelled data and train a student.
    Distill {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        teacher: PathBuf,
        /// Reuse a dataset instead of collecting one.
        #[arg(long)]
        dataset: Option<PathBuf>,
        /// Continue training from a student checkpoint with optimizer state.
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Run timed rotation trials with a teacher or student checkpoint.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        policy: PathBuf,
        /// Also write the per-step trajectory log.
        #[arg(long)]
        trajectory: bool,
    },
    /// Distill and evaluate one configuration per value of an ablation axis.
    Ablate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        teacher: PathBuf,
        /// window, sensor, encoder or no_recon.
        #[arg(long)]
        axis: String,
    },
    /// Compare reconstruction accuracy of student checkpoints on shared trajectories.
    Reconstruct {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        teacher: PathBuf,
        /// `name=path` pairs, e.g. `pt=out/student.ptck`.
        #[arg(long = "student", required = true)]
        students: Vec<String>,
    },
    /// Joint command-tracking signatures and the object-presence classifier.
    Signature {
        #[command(flatten)]
        common: Common,
    },
}

fn setup(common: &Common) -> Result<Config> {
    let base = match &common.config {
        Some(p) => Config::load(p)?,
        None => Config::default(),
    };
    let cfg = base.with_overrides(&common.overrides)?;
    fs::create_dir_all(&common.out).map_err(|e| Error::io(&common.out, e))?;
    let text = cfg.to_toml()?;
    write_atomic(&common.out.join("config.toml"), text.as_bytes())?;
    eprintln!("resolved config written to {}", common.out.join("config.toml").display());
    Ok(cfg)
}

fn load_teacher(path: &Path) -> Result<TeacherNets<f32>> {
    TeacherNets::from_checkpoint(&Checkpoint::load(path)?)
}

fn opt_f64(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_default()
}

fn train_teacher_cmd(common: &Common) -> Result<()> {
    let cfg = setup(common)?;
    let out = &common.out;
    let every = cfg.teacher.checkpoint_every;
    let run = train_teacher(&cfg.env, &cfg.teacher, common.seed, |row, nets| {
        eprintln!(
            "iter {:5} reward {:9.3} r_dir {:8.3} rotations {:4} drops {:4}",
            row.iteration, row.r_total, row.r_dir, row.rotations, row.drops
        );
        if every > 0 && (row.iteration + 1) % every == 0 {
            nets.to_checkpoint().save(&out.join(format!("teacher_{:05}.ptck", row.iteration + 1)))?;
        }
        Ok(())
    })?;
    write_csv(&out.join("teacher_curve.csv"), &run.curve)?;
    run.nets.to_checkpoint().save(&out.join("teacher.ptck"))
}

fn distill_cmd(common: &Common, teacher: &Path, dataset: Option<&Path>, resume: Option<&Path>) -> Result<()> {
    let cfg = setup(common)?;
    let out = &common.out;
    let data = match dataset {
        Some(p) => Dataset::load(p)?,
        None => {
            let nets = load_teacher(teacher)?;
            let (mut data, stats) = collect(&nets, None, &cfg.env, &cfg.distill, common.seed)?;
            eprintln!(
                "collected {} samples over {} finished episodes ({} diverged and discarded)",
                data.len(),
                stats.episodes,
                stats.diverged
            );
            data.shuffle(common.seed);
            data.save(&out.join("dataset.ptds"))?;
            data
        }
    };
    let mut trainer = match resume {
        Some(p) => Trainer::from_checkpoint(&Checkpoint::load(p)?, &cfg.distill, cfg.student.loss)?,
        None => Trainer::new(&cfg.env, &cfg.student, &cfg.distill, common.seed)?,
    };
    let mut logs: Vec<EpochLog> = Vec::new();
    let result = trainer.run(&data, |row, tr| {
        eprintln!(
            "epoch {:5} step {:6} bc {:.6} pos {:.6} q {:.6} qdot {:.6}",
            row.epoch, row.steps, row.l_bc, row.l_pos, row.l_q, row.l_qdot
        );
        logs.push(row.clone());
        tr.to_checkpoint().save(&out.join("student.ptck"))
    });
    write_csv(&out.join("distill_log.csv"), &logs)?;
    if let Err(e) = result {
        // Parameters are those of the last good step.
        trainer.to_checkpoint().save(&out.join("student_last_good.ptck"))?;
        return Err(e);
    }
    trainer.to_checkpoint().save(&out.join("student.ptck"))
}

fn load_policy(path: &Path) -> Result<(Box<dyn Policy>, String)> {
    let ck = Checkpoint::load(path)?;
    if ck.variant == TEACHER_VARIANT {
        Ok((Box::new(TeacherNets::from_checkpoint(&ck)?), ck.variant))
    } else {
        Ok((Box::new(StudentPolicy::from_checkpoint(&ck, None)?), ck.variant))
    }
}

fn eval_cmd(common: &Common, policy: &Path, trajectory: bool) -> Result<()> {
    let cfg = setup(common)?;
    let out = &common.out;
    let (mut pol, variant) = load_policy(policy)?;
    let mut env = cfg.env.clone();
    if variant != TEACHER_VARIANT {
        let ck = Checkpoint::load(policy)?;
        env.sensor.history = ck.t as usize;
    }
    let mut log = Table::new(trajectory_header(env.dof()));
    let report = run_trial_logged(
        pol.as_mut(),
        &env,
        cfg.eval.trial_seconds,
        cfg.eval.trials,
        common.seed,
        trajectory.then_some(&mut log),
    )?;
    let mut trials = Table::new(["trial", "rpm", "ra", "dfsr", "dc", "correct", "wrong"].map(String::from).to_vec());
    for (k, m) in report.trials.iter().enumerate() {
        trials.push(vec![
            k.to_string(),
            fmt_f64(m.rpm),
            opt_f64(m.ra),
            opt_f64(m.dfsr),
            m.dc.to_string(),
            m.correct.to_string(),
            m.wrong.to_string(),
        ]);
    }
    trials.write(&out.join("metrics.csv"))?;
    write_csv(&out.join("events.csv"), &report.events)?;
    write_csv(&out.join("summary.csv"), &[report.aggregate])?;
    if trajectory {
        log.write(&out.join("trajectory.csv"))?;
    }
    let a = report.aggregate;
    println!(
        "{variant}: RPM {:.2} ± {:.2}, RA {}, DFSR {}, DC {:.2}",
        a.rpm_mean,
        a.rpm_std,
        a.ra_mean.map_or("undefined".into(), |v| format!("{v:.1}%")),
        a.dfsr_mean.map_or("undefined".into(), |v| format!("{v:.1}%")),
        a.dc_mean
    );
    Ok(())
}

fn ablate_cmd(common: &Common, teacher: &Path, axis: &str) -> Result<()> {
    let axis = Axis::parse(axis)?;
    let cfg = setup(common)?;
    let nets = load_teacher(teacher)?;
    let sweep = cells(axis, &cfg.env, &cfg.student, &cfg.distill);
    let seeds: Vec<u64> = (0..cfg.eval.ablation_seeds as u64).map(|k| common.seed + k).collect();
    let spec = TrialSpec {
        duration: cfg.eval.trial_seconds,
        n_trials: cfg.eval.trials,
        seed: common.seed,
    };
    let rows = ablation_sweep(&nets, &sweep, &seeds, spec, |r| match &r.error {
        Some(e) => eprintln!("{} seed {}: failed: {e}", r.cell, r.seed),
        None => eprintln!("{} seed {}: RPM {:.2} DFSR {}", r.cell, r.seed, r.rpm, opt_f64(r.dfsr)),
    });
    write_csv(&common.out.join("ablation.csv"), &rows)?;
    let summary = summarize(&rows);
    write_csv(&common.out.join("ablation_summary.csv"), &summary)?;
    for s in &summary {
        println!(
            "{:12} RPM {:.2} ± {:.2}  RA {}  DFSR {}  DC {:.2}",
            s.cell,
            s.rpm_mean,
            s.rpm_std,
            opt_f64(s.ra_mean),
            opt_f64(s.dfsr_mean),
            s.dc_mean
        );
    }
    Ok(())
}

fn reconstruct_cmd(common: &Common, teacher: &Path, students: &[String]) -> Result<()> {
    let specs = students
        .iter()
        .map(|s| {
            s.split_once('=')
                .ok_or_else(|| Error::Config(format!("--student `{s}` is not of the form name=path")))
        })
        .collect::<Result<Vec<_>>>()?;
    let cfg = setup(common)?;
    let nets = load_teacher(teacher)?;
    let mut loaded = Vec::new();
    for (name, path) in specs {
        loaded.push((name.to_string(), StudentPolicy::from_checkpoint(&Checkpoint::load(Path::new(path))?, None)?));
    }
    let mut env = cfg.env.clone();
    if let Some((_, p)) = loaded.first() {
        env.sensor.history = p.net.t;
    }
    let refs: Vec<(&str, &StudentPolicy)> = loaded.iter().map(|(n, p)| (n.as_str(), p)).collect();
    let report = recon_eval(&refs, &nets, &env, cfg.eval.recon_envs, cfg.eval.recon_steps, common.seed)?;
    report.per_env_table().write(&common.out.join("recon_per_env.csv"))?;
    report.per_joint_table().write(&common.out.join("recon_per_joint.csv"))?;
    report.comparison_table().write(&common.out.join("recon_tests.csv"))?;
    for a in &report.archs {
        println!("{:6} position RMSE {:.2} ± {:.2} mm", a.name, a.pos_mean, a.pos_std);
    }
    for c in &report.comparisons {
        println!(
            "{} vs {}: t = {:.3}, p = {:.3e}, Bonferroni p = {:.3e}, d = {:.2}",
            c.a, c.b, c.test.t, c.test.p, c.p_bonferroni, c.test.cohens_d
        );
    }
    Ok(())
}

fn signature_cmd(common: &Common) -> Result<()> {
    let cfg = setup(common)?;
    let script = Script::default();
    let mut conditions = standard_conditions();
    let heavy = conditions[2].heavier(2.0);
    conditions.push(heavy);
    let data = signature_collect(&cfg.env, &script, &conditions, common.seed)?;
    data.rms_table().write(&common.out.join("signature_rms.csv"))?;
    data.scatter_table().write(&common.out.join("signature_scatter.csv"))?;
    let features = signature_features(
        &cfg.env,
        &script,
        &standard_conditions(),
        cfg.eval.signature_runs,
        common.seed,
    )?;
    let four_way = object_classifier(&features, common.seed)?;
    let presence = object_classifier(&presence_labels(&features), common.seed)?;
    let mut t = Table::new(
        ["task", "accuracy", "shuffled_accuracy", "chance", "train", "test"]
            .map(String::from)
            .to_vec(),
    );
    for (name, r) in [("presence", presence), ("size", four_way)] {
        t.push(vec![
            name.into(),
            fmt_f64(r.accuracy),
            fmt_f64(r.shuffled_accuracy),
            fmt_f64(r.chance),
            r.train.to_string(),
            r.test.to_string(),
        ]);
        println!(
            "{name}: held-out accuracy {:.3} (shuffled labels {:.3}, chance {:.3})",
            r.accuracy, r.shuffled_accuracy, r.chance
        );
    }
    t.write(&common.out.join("classifier.csv"))
}

fn run(cli: Cli) -> Result<()> {
    match &cli.command {
        Command::TrainTeacher { common } => train_teacher_cmd(common),
        Command::Distill {
            common,
            teacher,
            dataset,
            resume,
        } => distill_cmd(common, teacher, dataset.as_deref(), resume.as_deref()),
        Command::Eval {
            common,
            policy,
            trajectory,
        } => eval_cmd(common, policy, *trajectory),
        Command::Ablate { common, teacher, axis } => ablate_cmd(common, teacher, axis),
        Command::Reconstruct {
            common,
            teacher,
            students,
        } => reconstruct_cmd(common, teacher, students),
        Command::Signature { common } => signature_cmd(common),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
