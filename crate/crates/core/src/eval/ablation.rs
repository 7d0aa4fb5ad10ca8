//! Per-configuration distillation and evaluation sweeps.

use serde::{Deserialize, Serialize};

use crate::distill::{collect, train_student, DistillConfig};
use crate::env::{EnvConfig, SensorMode};
use crate::error::{Error, Result};
use crate::student::{EncoderVariant, StudentConfig};
use crate::teacher::TeacherNets;

use super::metrics::mean_std;
use super::trial::run_trial;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Axis {
    Window,
    Sensor,
    Encoder,
    NoRecon,
}

impl Axis {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "window" => Ok(Axis::Window),
            "sensor" => Ok(Axis::Sensor),
            "encoder" => Ok(Axis::Encoder),
            "no_recon" => Ok(Axis::NoRecon),
            _ => Err(Error::Config(format!(
                "unknown ablation axis `{s}` (expected window, sensor, encoder or no_recon)"
            ))),
        }
    }
}

/// One configuration of a sweep.
#[derive(Clone, Debug, PartialEq)]
pub struct Cell {
    pub name: String,
    pub env: EnvConfig,
    pub student: StudentConfig,
    pub distill: DistillConfig,
}

pub const WINDOWS: [usize; 4] = [1, 3, 6, 10];

/// Cells varying one axis around the base configuration.
pub fn cells(axis: Axis, env: &EnvConfig, student: &StudentConfig, distill: &DistillConfig) -> Vec<Cell> {
    let base = |name: String| Cell {
        name,
        env: env.clone(),
        student: student.clone(),
        distill: distill.clone(),
    };
    match axis {
        Axis::Window => WINDOWS
            .iter()
            .map(|&t| {
                let mut c = base(format!("T={t}"));
                c.env.sensor.history = t;
                c
            })
            .collect(),
        Axis::Sensor => [SensorMode::JointSensor, SensorMode::MotorEncoder]
            .into_iter()
            .map(|m| {
                let mut c = base(m.name().to_string());
                c.env.sensor.mode = m;
                c
            })
            .collect(),
        Axis::Encoder => EncoderVariant::ALL
            .into_iter()
            .map(|v| {
                let mut c = base(v.name().to_string());
                c.student.variant = v;
                c
            })
            .collect(),
        Axis::NoRecon => [false, true]
            .into_iter()
            .map(|off| {
                let mut c = base(if off { "no_recon" } else { "with_recon" }.to_string());
                c.distill.no_recon = off;
                c
            })
            .collect(),
    }
}

/// One trained and evaluated cell for one seed. A failed cell carries its error.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub cell: String,
    pub seed: u64,
    pub rpm: f64,
    pub ra: Option<f64>,
    pub dfsr: Option<f64>,
    pub dc: f64,
    pub first_bc: f64,
    pub final_bc: f64,
    pub error: Option<String>,
}

/// Trial settings shared by every cell.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrialSpec {
    pub duration: f64,
    pub n_trials: usize,
    pub seed: u64,
}

fn run_cell(teacher: &TeacherNets<f32>, cell: &Cell, seed: u64, trial: TrialSpec) -> Result<AblationRow> {
    let (data, _) = collect(teacher, None, &cell.env, &cell.distill, seed)?;
    let (mut student, logs) = train_student(&data, &cell.env, &cell.student, &cell.distill, seed, |_, _| Ok(()))?;
    let report = run_trial(&mut student, &cell.env, trial.duration, trial.n_trials, trial.seed)?;
    let a = report.aggregate;
    Ok(AblationRow {
        cell: cell.name.clone(),
        seed,
        rpm: a.rpm_mean,
        ra: a.ra_mean,
        dfsr: a.dfsr_mean,
        dc: a.dc_mean,
        first_bc: logs.first().map_or(f64::NAN, |l| l.l_bc),
        final_bc: logs.last().map_or(f64::NAN, |l| l.l_bc),
        error: None,
    })
}

/// Collects, distills and evaluates every cell for every seed. Failures are
/// recorded in the row and the sweep continues.
pub fn ablation_sweep(
    teacher: &TeacherNets<f32>,
    cells: &[Cell],
    seeds: &[u64],
    trial: TrialSpec,
    mut on_row: impl FnMut(&AblationRow),
) -> Vec<AblationRow> {
    let mut rows = Vec::new();
    for cell in cells {
        for &seed in seeds {
            let row = run_cell(teacher, cell, seed, trial).unwrap_or_else(|e| AblationRow {
                cell: cell.name.clone(),
                seed,
                rpm: f64::NAN,
                dc: f64::NAN,
                first_bc: f64::NAN,
                final_bc: f64::NAN,
                error: Some(e.to_string()),
                ..AblationRow::default()
            });
            on_row(&row);
            rows.push(row);
        }
    }
    rows
}

/// Seed-averaged metrics of one cell.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub cell: String,
    pub seeds: usize,
    pub rpm_mean: f64,
    pub rpm_std: f64,
    pub ra_mean: Option<f64>,
    pub dfsr_mean: Option<f64>,
    pub dfsr_std: Option<f64>,
    pub dc_mean: f64,
}

/// Averages successful rows per cell, in first-seen order.
pub fn summarize(rows: &[AblationRow]) -> Vec<CellSummary> {
    let mut names: Vec<&str> = Vec::new();
    for r in rows {
        if !names.contains(&r.cell.as_str()) {
            names.push(&r.cell);
        }
    }
    names
        .into_iter()
        .map(|name| {
            let ok: Vec<&AblationRow> = rows.iter().filter(|r| r.cell == name && r.error.is_none()).collect();
            let (rpm_mean, rpm_std) = mean_std(ok.iter().map(|r| Some(r.rpm))).unwrap_or((f64::NAN, f64::NAN));
            let dfsr = mean_std(ok.iter().map(|r| r.dfsr));
            CellSummary {
                cell: name.to_string(),
                seeds: ok.len(),
                rpm_mean,
                rpm_std,
                ra_mean: mean_std(ok.iter().map(|r| r.ra)).map(|x| x.0),
                dfsr_mean: dfsr.map(|x| x.0),
                dfsr_std: dfsr.map(|x| x.1),
                dc_mean: mean_std(ok.iter().map(|r| Some(r.dc))).map_or(f64::NAN, |x| x.0),
            }
        })
        .collect()
}
