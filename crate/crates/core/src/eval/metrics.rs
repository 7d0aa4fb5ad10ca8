//! Trial metrics as pure functions of an event timeline.

use serde::{Deserialize, Serialize};

use crate::env::{Event, EventKind};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrialEventKind {
    /// Full turn in the commanded direction.
    Correct,
    /// Full turn against the commanded direction.
    Wrong,
    Drop,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialEvent {
    pub trial: usize,
    pub time: f64,
    pub kind: TrialEventKind,
}

impl TrialEvent {
    /// Classifies a simulator event against the commanded yaw rate.
    pub fn from_env(trial: usize, e: &Event, omega_cmd: f64) -> Self {
        let kind = match e.kind {
            EventKind::Rotation(s) if (s as f64) * omega_cmd > 0.0 => TrialEventKind::Correct,
            EventKind::Rotation(_) => TrialEventKind::Wrong,
            EventKind::Drop => TrialEventKind::Drop,
        };
        Self {
            trial,
            time: e.time,
            kind,
        }
    }
}

/// Metrics of one trial. `ra` and `dfsr` are `None` when no rotation occurred.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialMetrics {
    pub rpm: f64,
    pub ra: Option<f64>,
    pub dfsr: Option<f64>,
    pub dc: u64,
    pub correct: u64,
    pub wrong: u64,
}

/// Metrics from one trial's events (sorted by time) over `duration` seconds.
/// A rotation is drop-free when no drop falls in the half-open interval
/// between the previous rotation (or the trial start) and itself.
pub fn trial_metrics(events: &[TrialEvent], duration: f64) -> TrialMetrics {
    let (mut correct, mut wrong, mut dc, mut clean) = (0u64, 0u64, 0u64, 0u64);
    let mut dropped_since_last = false;
    for e in events {
        match e.kind {
            TrialEventKind::Drop => {
                dc += 1;
                dropped_since_last = true;
            }
            k => {
                if k == TrialEventKind::Correct {
                    correct += 1;
                } else {
                    wrong += 1;
                }
                if !dropped_since_last {
                    clean += 1;
                }
                dropped_since_last = false;
            }
        }
    }
    let total = correct + wrong;
    let pct = |n: u64| (total > 0).then(|| 100.0 * n as f64 / total as f64);
    TrialMetrics {
        rpm: if duration > 0.0 { correct as f64 * 60.0 / duration } else { 0.0 },
        ra: pct(correct),
        dfsr: pct(clean),
        dc,
        correct,
        wrong,
    }
}

/// Mean and sample standard deviation of the defined values; `None` if none are defined.
pub fn mean_std(values: impl IntoIterator<Item = Option<f64>>) -> Option<(f64, f64)> {
    let v: Vec<f64> = values.into_iter().flatten().collect();
    if v.is_empty() {
        return None;
    }
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = if v.len() > 1 {
        v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    Some((mean, var.sqrt()))
}

/// Trial-averaged metrics.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub rpm_mean: f64,
    pub rpm_std: f64,
    pub ra_mean: Option<f64>,
    pub ra_std: Option<f64>,
    pub dfsr_mean: Option<f64>,
    pub dfsr_std: Option<f64>,
    pub dc_mean: f64,
    pub dc_std: f64,
}

pub fn aggregate(trials: &[TrialMetrics]) -> Aggregate {
    let (rpm_mean, rpm_std) = mean_std(trials.iter().map(|t| Some(t.rpm))).unwrap_or((0.0, 0.0));
    let (dc_mean, dc_std) = mean_std(trials.iter().map(|t| Some(t.dc as f64))).unwrap_or((0.0, 0.0));
    let ra = mean_std(trials.iter().map(|t| t.ra));
    let dfsr = mean_std(trials.iter().map(|t| t.dfsr));
    Aggregate {
        rpm_mean,
        rpm_std,
        ra_mean: ra.map(|x| x.0),
        ra_std: ra.map(|x| x.1),
        dfsr_mean: dfsr.map(|x| x.0),
        dfsr_std: dfsr.map(|x| x.1),
        dc_mean,
        dc_std,
    }
}

/// Splits a multi-trial event log and recomputes per-trial metrics.
pub fn metrics_from_log(events: &[TrialEvent], n_trials: usize, duration: f64) -> Vec<TrialMetrics> {
    (0..n_trials)
        .map(|k| {
            let ev: Vec<TrialEvent> = events.iter().filter(|e| e.trial == k).copied().collect();
            trial_metrics(&ev, duration)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ev(time: f64, kind: TrialEventKind) -> TrialEvent {
        TrialEvent { trial: 0, time, kind }
    }

    #[test]
    fn ten_clean_turns_in_a_minute() {
        let events: Vec<_> = (0..10).map(|i| ev(i as f64 * 5.0, TrialEventKind::Correct)).collect();
        let m = trial_metrics(&events, 60.0);
        assert_eq!(m.rpm, 10.0);
        assert_eq!(m.ra, Some(100.0));
        assert_eq!(m.dfsr, Some(100.0));
        assert_eq!(m.dc, 0);
    }

    #[test]
    fn one_wrong_turn_in_ten() {
        let mut events: Vec<_> = (0..9).map(|i| ev(i as f64, TrialEventKind::Correct)).collect();
        events.push(ev(20.0, TrialEventKind::Wrong));
        let m = trial_metrics(&events, 60.0);
        assert_eq!(m.ra, Some(90.0));
        assert_eq!(m.rpm, 9.0);
    }

    #[test]
    fn no_rotation_is_undefined() {
        let m = trial_metrics(&[ev(3.0, TrialEventKind::Drop)], 60.0);
        assert_eq!(m.rpm, 0.0);
        assert_eq!(m.ra, None);
        assert_eq!(m.dfsr, None);
        assert_eq!(m.dc, 1);
    }

    #[test]
    fn drop_taints_only_the_next_rotation() {
        let events = [
            ev(1.0, TrialEventKind::Correct),
            ev(2.0, TrialEventKind::Drop),
            ev(3.0, TrialEventKind::Correct),
            ev(4.0, TrialEventKind::Correct),
            ev(5.0, TrialEventKind::Drop),
        ];
        let m = trial_metrics(&events, 60.0);
        assert_eq!(m.dfsr, Some(100.0 * 2.0 / 3.0));
        assert_eq!(m.dc, 2);
    }

    #[test]
    fn aggregate_skips_undefined_trials() {
        let a = trial_metrics(&[ev(1.0, TrialEventKind::Correct)], 60.0);
        let b = trial_metrics(&[], 60.0);
        let g = aggregate(&[a, b]);
        assert_eq!(g.ra_mean, Some(100.0));
        assert_eq!(g.rpm_mean, 0.5);
    }
}
