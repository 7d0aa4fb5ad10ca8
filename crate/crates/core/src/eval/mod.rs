//! Rotation trials, reconstruction analysis, joint signatures, ablations and statistics.

pub mod ablation;
pub mod metrics;
pub mod recon;
pub mod signature;
pub mod stats;
pub mod trial;

pub use metrics::{aggregate, trial_metrics, Aggregate, TrialEvent, TrialEventKind, TrialMetrics};
pub use recon::{recon_eval, ReconReport};
pub use signature::{signature_collect, Condition, Script, SignatureDataset};
pub use stats::{bonferroni, ttest_paired, TTest};
pub use trial::{run_trial, run_trial_logged, trajectory_header, HoldStill, Policy, ScriptedGait, TrialReport};
