//! Learning in-hand rotation from joint proprioception: a planar tendon-hand
//! simulator, a PPO teacher, transformer and baseline students, distillation
//! and evaluation.

pub mod config;
pub mod distill;
pub mod env;
pub mod error;
pub mod eval;
pub mod io;
pub mod student;
pub mod teacher;

pub use config::Config;
pub use error::{Error, Result};
