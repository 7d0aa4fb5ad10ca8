//! Dense tensors with a define-by-run reverse-mode tape, plus the layers and
//! optimiser needed for MLP, LSTM and transformer training.
//!
//! Values live on a [`Tape`] and are addressed through [`Var`] handles.
//! Trainable tensors live in a [`ParamSet`]; each forward pass copies them
//! onto a fresh tape and [`Tape::write_param_grads`] routes gradients back.
//!
//! Broadcasting is limited to equal shapes and scalar-vs-tensor, plus the
//! explicit [`Tape::add_bias`] and [`Tape::tile`] ops.

mod error;
pub mod gradcheck;
pub mod init;
pub mod nn;
mod ops;
pub mod optim;
mod param;
mod real;
mod tape;
mod tensor;

pub use error::{Result, TensorError};
pub use param::{ParamEntry, ParamId, ParamSet};
pub use real::Real;
pub use tape::{Tape, Var};
pub use tensor::{numel, Tensor};
