//! Minimal dense-tensor compute substrate with reverse-mode gradients.
//!
//! Everything runs on 64-bit floats and rank-2 [`Tensor`]s (vectors are
//! single-row matrices, scalars are 1x1). A [`Tape`] records every operation
//! of a forward pass; [`Tape::backward`] replays it in reverse and
//! accumulates gradients additively into every node, so a loss built from
//! the registered primitives is differentiable end to end.
//!
//! The crate also provides the decoupled-weight-decay Adam update
//! ([`AdamState`]), a central-finite-difference [`gradient_check`], a
//! counter-based dropout mask generator for bitwise-reproducible training,
//! and a plain-text checkpoint format (17 significant digits per value).

mod adam;
mod checkpoint;
mod gradcheck;
mod masks;
mod tape;
mod tensor;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use checkpoint::{load_checkpoint, save_checkpoint, CheckpointError};
pub use gradcheck::{gradient_check, GradCheckError};
pub use masks::dropout_mask;
pub use tape::{Gradients, Tape, Var};
pub use tensor::Tensor;
