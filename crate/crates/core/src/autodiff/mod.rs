//! Numerical substrate: a scalar reverse-mode tape, tanh MLPs with a batched
//! engine, and the Adam optimizer.

mod adam;
mod mlp;
mod scalar;
mod tape;

pub use adam::{adam_step, AdamState};
pub use mlp::{column, ones_column, BatchTrace, Mlp};
pub use scalar::Real;
pub use tape::{Gradients, Tape, Var};
