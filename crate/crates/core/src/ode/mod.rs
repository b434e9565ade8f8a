//! Structured ODE systems, integration, sampling and noise.

pub mod builtin;
pub mod expr;
mod rk4;
pub mod system;
mod trajectory;

pub use builtin::{builtin_system, with_u_true, BuiltinCase, DEFAULT_T_SPAN};
pub use expr::Expr;
pub use rk4::{rk4_integrate, rk4_with};
pub use system::{Component, Growth, GrowthForm, StructuredSystem, StructuredTerm};
pub use trajectory::{inject_noise, sample_dataset, write_atomic, NoiseSpec, Trajectory};
