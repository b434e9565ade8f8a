//! Inverse problems for ODE systems with unknown constants and unknown
//! functional terms.
//!
//! - [`autodiff`]: reverse-mode tape, tanh MLPs, Adam.
//! - [`ode`]: structured systems, RK4, datasets and noise.
//! - [`identify`]: matched pairs, exact recovery, Lipschitz error radii and
//!   the non-uniqueness counterexample.
//! - [`train`]: direct fitting against known derivatives and UPINN fitting.
//! - [`experiments`]: the reproduction cases and sweeps.

pub mod autodiff;
pub mod error;
pub mod experiments;
pub mod identify;
pub mod ode;
pub mod train;

pub use error::{Error, Result};
