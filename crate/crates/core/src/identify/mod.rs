//! Identifiability of structured components: matched pairs, exact recovery
//! of the constant and unknown functions, error radii for approximate
//! pairs, and the non-uniqueness counterexample.

mod bounds;
mod counterexample;
mod pairs;
mod recover;
mod samples;

pub use bounds::{bound_t3, bound_t4, t3_beta_radius, t4_u_radius, BoundReport, FormulaVariant};
pub use counterexample::counterexample_shift;
pub use pairs::{find_matched_pairs, nearest_misses, MatchedPair};
pub use recover::{recover_t1, recover_t2, recover_t2_all, Certificate, Conditions, Theorem};
pub use samples::{Samples, Thresholds};
