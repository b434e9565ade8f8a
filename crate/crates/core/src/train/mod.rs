//! Training the unknowns: direct fitting against known derivatives, and
//! UPINN fitting against state samples alone.

mod config;
mod direct;
mod metrics;
mod model;
mod plan;
mod residual;
mod result;
mod upinn;

pub use config::{ComponentSpec, EarlyStop, GrowthModelSpec, TrainConfig, UnknownSpec, DIRECT_HIDDEN};
pub use direct::{direct_fit, direct_loss, direct_predictions};
pub use metrics::{evaluate_metrics, evaluate_series, Metrics, MAPE_FLOOR};
pub use model::{
    ComponentModel, GrowthValue, StateModel, TrajectoryNet, TrueUnknowns, UnknownModel, UnknownTerms,
};
pub use residual::{data_loss, loss_components, ode_loss, residual, uniform_grid, LossBreakdown};
pub use result::{ConstantEstimate, FitMode, FitResult, LossRecord};
pub use upinn::upinn_fit;
