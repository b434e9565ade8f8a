//! Pre-wired reproduction cases and the noise and dataset-length sweeps.

mod case;
mod sweep;

pub use case::{
    compare_functions, ground_truth, run_case, run_config, CaseConfig, CaseId, CaseOverrides, CaseReport,
    ConstantReport, FunctionComparison, CASE5_EPOCHS, EVAL_SAMPLES, FUNCTION_GRID, TRUTH_DT,
};
pub use sweep::{
    default_threads, median, run_configs, sweep_length, sweep_noise, write_case, Sweep, SweepEntry, SweepKind,
    Table, DEFAULT_SEEDS, LENGTHS, NOISE_LEVELS,
};
