use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ode::{
    builtin_system, inject_noise, rk4_integrate, sample_dataset, with_u_true, BuiltinCase, NoiseSpec,
    StructuredSystem, Trajectory,
};
use crate::train::{
    direct_fit, evaluate_metrics, upinn_fit, EarlyStop, FitMode, FitResult, StateModel, TrainConfig,
    UnknownSpec, UnknownTerms, DIRECT_HIDDEN,
};

/// Integration step for ground-truth trajectories.
pub const TRUTH_DT: f64 = 1e-3;
/// Points on each true-vs-predicted function grid.
pub const FUNCTION_GRID: usize = 200;
/// Samples in the dense noiseless grid that UPINN trajectories are scored on.
pub const EVAL_SAMPLES: usize = 1001;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CaseId {
    /// Chemotherapy, known logistic growth, `u(N) = N`, direct fit.
    Case1UN,
    /// As above with `u(N) = N^2`.
    Case1UN2,
    /// Chemotherapy with unknown growth and unknown `u`, direct fit.
    Case2,
    /// Lotka-Volterra, two constants and two unknown functions, direct fit.
    Case3,
    /// Lotka-Volterra UPINN with proportional noise.
    Case4,
    /// Chemotherapy UPINN with a fivefold injection and short datasets.
    Case5,
}

impl CaseId {
    pub const ALL: [CaseId; 6] = [
        CaseId::Case1UN,
        CaseId::Case1UN2,
        CaseId::Case2,
        CaseId::Case3,
        CaseId::Case4,
        CaseId::Case5,
    ];

    pub fn name(self) -> &'static str {
        match self {
            CaseId::Case1UN => "case1_u_n",
            CaseId::Case1UN2 => "case1_u_n2",
            CaseId::Case2 => "case2",
            CaseId::Case3 => "case3",
            CaseId::Case4 => "case4",
            CaseId::Case5 => "case5",
        }
    }
}

impl fmt::Display for CaseId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for CaseId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.trim().to_ascii_lowercase().replace('-', "_");
        CaseId::ALL
            .into_iter()
            .find(|c| c.name() == norm)
            .ok_or_else(|| {
                Error::Config(format!(
                    "unknown case '{s}' (expected one of: {})",
                    CaseId::ALL.map(|c| c.name()).join(", ")
                ))
            })
    }
}

/// Partial settings layered over a case's defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CaseOverrides {
    pub epochs: Option<usize>,
    pub learning_rate: Option<f64>,
    pub seed: Option<u64>,
    pub omega_de: Option<f64>,
    pub collocation_count: Option<usize>,
    pub batch_size: Option<usize>,
    /// Proportional noise fraction (UPINN cases).
    pub noise: Option<f64>,
    /// Number of training samples.
    pub samples: Option<usize>,
    pub initial_constants: Option<Vec<f64>>,
    /// Disables the plateau stop of the UPINN cases.
    pub no_early_stop: bool,
}

/// Everything needed to rerun a case bit for bit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CaseConfig {
    pub case: CaseId,
    pub mode: FitMode,
    pub system: BuiltinCase,
    /// Ground-truth `u` of the first structured component, in `y`.
    pub u_true: Option<String>,
    pub initial_constants: Vec<f64>,
    pub samples: usize,
    pub noise: f64,
    /// Seed of the noise draw.
    pub noise_seed: u64,
    pub hidden: Vec<usize>,
    pub trajectory_hidden: Option<Vec<usize>>,
    pub train: TrainConfig,
}

impl CaseConfig {
    pub fn defaults(case: CaseId) -> Self {
        let direct = |system, u_true: Option<&str>, init: Vec<f64>, epochs| CaseConfig {
            case,
            mode: FitMode::Direct,
            system,
            u_true: u_true.map(str::to_string),
            initial_constants: init,
            samples: 1001,
            noise: 0.0,
            noise_seed: 0,
            hidden: DIRECT_HIDDEN.to_vec(),
            trajectory_hidden: None,
            train: TrainConfig {
                epochs,
                batch_size: Some(64),
                ..TrainConfig::default()
            },
        };
        match case {
            CaseId::Case1UN => direct(BuiltinCase::ChemoInjection, None, vec![2.0], 1000),
            CaseId::Case1UN2 => direct(BuiltinCase::ChemoInjection, Some("y^2"), vec![2.0], 1000),
            CaseId::Case2 => direct(BuiltinCase::ChemoUnknownGrowth, None, vec![], 5000),
            CaseId::Case3 => direct(BuiltinCase::LotkaVolterra, None, vec![2.0, 2.0], 1000),
            CaseId::Case4 => CaseConfig {
                case,
                mode: FitMode::Upinn,
                system: BuiltinCase::LotkaVolterra,
                u_true: None,
                initial_constants: vec![1.5, 0.5],
                samples: 1001,
                noise: 0.0,
                noise_seed: 0,
                hidden: vec![20; 4],
                trajectory_hidden: Some(vec![20; 4]),
                train: TrainConfig {
                    epochs: 20_000,
                    omega_de: 0.1,
                    early_stop: Some(EarlyStop::default()),
                    ..TrainConfig::default()
                },
            },
            CaseId::Case5 => CaseConfig {
                case,
                mode: FitMode::Upinn,
                system: BuiltinCase::ChemoScaledInjection,
                u_true: None,
                initial_constants: vec![1.5],
                samples: 1024,
                noise: 0.0,
                noise_seed: 0,
                hidden: vec![10; 2],
                trajectory_hidden: Some(vec![20; 3]),
                train: TrainConfig {
                    epochs: CASE5_EPOCHS,
                    omega_de: 0.001,
                    early_stop: Some(EarlyStop::default()),
                    ..TrainConfig::default()
                },
            },
        }
    }

    pub fn resolve(case: CaseId, overrides: &CaseOverrides) -> Result<Self> {
        let mut c = Self::defaults(case);
        let o = overrides;
        if let Some(v) = o.epochs {
            c.train.epochs = v;
        }
        if let Some(v) = o.learning_rate {
            c.train.learning_rate = v;
        }
        if let Some(v) = o.seed {
            c.train.seed = v;
            c.noise_seed = v;
        }
        if let Some(v) = o.omega_de {
            c.train.omega_de = v;
        }
        if let Some(v) = o.collocation_count {
            c.train.collocation_count = v;
        }
        if let Some(v) = o.batch_size {
            c.train.batch_size = Some(v);
        }
        if o.no_early_stop {
            c.train.early_stop = None;
        }
        if let Some(v) = o.noise {
            c.noise = v;
        }
        if let Some(v) = o.samples {
            c.samples = v;
        }
        if let Some(v) = &o.initial_constants {
            c.initial_constants = v.clone();
        }
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        if !(0.0..=1.0).contains(&self.noise) {
            return Err(Error::Config(format!("noise must lie in [0, 1], got {}", self.noise)));
        }
        if self.noise > 0.0 && self.mode == FitMode::Direct {
            return Err(Error::Config(
                "direct fits need exact derivatives; noise applies to UPINN cases only".into(),
            ));
        }
        if self.samples == 0 {
            return Err(Error::Config("sample count must be at least 1".into()));
        }
        Ok(())
    }

    pub fn system(&self) -> Result<StructuredSystem> {
        let sys = builtin_system(self.system);
        match &self.u_true {
            Some(u) => {
                let q = sys.structured().next().map(|(q, _)| q).unwrap_or(0);
                with_u_true(sys, q, u)
            }
            None => Ok(sys),
        }
    }
}

/// Default epoch budget of case 5; the plateau stop usually ends it sooner.
pub const CASE5_EPOCHS: usize = 40_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstantReport {
    pub name: String,
    pub truth: f64,
    pub initial: f64,
    pub predicted: f64,
    pub percent_error: f64,
}

/// True and predicted values of one unknown function on a grid over the
/// observed range of its input.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FunctionComparison {
    /// `u_<state>` or `growth_<state>`.
    pub name: String,
    pub component: usize,
    pub y: Vec<f64>,
    pub truth: Vec<f64>,
    pub predicted: Vec<f64>,
}

impl FunctionComparison {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("y,true,predicted\n");
        for ((y, t), p) in self.y.iter().zip(&self.truth).zip(&self.predicted) {
            out.push_str(&format!("{y:?},{t:?},{p:?}\n"));
        }
        out
    }

    /// Largest relative error over grid points whose `y` lies in the middle
    /// `fraction` of the grid's range.
    pub fn max_relative_error_interior(&self, fraction: f64) -> f64 {
        let (lo, hi) = (self.y[0], self.y[self.y.len() - 1]);
        let margin = 0.5 * (1.0 - fraction) * (hi - lo);
        self.max_relative_error_within(lo + margin, hi - margin)
    }

    pub fn max_relative_error_within(&self, lo: f64, hi: f64) -> f64 {
        self.y
            .iter()
            .zip(&self.truth)
            .zip(&self.predicted)
            .filter(|((y, _), _)| **y >= lo && **y <= hi)
            .map(|((_, t), p)| (p - t).abs() / t.abs().max(f64::MIN_POSITIVE))
            .fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseReport {
    pub config: CaseConfig,
    pub constants: Vec<ConstantReport>,
    pub data_loss: f64,
    pub ode_loss: f64,
    pub total_loss: f64,
    /// Scored against noiseless ground truth: derivatives for direct fits,
    /// states on a dense grid for UPINN fits.
    pub mse: f64,
    pub r2: f64,
    pub mape: f64,
    pub epochs_run: usize,
    pub wall_seconds: f64,
    pub functions: Vec<FunctionComparison>,
    #[serde(skip)]
    pub fit: Option<FitResult>,
}

impl CaseReport {
    pub fn constant(&self, name: &str) -> Option<&ConstantReport> {
        self.constants.iter().find(|c| c.name == name)
    }

    pub fn function(&self, name: &str) -> Option<&FunctionComparison> {
        self.functions.iter().find(|f| f.name == name)
    }
}

pub fn run_case(case: CaseId, overrides: &CaseOverrides) -> Result<CaseReport> {
    run_config(&CaseConfig::resolve(case, overrides)?)
}

/// Noiseless trajectory of the case's system at the truth step.
pub fn ground_truth(system: &StructuredSystem) -> Result<Trajectory> {
    rk4_integrate(system, &system.x0, system.t_span, TRUTH_DT)
}

pub fn run_config(config: &CaseConfig) -> Result<CaseReport> {
    config.validate()?;
    let system = config.system()?;
    let truth = ground_truth(&system)?;
    let clean = sample_dataset(&truth, config.samples)?;
    let data = match config.mode {
        FitMode::Direct => clean.clone(),
        FitMode::Upinn => inject_noise(
            &clean,
            NoiseSpec {
                fraction: config.noise,
                seed: config.noise_seed,
            },
        )?,
    };
    let started = Instant::now();
    let (fit, metrics) = match config.mode {
        FitMode::Direct => {
            let spec = UnknownSpec::for_system(&system, &config.initial_constants, &config.hidden)?;
            let fit = direct_fit(&system, &data, &spec, &config.train)?;
            let metrics = fit.metrics;
            (fit, metrics)
        }
        FitMode::Upinn => {
            let hidden = config.trajectory_hidden.as_deref().ok_or_else(|| {
                Error::Config("UPINN cases need trajectory_hidden".into())
            })?;
            let spec = UnknownSpec::for_system(&system, &config.initial_constants, &config.hidden)?
                .with_trajectory(hidden, system.dim());
            let fit = upinn_fit(&system, &data, &spec, &config.train)?;
            let eval = sample_dataset(&truth, EVAL_SAMPLES.min(truth.len()))?;
            let net = fit.trajectory.as_ref().expect("UPINN fit has a trajectory");
            let (pred, _) = net.states_and_rates(eval.times())?;
            let metrics = evaluate_metrics(pred.view(), eval.states().view())?;
            (fit, metrics)
        }
    };
    let wall_seconds = started.elapsed().as_secs_f64();
    let constants = fit
        .constants
        .iter()
        .filter_map(|c| {
            let truth = c.truth?;
            Some(ConstantReport {
                name: c.name.clone(),
                truth,
                initial: c.initial,
                predicted: c.value,
                percent_error: c.percent_error()?,
            })
        })
        .collect();
    let functions = compare_functions(&system, &fit.model, data.states(), data.times());
    Ok(CaseReport {
        config: config.clone(),
        constants,
        data_loss: fit.final_loss.data,
        ode_loss: fit.final_loss.ode,
        total_loss: fit.final_loss.total,
        mse: metrics.mse,
        r2: metrics.r2,
        mape: metrics.mape,
        epochs_run: fit.epochs_run,
        wall_seconds,
        functions,
        fit: Some(fit),
    })
}

/// Samples every one-dimensional unknown on a uniform grid spanning the
/// reduced coordinate's observed range (never beyond it).
pub fn compare_functions(
    system: &StructuredSystem,
    model: &dyn UnknownTerms,
    states: &Array2<f64>,
    times: &[f64],
) -> Vec<FunctionComparison> {
    let names = system.state_name_refs();
    let mut out = Vec::new();
    for (q, term) in system.structured() {
        if term.k() != 1 || states.nrows() == 0 {
            continue;
        }
        let observed: Vec<f64> = states
            .rows()
            .into_iter()
            .zip(times)
            .map(|(x, &t)| term.reduce(&x.to_vec(), t)[0])
            .collect();
        let lo = observed.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = observed.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let y: Vec<f64> = if hi > lo {
            (0..FUNCTION_GRID)
                .map(|k| lo + (hi - lo) * k as f64 / (FUNCTION_GRID - 1) as f64)
                .collect()
        } else {
            vec![lo]
        };
        let growth_pred = |v: f64| model.growth(q, &[v]).resolve(term, &[v], 0.0);
        out.push(FunctionComparison {
            name: format!("u_{}", names[q]),
            component: q,
            truth: y.iter().map(|&v| term.u_true.eval_f64(&[v], 0.0)).collect(),
            predicted: y.iter().map(|&v| model.u(q, &[v])).collect(),
            y: y.clone(),
        });
        out.push(FunctionComparison {
            name: format!("growth_{}", names[q]),
            component: q,
            truth: y.iter().map(|&v| term.growth_true(&[v], 0.0)).collect(),
            predicted: y.iter().map(|&v| growth_pred(v)).collect(),
            y,
        });
    }
    out
}
