use std::path::Path;

use serde::{Deserialize, Serialize};
use uniqode::error::{Error, Result};
use uniqode::experiments::CaseOverrides;
use uniqode::identify::{FormulaVariant, Thresholds};
use uniqode::ode::{
    builtin_system, with_u_true, BuiltinCase, Component, Expr, Growth, StructuredSystem, StructuredTerm,
};
use uniqode::train::{TrainConfig, DIRECT_HIDDEN};

/// The JSON document every command reads. Unknown keys are rejected.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub system: Option<SystemConfig>,
    pub data: DataConfig,
    pub unknowns: UnknownsConfig,
    pub train: TrainConfig,
    pub identify: IdentifyConfig,
    /// Overrides applied to `reproduce` and the sweeps.
    pub experiment: CaseOverrides,
    pub sweep: SweepConfig,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SystemConfig {
    Builtin(BuiltinCase),
    Modified(ModifiedBuiltin),
    Inline(InlineSystem),
}

/// A builtin system with a different ground-truth `u`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModifiedBuiltin {
    pub builtin: BuiltinCase,
    pub u_true: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InlineSystem {
    #[serde(default = "inline_name")]
    pub name: String,
    pub states: Vec<String>,
    pub x0: Vec<f64>,
    #[serde(default = "default_span")]
    pub t_span: (f64, f64),
    pub components: Vec<InlineComponent>,
}

fn inline_name() -> String {
    "inline".into()
}

fn default_span() -> (f64, f64) {
    uniqode::ode::DEFAULT_T_SPAN
}

/// Known right-hand sides are written in the state names and `t`; `g`,
/// `u_true` and `growth_true` are written in the reduced coordinates,
/// named `y` (one coordinate) or `y1, y2, ...`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum InlineComponent {
    Known(String),
    Structured(InlineTerm),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InlineTerm {
    #[serde(default = "beta_name")]
    pub constant_name: String,
    pub g: Option<String>,
    pub beta_true: Option<f64>,
    pub growth_true: Option<String>,
    pub c: String,
    #[serde(default = "zero")]
    pub d: String,
    pub h1: Vec<String>,
    pub u_true: String,
}

fn beta_name() -> String {
    "beta".into()
}

fn zero() -> String {
    "0".into()
}

impl SystemConfig {
    pub fn build(&self) -> Result<StructuredSystem> {
        match self {
            SystemConfig::Builtin(case) => Ok(builtin_system(*case)),
            SystemConfig::Modified(m) => {
                let sys = builtin_system(m.builtin);
                match &m.u_true {
                    Some(u) => {
                        let q = sys.structured().next().map_or(0, |(q, _)| q);
                        with_u_true(sys, q, u)
                    }
                    None => Ok(sys),
                }
            }
            SystemConfig::Inline(s) => s.build(),
        }
    }
}

impl InlineSystem {
    fn build(&self) -> Result<StructuredSystem> {
        let names: Vec<&str> = self.states.iter().map(String::as_str).collect();
        let mut components = Vec::with_capacity(self.components.len());
        for (q, c) in self.components.iter().enumerate() {
            let at = |what: &str, e: Error| Error::Config(format!("system component {q}, {what}: {e}"));
            components.push(match c {
                InlineComponent::Known(src) => {
                    Component::Known(Expr::parse(src, &names, &[]).map_err(|e| at("rhs", e))?)
                }
                InlineComponent::Structured(t) => {
                    let k = t.h1.len();
                    let reduced: Vec<String> = if k == 1 {
                        vec!["y".into()]
                    } else {
                        (1..=k).map(|i| format!("y{i}")).collect()
                    };
                    let reduced: Vec<&str> = reduced.iter().map(String::as_str).collect();
                    let growth = match (&t.g, t.beta_true, &t.growth_true) {
                        (Some(g), Some(beta_true), None) => Growth::Scaled {
                            g: Expr::parse(g, &reduced, &[]).map_err(|e| at("g", e))?,
                            beta_true,
                        },
                        (None, None, Some(src)) => Growth::Unknown {
                            g_true: Expr::parse(src, &reduced, &[]).map_err(|e| at("growth_true", e))?,
                        },
                        _ => {
                            return Err(Error::Config(format!(
                                "system component {q}: give either g with beta_true, or growth_true"
                            )))
                        }
                    };
                    let h1 = t
                        .h1
                        .iter()
                        .map(|h| Expr::parse(h, &names, &[]).map_err(|e| at("h1", e)))
                        .collect::<Result<_>>()?;
                    Component::Structured(StructuredTerm {
                        growth,
                        constant_name: t.constant_name.clone(),
                        c: Expr::parse(&t.c, &names, &[]).map_err(|e| at("c", e))?,
                        d: Expr::parse(&t.d, &names, &[]).map_err(|e| at("d", e))?,
                        h1,
                        u_true: Expr::parse(&t.u_true, &reduced, &[]).map_err(|e| at("u_true", e))?,
                    })
                }
            });
        }
        StructuredSystem::new(
            self.name.clone(),
            self.states.clone(),
            components,
            self.x0.clone(),
            self.t_span,
        )
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataConfig {
    /// Integration span; defaults to the system's.
    pub span: Option<(f64, f64)>,
    pub dt: f64,
    /// Subsample to this many equally spaced points.
    pub samples: Option<usize>,
    pub noise: Option<NoiseConfig>,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            span: None,
            dt: 1e-3,
            samples: None,
            noise: None,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseConfig {
    pub fraction: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct UnknownsConfig {
    /// One guess per known-`g` component, in component order.
    pub initial_constants: Vec<f64>,
    /// Hidden widths of the unknown-function networks.
    pub hidden: Vec<usize>,
    /// Hidden widths of the trajectory network (UPINN).
    pub trajectory_hidden: Vec<usize>,
}

impl Default for UnknownsConfig {
    fn default() -> Self {
        Self {
            initial_constants: Vec::new(),
            hidden: DIRECT_HIDDEN.to_vec(),
            trajectory_hidden: DIRECT_HIDDEN.to_vec(),
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IdentifyConfig {
    /// Structured component to analyze; defaults to the first.
    pub component: Option<usize>,
    /// Pair-search tolerance on `‖y_i - y_j‖∞`; defaults to the exact-match
    /// threshold, or to `d` when radii are requested.
    pub d_tol: Option<f64>,
    /// Distance bound used by the radii; defaults to `d_tol`.
    pub d: Option<f64>,
    /// Lipschitz constant of `u` (known `g`).
    pub lipschitz: Option<f64>,
    /// Lipschitz constants of the growth term and of `u` (unknown `g`).
    pub lipschitz_g: Option<f64>,
    pub lipschitz_u: Option<f64>,
    pub formula_variant: Option<FormulaVariant>,
    pub thresholds: Thresholds,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepConfig {
    pub seeds: Option<Vec<u64>>,
    pub levels: Option<Vec<f64>>,
    pub lengths: Option<Vec<usize>>,
    /// Worker threads; defaults to the available parallelism.
    pub threads: Option<usize>,
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    /// Replaces every single-run seed in the document. Sweep seed lists
    /// enumerate replicates and are left alone.
    pub fn override_seed(&mut self, seed: u64) {
        self.train.seed = seed;
        if let Some(n) = &mut self.data.noise {
            n.seed = seed;
        }
        self.experiment.seed = Some(seed);
    }

    pub fn system(&self) -> Result<StructuredSystem> {
        self.system
            .as_ref()
            .ok_or_else(|| Error::Config("config has no 'system' section".into()))?
            .build()
    }
}
