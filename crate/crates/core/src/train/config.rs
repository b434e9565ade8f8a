use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ode::{GrowthForm, StructuredSystem};

/// Stops training once the best total loss has improved by less than
/// `min_relative_improvement` over the last `window` epochs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EarlyStop {
    pub window: usize,
    pub min_relative_improvement: f64,
}

impl Default for EarlyStop {
    fn default() -> Self {
        Self {
            window: 500,
            min_relative_improvement: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    /// Weight of the ODE-residual loss in UPINN training.
    pub omega_de: f64,
    pub collocation_count: usize,
    pub seed: u64,
    /// Minibatch size for direct fitting; `None` means full batch. One
    /// epoch is one pass over the data either way.
    pub batch_size: Option<usize>,
    pub early_stop: Option<EarlyStop>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            epochs: 1000,
            omega_de: 0.1,
            collocation_count: 1024,
            seed: 0,
            batch_size: None,
            early_stop: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::Config(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if !(self.omega_de >= 0.0) || !self.omega_de.is_finite() {
            return Err(Error::Config(format!(
                "omega_de must be non-negative, got {}",
                self.omega_de
            )));
        }
        if self.batch_size == Some(0) {
            return Err(Error::Config("batch size must be positive".into()));
        }
        if let Some(es) = self.early_stop {
            if es.window == 0 || !(es.min_relative_improvement >= 0.0) {
                return Err(Error::Config(format!("invalid early stop {es:?}")));
            }
        }
        Ok(())
    }
}

/// How the growth part of a structured component is learned.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum GrowthModelSpec {
    /// Trainable constant multiplying the known `g`.
    Constant { initial: f64 },
    /// Network for the whole unknown growth term.
    Network { layer_sizes: Vec<usize> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComponentSpec {
    /// Index of the structured component in the system.
    pub component: usize,
    pub growth: GrowthModelSpec,
    pub u_layer_sizes: Vec<usize>,
}

/// What is unknown and how it is represented.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UnknownSpec {
    pub components: Vec<ComponentSpec>,
    /// Network mapping time to the full state (UPINN only).
    #[serde(default)]
    pub trajectory_layer_sizes: Option<Vec<usize>>,
}

pub const DIRECT_HIDDEN: [usize; 4] = [20, 20, 20, 20];

fn layers(input: usize, hidden: &[usize], output: usize) -> Vec<usize> {
    let mut v = vec![input];
    v.extend_from_slice(hidden);
    v.push(output);
    v
}

impl UnknownSpec {
    /// One network per unknown function with the given hidden widths; scaled
    /// components get a constant with the supplied initial guesses (in
    /// structured-component order).
    pub fn for_system(
        system: &StructuredSystem,
        initial_constants: &[f64],
        hidden: &[usize],
    ) -> Result<Self> {
        let mut guesses = initial_constants.iter();
        let mut components = Vec::new();
        for (q, term) in system.structured() {
            let k = term.k();
            let growth = match term.form() {
                GrowthForm::Scaled => GrowthModelSpec::Constant {
                    initial: *guesses.next().ok_or_else(|| {
                        Error::Config(format!(
                            "missing initial guess for '{}' of component {q}",
                            term.constant_name
                        ))
                    })?,
                },
                GrowthForm::Unknown => GrowthModelSpec::Network {
                    layer_sizes: layers(k, hidden, 1),
                },
            };
            components.push(ComponentSpec {
                component: q,
                growth,
                u_layer_sizes: layers(k, hidden, 1),
            });
        }
        if guesses.next().is_some() {
            return Err(Error::Config("more initial guesses than unknown constants".into()));
        }
        Ok(Self {
            components,
            trajectory_layer_sizes: None,
        })
    }

    pub fn with_trajectory(mut self, hidden: &[usize], n: usize) -> Self {
        self.trajectory_layer_sizes = Some(layers(1, hidden, n));
        self
    }

    pub fn with_u_hidden(mut self, hidden: &[usize]) -> Self {
        for c in &mut self.components {
            let k = c.u_layer_sizes[0];
            c.u_layer_sizes = layers(k, hidden, 1);
        }
        self
    }

    /// Checks the spec against the system: one entry per structured
    /// component, constant for the scaled form, network for the unknown form,
    /// and network input widths equal to `H1`'s output width.
    pub fn validate(&self, system: &StructuredSystem) -> Result<()> {
        let structured: Vec<_> = system.structured().collect();
        if structured.len() != self.components.len() {
            return Err(Error::Config(format!(
                "system has {} structured components, unknown spec lists {}",
                structured.len(),
                self.components.len()
            )));
        }
        for spec in &self.components {
            let (_, term) = structured
                .iter()
                .find(|(q, _)| *q == spec.component)
                .ok_or_else(|| {
                    Error::Config(format!("component {} is not structured", spec.component))
                })?;
            let k = term.k();
            let check_width = |sizes: &[usize], what: &str| -> Result<()> {
                if sizes.first() != Some(&k) || sizes.last() != Some(&1) {
                    return Err(Error::Config(format!(
                        "{what} network for component {} must map {k} inputs to 1 output, got {sizes:?}",
                        spec.component
                    )));
                }
                Ok(())
            };
            check_width(&spec.u_layer_sizes, "u")?;
            match (&spec.growth, term.form()) {
                (GrowthModelSpec::Constant { .. }, GrowthForm::Scaled) => {}
                (GrowthModelSpec::Network { layer_sizes }, GrowthForm::Unknown) => {
                    check_width(layer_sizes, "growth")?
                }
                (GrowthModelSpec::Constant { .. }, GrowthForm::Unknown) => {
                    return Err(Error::Config(format!(
                        "component {} has an unknown growth term; it needs a growth network",
                        spec.component
                    )))
                }
                (GrowthModelSpec::Network { .. }, GrowthForm::Scaled) => {
                    return Err(Error::Config(format!(
                        "component {} has a known g; it needs a trainable constant",
                        spec.component
                    )))
                }
            }
        }
        if let Some(sizes) = &self.trajectory_layer_sizes {
            if sizes.first() != Some(&1) || sizes.last() != Some(&system.dim()) {
                return Err(Error::Config(format!(
                    "trajectory network must map time to {} states, got {sizes:?}",
                    system.dim()
                )));
            }
        }
        Ok(())
    }
}
