use ndarray::Array2;
use rand::RngCore;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::{GrowthModelSpec, UnknownSpec};
use crate::autodiff::{Mlp, Real};
use crate::error::{Error, Result};
use crate::ode::{Growth, StructuredSystem, StructuredTerm};

/// The growth part of a structured component as seen by the residual:
/// either a constant that multiplies the known `g(y)`, or the whole term.
#[derive(Debug, Clone, Copy)]
pub enum GrowthValue<S> {
    Scale(S),
    Term(S),
}

impl<S: Real> GrowthValue<S> {
    pub fn resolve(self, term: &StructuredTerm, y: &[S], t: S) -> S {
        match self {
            GrowthValue::Scale(beta) => {
                let g = term.g().expect("scale value for a component with known g");
                beta * g.eval(y, t)
            }
            GrowthValue::Term(v) => v,
        }
    }
}

/// Values of the unknown terms of a structured component at a reduced
/// coordinate `y`.
pub trait UnknownTerms {
    fn growth(&self, component: usize, y: &[f64]) -> GrowthValue<f64>;
    fn u(&self, component: usize, y: &[f64]) -> f64;
}

/// The ground truth of a system, for consistency checks.
pub struct TrueUnknowns<'a>(pub &'a StructuredSystem);

impl UnknownTerms for TrueUnknowns<'_> {
    fn growth(&self, component: usize, y: &[f64]) -> GrowthValue<f64> {
        let term = self.0.structured().find(|(q, _)| *q == component).unwrap().1;
        match &term.growth {
            Growth::Scaled { beta_true, .. } => GrowthValue::Scale(*beta_true),
            Growth::Unknown { g_true } => GrowthValue::Term(g_true.eval_f64(y, 0.0)),
        }
    }

    fn u(&self, component: usize, y: &[f64]) -> f64 {
        let term = self.0.structured().find(|(q, _)| *q == component).unwrap().1;
        term.u_true.eval_f64(y, 0.0)
    }
}

/// Trainable unknowns of one structured component.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentModel {
    pub component: usize,
    pub constant_name: Option<String>,
    pub constant_initial: Option<f64>,
    pub constant: Option<f64>,
    pub growth_net: Option<Mlp>,
    pub u_net: Mlp,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnknownModel {
    pub components: Vec<ComponentModel>,
}

impl UnknownModel {
    /// Initializes every network from its own seed drawn from a stream
    /// keyed by `seed`.
    pub fn init(system: &StructuredSystem, spec: &UnknownSpec, rng: &mut ChaCha8Rng) -> Result<Self> {
        spec.validate(system)?;
        let mut components = Vec::with_capacity(spec.components.len());
        for c in &spec.components {
            let term = system.structured().find(|(q, _)| *q == c.component).unwrap().1;
            let (constant, growth_net) = match &c.growth {
                GrowthModelSpec::Constant { initial } => (Some(*initial), None),
                GrowthModelSpec::Network { layer_sizes } => {
                    (None, Some(Mlp::new(layer_sizes, rng.next_u64())?))
                }
            };
            components.push(ComponentModel {
                component: c.component,
                constant_name: constant.map(|_| term.constant_name.clone()),
                constant_initial: constant,
                constant,
                growth_net,
                u_net: Mlp::new(&c.u_layer_sizes, rng.next_u64())?,
            });
        }
        Ok(Self { components })
    }

    pub fn get(&self, component: usize) -> Option<&ComponentModel> {
        self.components.iter().find(|c| c.component == component)
    }

    pub fn constants(&self) -> Vec<f64> {
        self.components.iter().filter_map(|c| c.constant).collect()
    }
}

impl UnknownTerms for UnknownModel {
    fn growth(&self, component: usize, y: &[f64]) -> GrowthValue<f64> {
        let c = self.get(component).expect("component model");
        match (&c.growth_net, c.constant) {
            (Some(net), _) => GrowthValue::Term(net.forward(y).expect("width checked")[0]),
            (None, Some(beta)) => GrowthValue::Scale(beta),
            (None, None) => unreachable!("component without growth model"),
        }
    }

    fn u(&self, component: usize, y: &[f64]) -> f64 {
        let c = self.get(component).expect("component model");
        c.u_net.forward(y).expect("width checked")[0]
    }
}

/// Anything that provides states and their time derivatives at given times.
pub trait StateModel {
    fn states_and_rates(&self, times: &[f64]) -> Result<(Array2<f64>, Array2<f64>)>;
}

/// Network approximating the trajectory. Time is mapped affinely onto
/// [-1, 1] over the training span before entering the network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryNet {
    pub net: Mlp,
    pub t_center: f64,
    pub t_half_width: f64,
}

impl TrajectoryNet {
    pub fn new(layer_sizes: &[usize], span: (f64, f64), seed: u64) -> Result<Self> {
        if layer_sizes.first() != Some(&1) {
            return Err(Error::Config(format!(
                "trajectory network must take time as its only input, got {layer_sizes:?}"
            )));
        }
        let half = 0.5 * (span.1 - span.0);
        if !(half > 0.0) {
            return Err(Error::Config(format!("degenerate training span {span:?}")));
        }
        Ok(Self {
            net: Mlp::new(layer_sizes, seed)?,
            t_center: 0.5 * (span.0 + span.1),
            t_half_width: half,
        })
    }

    pub fn scaled_times(&self, times: &[f64]) -> Array2<f64> {
        Array2::from_shape_fn((times.len(), 1), |(r, _)| (times[r] - self.t_center) / self.t_half_width)
    }

    /// Tangent column giving d/dt (rather than d/d(scaled time)).
    pub fn time_tangent(&self, batch: usize) -> Array2<f64> {
        Array2::from_elem((batch, 1), 1.0 / self.t_half_width)
    }

    pub fn states(&self, times: &[f64]) -> Result<Array2<f64>> {
        let trace = self.net.forward_batch(self.scaled_times(times).view(), None)?;
        Ok(trace.output().clone())
    }
}

impl StateModel for TrajectoryNet {
    fn states_and_rates(&self, times: &[f64]) -> Result<(Array2<f64>, Array2<f64>)> {
        let trace = self.net.forward_batch(
            self.scaled_times(times).view(),
            Some(self.time_tangent(times.len()).view()),
        )?;
        Ok((
            trace.output().clone(),
            trace.output_tangent().expect("tangent requested").clone(),
        ))
    }
}
