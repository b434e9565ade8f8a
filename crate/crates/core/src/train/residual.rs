//! ODE residuals and the UPINN loss pair.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::model::{GrowthValue, StateModel, UnknownTerms};
use crate::autodiff::Real;
use crate::error::{Error, Result};
use crate::ode::{Component, StructuredSystem, Trajectory};

/// `sdot_i - f_i(s, t)` with the unknown terms of structured components
/// supplied through `unknown(component, y)`.
pub fn residual<S, F>(system: &StructuredSystem, i: usize, s: &[S], sdot: &[S], t: S, unknown: F) -> S
where
    S: Real,
    F: FnOnce(usize, &[S]) -> (GrowthValue<S>, S),
{
    let rhs = match &system.components[i] {
        Component::Known(e) => e.eval(s, t),
        Component::Structured(term) => {
            let y = term.reduce(s, t);
            let (growth, u) = unknown(i, &y);
            let growth = growth.resolve(term, &y, t);
            term.assemble(growth, u, s, t)
        }
    };
    sdot[i] - rhs
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub total: f64,
    pub data: f64,
    pub ode: f64,
}

/// Mean squared residual of every system component over the collocation
/// times, using the state model's states and time derivatives.
pub fn ode_loss(
    system: &StructuredSystem,
    states: &dyn StateModel,
    unknowns: &dyn UnknownTerms,
    collocation: &[f64],
) -> Result<f64> {
    if collocation.is_empty() {
        return Err(Error::Config("no collocation points".into()));
    }
    let (s, sdot) = states.states_and_rates(collocation)?;
    let n = system.dim();
    let mut total = 0.0;
    for (p, &t) in collocation.iter().enumerate() {
        let sp = s.row(p).to_vec();
        let dp = sdot.row(p).to_vec();
        for i in 0..n {
            let r = residual(system, i, &sp, &dp, t, |q, y: &[f64]| {
                (unknowns.growth(q, y), unknowns.u(q, y))
            });
            total += r * r;
        }
    }
    Ok(total / (collocation.len() * n) as f64)
}

/// Mean squared misfit between predicted and observed states.
pub fn data_loss(predicted: &Array2<f64>, data: &Trajectory) -> Result<f64> {
    if predicted.dim() != data.states().dim() {
        return Err(Error::Shape(format!(
            "prediction shape {:?} vs data shape {:?}",
            predicted.dim(),
            data.states().dim()
        )));
    }
    let diff = predicted - data.states();
    Ok(diff.iter().map(|d| d * d).sum::<f64>() / diff.len() as f64)
}

/// Evaluates both UPINN loss terms without touching any optimizer state.
pub fn loss_components(
    system: &StructuredSystem,
    states: &dyn StateModel,
    unknowns: &dyn UnknownTerms,
    data: &Trajectory,
    collocation: &[f64],
    omega_de: f64,
) -> Result<LossBreakdown> {
    if collocation.is_empty() && omega_de > 0.0 {
        return Err(Error::Config(
            "an ODE loss weight needs at least one collocation point".into(),
        ));
    }
    if let Some((t0, t1)) = data.span() {
        if let Some(t) = collocation.iter().find(|&&t| t < t0 || t > t1) {
            return Err(Error::Config(format!(
                "collocation time {t} lies outside the data span [{t0}, {t1}]"
            )));
        }
    }
    let (predicted, _) = states.states_and_rates(data.times())?;
    let data_l = data_loss(&predicted, data)?;
    let ode = if collocation.is_empty() {
        0.0
    } else {
        ode_loss(system, states, unknowns, collocation)?
    };
    Ok(LossBreakdown {
        total: data_l + omega_de * ode,
        data: data_l,
        ode,
    })
}

/// `count` equally spaced times covering `span`, both ends included.
pub fn uniform_grid(span: (f64, f64), count: usize) -> Vec<f64> {
    match count {
        0 => Vec::new(),
        1 => vec![span.0],
        _ => (0..count)
            .map(|k| span.0 + (span.1 - span.0) * k as f64 / (count - 1) as f64)
            .collect(),
    }
}
