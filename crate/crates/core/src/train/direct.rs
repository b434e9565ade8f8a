//! Fitting the unknowns against known state derivatives.
//!
//! Every structured component contributes the residual
//! `xdot_q - [beta*g(y) + C(x)*u(y) + d(x, t)]` (or with a learned growth
//! term in place of `beta*g(y)`); the loss is the mean square over samples
//! and components. The residual is linear in the unknown values, so the
//! partials are formed directly.

use ndarray::{Array2, ArrayView2};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::{TrainConfig, UnknownSpec};
use super::metrics::{evaluate_metrics, Metrics};
use super::model::{ComponentModel, GrowthValue, UnknownModel, UnknownTerms};
use super::residual::LossBreakdown;
use super::result::{constant_estimates, FitMode, FitResult, LossRecord, Plateau};
use crate::autodiff::{adam_step, AdamState};
use crate::error::{Error, Result};
use crate::ode::{StructuredSystem, Trajectory};

/// Per-sample quantities of one structured component that do not depend on
/// the trainable unknowns.
struct ComponentData {
    y: Array2<f64>,
    /// Known `g(y)`, absent for the unknown-growth form.
    g: Option<Vec<f64>>,
    c: Vec<f64>,
    d: Vec<f64>,
    target: Vec<f64>,
}

fn precompute(system: &StructuredSystem, model: &UnknownModel, data: &Trajectory) -> Result<Vec<ComponentData>> {
    let derivs = data.require_derivatives()?;
    let m = data.len();
    model
        .components
        .iter()
        .map(|cm| {
            let term = system.structured().find(|(q, _)| *q == cm.component).unwrap().1;
            let k = term.k();
            let mut y = Array2::zeros((m, k));
            let mut g = term.g().map(|_| Vec::with_capacity(m));
            let mut c = Vec::with_capacity(m);
            let mut d = Vec::with_capacity(m);
            let mut target = Vec::with_capacity(m);
            for (p, &t) in data.times().iter().enumerate() {
                let x = data.state(p).to_vec();
                let yp = term.reduce(&x, t);
                if let (Some(gv), Some(gexpr)) = (g.as_mut(), term.g()) {
                    gv.push(gexpr.eval_f64(&yp, t));
                }
                for (j, v) in yp.iter().enumerate() {
                    y[[p, j]] = *v;
                }
                c.push(term.c.eval_f64(&x, t));
                d.push(term.d.eval_f64(&x, t));
                target.push(derivs[[p, cm.component]]);
            }
            Ok(ComponentData { y, g, c, d, target })
        })
        .collect()
}

/// Gradients of one loss evaluation, laid out like the model.
struct DirectGrads {
    constants: Vec<Option<f64>>,
    growth: Vec<Option<Vec<f64>>>,
    u: Vec<Vec<f64>>,
}

/// Loss over `rows`, and optionally its gradient.
fn evaluate(
    model: &UnknownModel,
    pre: &[ComponentData],
    rows: &[usize],
    want_grads: bool,
) -> Result<(f64, Option<DirectGrads>)> {
    let denom = (rows.len() * pre.len()) as f64;
    let mut loss = 0.0;
    let mut grads = DirectGrads {
        constants: Vec::new(),
        growth: Vec::new(),
        u: Vec::new(),
    };
    for (cm, cd) in model.components.iter().zip(pre) {
        let y = cd.y.select(ndarray::Axis(0), rows);
        let u_trace = cm.u_net.forward_batch(y.view(), None)?;
        let u = u_trace.output().column(0).to_owned();
        let growth_trace = match &cm.growth_net {
            Some(net) => Some(net.forward_batch(y.view(), None)?),
            None => None,
        };
        let mut residual = Vec::with_capacity(rows.len());
        for (b, &p) in rows.iter().enumerate() {
            let growth = match (&growth_trace, cm.constant, &cd.g) {
                (Some(tr), _, _) => tr.output()[[b, 0]],
                (None, Some(beta), Some(g)) => beta * g[p],
                _ => unreachable!("validated component model"),
            };
            let r = cd.target[p] - (growth + cd.c[p] * u[b] + cd.d[p]);
            loss += r * r;
            residual.push(r);
        }
        if !want_grads {
            continue;
        }
        let gu = Array2::from_shape_fn((rows.len(), 1), |(b, _)| {
            -2.0 * residual[b] * cd.c[rows[b]] / denom
        });
        let (u_grad, _) = cm.u_net.backward_batch(&u_trace, gu.view(), None)?;
        grads.u.push(u_grad);
        match (&growth_trace, &cd.g) {
            (Some(tr), _) => {
                let gpsi = Array2::from_shape_fn((rows.len(), 1), |(b, _)| -2.0 * residual[b] / denom);
                let net = cm.growth_net.as_ref().unwrap();
                let (psi_grad, _) = net.backward_batch(tr, gpsi.view(), None)?;
                grads.growth.push(Some(psi_grad));
                grads.constants.push(None);
            }
            (None, Some(g)) => {
                let gb: f64 = rows
                    .iter()
                    .zip(&residual)
                    .map(|(&p, r)| -2.0 * r * g[p] / denom)
                    .sum();
                grads.constants.push(Some(gb));
                grads.growth.push(None);
            }
            _ => unreachable!(),
        }
    }
    Ok((loss / denom, want_grads.then_some(grads)))
}

struct Optimizers {
    constants: Vec<Option<AdamState>>,
    growth: Vec<Option<AdamState>>,
    u: Vec<AdamState>,
}

impl Optimizers {
    fn new(model: &UnknownModel) -> Self {
        Self {
            constants: model
                .components
                .iter()
                .map(|c| c.constant.map(|_| AdamState::new(1)))
                .collect(),
            growth: model
                .components
                .iter()
                .map(|c| c.growth_net.as_ref().map(|n| AdamState::new(n.param_count())))
                .collect(),
            u: model
                .components
                .iter()
                .map(|c| AdamState::new(c.u_net.param_count()))
                .collect(),
        }
    }
}

pub(crate) fn step_component(
    cm: &mut ComponentModel,
    constant_grad: Option<f64>,
    growth_grad: Option<&[f64]>,
    u_grad: &[f64],
    constant_state: Option<&mut AdamState>,
    growth_state: Option<&mut AdamState>,
    u_state: &mut AdamState,
    lr: f64,
) -> Result<()> {
    if let (Some(value), Some(g), Some(state)) = (cm.constant.as_mut(), constant_grad, constant_state) {
        let mut p = [*value];
        adam_step(&mut p, &[g], state, lr)?;
        *value = p[0];
    }
    if let (Some(net), Some(g), Some(state)) = (cm.growth_net.as_mut(), growth_grad, growth_state) {
        adam_step(net.params_mut(), g, state, lr)?;
    }
    adam_step(cm.u_net.params_mut(), u_grad, u_state, lr)
}

/// Predicted derivatives of the structured components, `(samples,
/// components)`, next to the observed ones.
pub fn direct_predictions(
    system: &StructuredSystem,
    unknowns: &dyn UnknownTerms,
    data: &Trajectory,
) -> Result<(Array2<f64>, Array2<f64>)> {
    let derivs = data.require_derivatives()?;
    let structured: Vec<_> = system.structured().collect();
    let m = data.len();
    let mut pred = Array2::zeros((m, structured.len()));
    let mut obs = Array2::zeros((m, structured.len()));
    for (p, &t) in data.times().iter().enumerate() {
        let x = data.state(p).to_vec();
        for (j, (q, term)) in structured.iter().enumerate() {
            let y = term.reduce(&x, t);
            let growth = match unknowns.growth(*q, &y) {
                GrowthValue::Scale(beta) => beta * term.g().unwrap().eval_f64(&y, t),
                GrowthValue::Term(v) => v,
            };
            pred[[p, j]] = term.assemble(growth, unknowns.u(*q, &y), &x, t);
            obs[[p, j]] = derivs[[p, *q]];
        }
    }
    Ok((pred, obs))
}

/// Mean squared structured residual for arbitrary unknown values (e.g. the
/// ground truth).
pub fn direct_loss(system: &StructuredSystem, unknowns: &dyn UnknownTerms, data: &Trajectory) -> Result<f64> {
    let (pred, obs) = direct_predictions(system, unknowns, data)?;
    let diff = &pred - &obs;
    Ok(diff.iter().map(|d| d * d).sum::<f64>() / diff.len().max(1) as f64)
}

pub fn direct_fit(
    system: &StructuredSystem,
    data: &Trajectory,
    spec: &UnknownSpec,
    cfg: &TrainConfig,
) -> Result<FitResult> {
    cfg.validate()?;
    data.require_derivatives()?;
    if data.is_empty() {
        return Err(Error::Data("empty dataset".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut model = UnknownModel::init(system, spec, &mut rng)?;
    let pre = precompute(system, &model, data)?;
    let mut opt = Optimizers::new(&model);
    let m = data.len();
    let batch = cfg.batch_size.unwrap_or(m).min(m);
    let mut order: Vec<usize> = (0..m).collect();
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut plateau = Plateau::default();

    for epoch in 0..cfg.epochs {
        if batch < m {
            order.shuffle(&mut rng);
        }
        let mut epoch_loss = 0.0;
        for rows in order.chunks(batch) {
            let (loss, grads) = evaluate(&model, &pre, rows, true)?;
            if !loss.is_finite() {
                return Err(Error::Divergence { epoch, loss });
            }
            epoch_loss += loss * rows.len() as f64;
            let grads = grads.unwrap();
            for (i, cm) in model.components.iter_mut().enumerate() {
                step_component(
                    cm,
                    grads.constants[i],
                    grads.growth[i].as_deref(),
                    &grads.u[i],
                    opt.constants[i].as_mut(),
                    opt.growth[i].as_mut(),
                    &mut opt.u[i],
                    cfg.learning_rate,
                )?;
            }
        }
        let loss = epoch_loss / m as f64;
        history.push(LossRecord {
            epoch,
            total: loss,
            data: 0.0,
            ode: loss,
        });
        if let Some(es) = cfg.early_stop {
            if plateau.observe(loss, es.window, es.min_relative_improvement) {
                break;
            }
        }
    }

    let all: Vec<usize> = (0..m).collect();
    let (final_loss, _) = evaluate(&model, &pre, &all, false)?;
    let (pred, obs) = direct_predictions(system, &model, data)?;
    let metrics: Metrics = evaluate_metrics(pred.view(), ArrayView2::from(&obs))?;
    Ok(FitResult {
        mode: FitMode::Direct,
        system: system.name.clone(),
        constants: constant_estimates(system, &model),
        final_loss: LossBreakdown {
            total: final_loss,
            data: 0.0,
            ode: final_loss,
        },
        metrics,
        epochs_run: history.len(),
        config: cfg.clone(),
        model,
        trajectory: None,
        history,
    })
}
