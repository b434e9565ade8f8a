//! UPINN fitting: a trajectory network fitted to state samples, tied to the
//! system through the ODE residual at collocation times.
//!
//! Networks run batched; the per-point residual head (which mixes the
//! known dynamics with the unknown values) uses symbolically derived
//! partials. The dependence of the unknowns on the state through `H1` is
//! chained back in a second step, after the unknown networks' input
//! gradients are known.

use ndarray::{Array2, Axis};
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::{TrainConfig, UnknownSpec};
use super::metrics::evaluate_metrics;
use super::model::{TrajectoryNet, UnknownModel};
use super::plan::{PointGrads, ResidualPlan};
use super::residual::{data_loss, uniform_grid, LossBreakdown};
use super::result::{constant_estimates, FitMode, FitResult, LossRecord, Plateau};
use crate::autodiff::{adam_step, AdamState, BatchTrace};
use crate::error::{Error, Result};
use crate::ode::{StructuredSystem, StructuredTerm, Trajectory};

/// Gradient of one loss evaluation for every trainable block.
struct Grads {
    traj: Vec<f64>,
    constants: Vec<f64>,
    growth: Vec<Option<Vec<f64>>>,
    u: Vec<Vec<f64>>,
}

struct Evaluation {
    loss: LossBreakdown,
    grads: Option<Grads>,
}

/// Unknown-network traces of one structured component at the collocation
/// states.
struct UnknownTrace {
    u: BatchTrace,
    growth: Option<BatchTrace>,
}

struct Upinn<'a> {
    system: &'a StructuredSystem,
    terms: Vec<(usize, &'a StructuredTerm)>,
    data: &'a Trajectory,
    data_inputs: Array2<f64>,
    collocation: Vec<f64>,
    colloc_inputs: Array2<f64>,
    colloc_tangent: Array2<f64>,
    omega: f64,
    plan: ResidualPlan,
}

impl<'a> Upinn<'a> {
    fn new(
        system: &'a StructuredSystem,
        data: &'a Trajectory,
        traj: &TrajectoryNet,
        collocation: Vec<f64>,
        omega: f64,
    ) -> Self {
        let terms: Vec<_> = system.structured().collect();
        Upinn {
            system,
            plan: ResidualPlan::new(system, &terms),
            terms,
            data,
            data_inputs: traj.scaled_times(data.times()),
            colloc_inputs: traj.scaled_times(&collocation),
            colloc_tangent: traj.time_tangent(collocation.len()),
            collocation,
            omega,
        }
    }

    fn evaluate(&self, traj: &TrajectoryNet, model: &UnknownModel, want_grads: bool) -> Result<Evaluation> {
        let n = self.system.dim();
        let m = self.data.len();

        let trace_d = traj.net.forward_batch(self.data_inputs.view(), None)?;
        let data_l = data_loss(trace_d.output(), self.data)?;
        let mut grads = want_grads.then(|| Grads {
            traj: vec![0.0; traj.net.param_count()],
            constants: vec![0.0; model.components.len()],
            growth: Vec::new(),
            u: Vec::new(),
        });
        if let Some(g) = grads.as_mut() {
            let scale = 2.0 / (m * n) as f64;
            let gd = (trace_d.output() - self.data.states()) * scale;
            let (gt, _) = traj.net.backward_batch(&trace_d, gd.view(), None)?;
            g.traj = gt;
        }

        if self.collocation.is_empty() {
            return Ok(Evaluation {
                loss: LossBreakdown {
                    total: data_l,
                    data: data_l,
                    ode: 0.0,
                },
                grads,
            });
        }

        let bc = self.collocation.len();
        let trace_c = traj
            .net
            .forward_batch(self.colloc_inputs.view(), Some(self.colloc_tangent.view()))?;
        let s = trace_c.output();
        let sdot = trace_c.output_tangent().expect("tangent requested");

        // Unknown networks on the reduced coordinates of the fitted states.
        let nt = self.terms.len();
        let mut traces = Vec::with_capacity(nt);
        for (j, cm) in model.components.iter().enumerate() {
            let y = self.plan.reduce_batch(j, s, &self.collocation);
            traces.push(UnknownTrace {
                u: cm.u_net.forward_batch(y.view(), None)?,
                growth: match &cm.growth_net {
                    Some(net) => Some(net.forward_batch(y.view(), None)?),
                    None => None,
                },
            });
        }

        let backprop = want_grads && self.omega > 0.0;
        let seed_scale = 2.0 * self.omega / (bc * n) as f64;
        let mut gs = Array2::<f64>::zeros((bc, n));
        let mut gsdot = Array2::<f64>::zeros((bc, n));
        // (point, term) layouts so each point's slots are contiguous.
        let mut gu = Array2::<f64>::zeros((bc, nt));
        let mut ggrowth = Array2::<f64>::zeros((bc, nt));
        let mut u_p = vec![0.0; nt];
        let mut growth_p = vec![0.0; nt];
        let mut y_scratch = Vec::new();
        let (mut sp, mut dp) = (vec![0.0; n], vec![0.0; n]);
        let mut ode_sum = 0.0;
        for (p, &t) in self.collocation.iter().enumerate() {
            for (j, (tr, cm)) in traces.iter().zip(&model.components).enumerate() {
                u_p[j] = tr.u.output()[[p, 0]];
                growth_p[j] = match (&tr.growth, cm.constant) {
                    (Some(g), _) => g.output()[[p, 0]],
                    (None, Some(beta)) => beta,
                    _ => unreachable!("validated component model"),
                };
            }
            for k in 0..n {
                sp[k] = s[[p, k]];
                dp[k] = sdot[[p, k]];
            }
            let grads = backprop.then(|| PointGrads {
                s: gs.row_mut(p).into_slice().expect("row-major"),
                sdot: gsdot.row_mut(p).into_slice().expect("row-major"),
                u: gu.row_mut(p).into_slice().expect("row-major"),
                growth: ggrowth.row_mut(p).into_slice().expect("row-major"),
            });
            ode_sum += self
                .plan
                .point(&sp, &dp, t, &u_p, &growth_p, seed_scale, &mut y_scratch, grads);
        }
        let ode_l = ode_sum / (bc * n) as f64;

        if let (true, Some(g)) = (backprop, grads.as_mut()) {
            for (j, cm) in model.components.iter().enumerate() {
                let gu_j = gu.column(j).to_owned().insert_axis(Axis(1));
                let (u_grad, mut gy) = cm.u_net.backward_batch(&traces[j].u, gu_j.view(), None)?;
                g.u.push(u_grad);
                match (&cm.growth_net, &traces[j].growth) {
                    (Some(net), Some(tr)) => {
                        let gg_j = ggrowth.column(j).to_owned().insert_axis(Axis(1));
                        let (psi_grad, gy_psi) = net.backward_batch(tr, gg_j.view(), None)?;
                        gy += &gy_psi;
                        g.growth.push(Some(psi_grad));
                    }
                    _ => {
                        g.constants[j] = ggrowth.column(j).sum();
                        g.growth.push(None);
                    }
                }
                for (p, &t) in self.collocation.iter().enumerate() {
                    for k in 0..n {
                        sp[k] = s[[p, k]];
                    }
                    let gy_p = gy.row(p).to_vec();
                    self.plan
                        .chain_h1(j, &sp, t, &gy_p, gs.row_mut(p).into_slice().expect("row-major"));
                }
            }
            let (gt, _) = traj
                .net
                .backward_batch(&trace_c, gs.view(), Some(gsdot.view()))?;
            for (a, b) in g.traj.iter_mut().zip(gt) {
                *a += b;
            }
        } else if let Some(g) = grads.as_mut() {
            for cm in &model.components {
                g.u.push(vec![0.0; cm.u_net.param_count()]);
                g.growth
                    .push(cm.growth_net.as_ref().map(|net| vec![0.0; net.param_count()]));
            }
        }

        Ok(Evaluation {
            loss: LossBreakdown {
                total: data_l + self.omega * ode_l,
                data: data_l,
                ode: ode_l,
            },
            grads,
        })
    }
}


/// Fits the unknowns of `system` to state samples without derivative data.
pub fn upinn_fit(
    system: &StructuredSystem,
    data: &Trajectory,
    spec: &UnknownSpec,
    cfg: &TrainConfig,
) -> Result<FitResult> {
    cfg.validate()?;
    let span = data
        .span()
        .ok_or_else(|| Error::Data("empty dataset".into()))?;
    if data.dim() != system.dim() {
        return Err(Error::Shape(format!(
            "data has {} state columns, system has {}",
            data.dim(),
            system.dim()
        )));
    }
    if cfg.omega_de > 0.0 && cfg.collocation_count == 0 {
        return Err(Error::Config(
            "an ODE loss weight needs at least one collocation point".into(),
        ));
    }
    let traj_sizes = spec
        .trajectory_layer_sizes
        .as_ref()
        .ok_or_else(|| Error::Config("UPINN fitting needs a trajectory network shape".into()))?;

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut model = UnknownModel::init(system, spec, &mut rng)?;
    let mut traj = TrajectoryNet::new(traj_sizes, span, rng.next_u64())?;

    let ctx = Upinn::new(system, data, &traj, uniform_grid(span, cfg.collocation_count), cfg.omega_de);

    let mut traj_state = AdamState::new(traj.net.param_count());
    let mut const_states: Vec<AdamState> = model.components.iter().map(|_| AdamState::new(1)).collect();
    let mut growth_states: Vec<Option<AdamState>> = model
        .components
        .iter()
        .map(|c| c.growth_net.as_ref().map(|n| AdamState::new(n.param_count())))
        .collect();
    let mut u_states: Vec<AdamState> = model
        .components
        .iter()
        .map(|c| AdamState::new(c.u_net.param_count()))
        .collect();

    let mut history = Vec::with_capacity(cfg.epochs.min(100_000));
    let mut plateau = Plateau::default();
    for epoch in 0..cfg.epochs {
        let eval = ctx.evaluate(&traj, &model, true)?;
        let loss = eval.loss;
        if !loss.total.is_finite() {
            return Err(Error::Divergence {
                epoch,
                loss: loss.total,
            });
        }
        history.push(LossRecord {
            epoch,
            total: loss.total,
            data: loss.data,
            ode: loss.ode,
        });
        let g = eval.grads.expect("gradients requested");
        adam_step(traj.net.params_mut(), &g.traj, &mut traj_state, cfg.learning_rate)?;
        for (j, cm) in model.components.iter_mut().enumerate() {
            if let Some(beta) = cm.constant.as_mut() {
                let mut p = [*beta];
                adam_step(&mut p, &[g.constants[j]], &mut const_states[j], cfg.learning_rate)?;
                *beta = p[0];
            }
            if let (Some(net), Some(gr), Some(st)) =
                (cm.growth_net.as_mut(), g.growth[j].as_ref(), growth_states[j].as_mut())
            {
                adam_step(net.params_mut(), gr, st, cfg.learning_rate)?;
            }
            adam_step(cm.u_net.params_mut(), &g.u[j], &mut u_states[j], cfg.learning_rate)?;
        }
        if let Some(es) = cfg.early_stop {
            if plateau.observe(loss.total, es.window, es.min_relative_improvement) {
                break;
            }
        }
    }

    let final_loss = ctx.evaluate(&traj, &model, false)?.loss;
    let predicted = traj.states(data.times())?;
    let metrics = evaluate_metrics(predicted.view(), data.states().view())?;
    Ok(FitResult {
        mode: FitMode::Upinn,
        system: system.name.clone(),
        constants: constant_estimates(system, &model),
        final_loss,
        metrics,
        epochs_run: history.len(),
        config: cfg.clone(),
        model,
        trajectory: Some(traj),
        history,
    })
}
