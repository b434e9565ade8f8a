use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use uniqode::experiments::{CaseConfig, CaseId};
use uniqode::ode::{
    builtin_system, rk4_integrate, sample_dataset, BuiltinCase, Component, Expr, StructuredSystem, Trajectory,
};
use uniqode::train::*;
use uniqode::Error;

fn chemo_data(m: usize) -> (StructuredSystem, Trajectory) {
    let system = builtin_system(BuiltinCase::ChemoInjection);
    let truth = rk4_integrate(&system, &system.x0, system.t_span, 1e-3).unwrap();
    let data = sample_dataset(&truth, m).unwrap();
    (system, data)
}

fn small_cfg(epochs: usize) -> TrainConfig {
    TrainConfig {
        epochs,
        batch_size: Some(32),
        ..TrainConfig::default()
    }
}

#[test]
fn zero_epochs_returns_initialization() {
    let (system, data) = chemo_data(101);
    let spec = UnknownSpec::for_system(&system, &[2.0], &[8, 8]).unwrap();
    let cfg = small_cfg(0);
    let fit = direct_fit(&system, &data, &spec, &cfg).unwrap();
    assert_eq!(fit.constants[0].value, 2.0);
    assert_eq!(fit.constants[0].initial, 2.0);
    assert!(fit.history.is_empty());
    assert_eq!(fit.epochs_run, 0);
    let init = UnknownModel::init(&system, &spec, &mut ChaCha8Rng::seed_from_u64(cfg.seed)).unwrap();
    assert_eq!(fit.model, init);
}

#[test]
fn direct_fit_is_deterministic() {
    let (system, data) = chemo_data(101);
    let spec = UnknownSpec::for_system(&system, &[2.0], &[8, 8]).unwrap();
    let a = direct_fit(&system, &data, &spec, &small_cfg(30)).unwrap();
    let b = direct_fit(&system, &data, &spec, &small_cfg(30)).unwrap();
    assert_eq!(a.history.len(), 30);
    assert_eq!(a.history, b.history);
    assert_eq!(a.to_json().unwrap(), b.to_json().unwrap());
    let c = direct_fit(&system, &data, &spec, &TrainConfig { seed: 1, ..small_cfg(30) }).unwrap();
    assert_ne!(a.history, c.history);
}

#[test]
fn direct_fit_requires_derivatives() {
    let (system, data) = chemo_data(101);
    let spec = UnknownSpec::for_system(&system, &[2.0], &[8]).unwrap();
    let err = direct_fit(&system, &data.without_derivatives(), &spec, &small_cfg(1)).unwrap_err();
    assert!(matches!(err, Error::Data(_)), "{err}");
}

#[test]
fn residual_vanishes_at_truth() {
    for case in [BuiltinCase::ChemoInjection, BuiltinCase::LotkaVolterra, BuiltinCase::ChemoUnknownGrowth] {
        let system = builtin_system(case);
        let data = sample_dataset(&rk4_integrate(&system, &system.x0, system.t_span, 1e-3).unwrap(), 1001).unwrap();
        let loss = direct_loss(&system, &TrueUnknowns(&system), &data).unwrap();
        assert!(loss <= 1e-20, "{case}: {loss:e}");
    }
}

#[test]
fn moving_average_decreases_early() {
    let mut cfg = CaseConfig::defaults(CaseId::Case1UN);
    cfg.train.epochs = 100;
    let system = cfg.system().unwrap();
    let (_, data) = chemo_data(cfg.samples);
    let spec = UnknownSpec::for_system(&system, &cfg.initial_constants, &cfg.hidden).unwrap();
    let fit = direct_fit(&system, &data, &spec, &cfg.train).unwrap();
    let losses: Vec<f64> = fit.history.iter().map(|r| r.total).collect();
    let avg: Vec<f64> = losses.windows(10).map(|w| w.iter().sum::<f64>() / 10.0).collect();
    for (k, w) in avg.windows(2).enumerate() {
        assert!(w[1] < w[0], "moving average rose at epoch {}: {} -> {}", k + 10, w[0], w[1]);
    }
}

/// `x(t) = t` with rate 1.
struct Ramp;

impl StateModel for Ramp {
    fn states_and_rates(&self, times: &[f64]) -> uniqode::Result<(Array2<f64>, Array2<f64>)> {
        let n = times.len();
        Ok((
            Array2::from_shape_fn((n, 1), |(p, _)| times[p]),
            Array2::ones((n, 1)),
        ))
    }
}

#[test]
fn loss_components_examples() {
    let system = StructuredSystem::new(
        "still",
        vec!["x".into()],
        vec![Component::Known(Expr::constant(0.0))],
        vec![0.0],
        (0.0, 1.0),
    )
    .unwrap();
    let times = uniform_grid((0.0, 1.0), 11);
    let states = Array2::from_shape_fn((11, 1), |(p, _)| times[p]);
    let data = Trajectory::new(times, states, None).unwrap();
    for colloc in [vec![0.5], vec![0.0, 0.3, 0.31, 1.0], uniform_grid((0.0, 1.0), 50)] {
        let l = loss_components(&system, &Ramp, &TrueUnknowns(&system), &data, &colloc, 0.1).unwrap();
        assert_eq!(l.data, 0.0);
        assert_eq!(l.ode, 1.0);
        assert_eq!(l.total, 0.1);
    }
    let err = loss_components(&system, &Ramp, &TrueUnknowns(&system), &data, &[], 0.1).unwrap_err();
    assert!(matches!(err, Error::Config(_)));
    let err = loss_components(&system, &Ramp, &TrueUnknowns(&system), &data, &[2.0], 0.1).unwrap_err();
    assert!(matches!(err, Error::Config(_)));
}

/// The dense RK4 solution, with rates from central differences.
struct Dense(Trajectory, f64);

impl StateModel for Dense {
    fn states_and_rates(&self, times: &[f64]) -> uniqode::Result<(Array2<f64>, Array2<f64>)> {
        let (traj, dt) = (&self.0, self.1);
        let n = traj.dim();
        let mut s = Array2::zeros((times.len(), n));
        let mut r = Array2::zeros((times.len(), n));
        for (p, &t) in times.iter().enumerate() {
            let i = ((t - traj.times()[0]) / dt).round() as usize;
            let (lo, hi) = (i.saturating_sub(1), (i + 1).min(traj.len() - 1));
            for k in 0..n {
                s[[p, k]] = traj.states()[[i, k]];
                r[[p, k]] = (traj.states()[[hi, k]] - traj.states()[[lo, k]]) / ((hi - lo) as f64 * dt);
            }
        }
        Ok((s, r))
    }
}

#[test]
fn ode_loss_vanishes_on_true_solution() {
    for case in BuiltinCase::ALL {
        let system = builtin_system(case);
        let dt = 1e-3;
        let truth = rk4_integrate(&system, &system.x0, system.t_span, dt).unwrap();
        let data = sample_dataset(&truth, 101).unwrap();
        // Interior grid points so central differences apply.
        let colloc: Vec<f64> = (1..1000).map(|k| truth.times()[k * 10]).collect();
        let l = loss_components(&system, &Dense(truth, dt), &TrueUnknowns(&system), &data, &colloc, 0.1).unwrap();
        assert!(l.ode <= 1e-8, "{case}: {:e}", l.ode);
        assert!(l.data <= 1e-24, "{case}: {:e}", l.data);
    }
}

#[test]
fn zero_ode_weight_leaves_constants() {
    let system = builtin_system(BuiltinCase::LotkaVolterra);
    let truth = rk4_integrate(&system, &system.x0, system.t_span, 1e-2).unwrap();
    let data = sample_dataset(&truth, 51).unwrap().without_derivatives();
    let spec = UnknownSpec::for_system(&system, &[1.5, 0.5], &[6]).unwrap().with_trajectory(&[8, 8], 2);
    let cfg = TrainConfig {
        epochs: 20,
        omega_de: 0.0,
        collocation_count: 32,
        ..TrainConfig::default()
    };
    let fit = upinn_fit(&system, &data, &spec, &cfg).unwrap();
    assert_eq!(fit.history.len(), 20);
    assert_eq!(fit.constants.iter().map(|c| c.value).collect::<Vec<_>>(), vec![1.5, 0.5]);
    assert!(fit.history.iter().all(|r| r.total == r.data));
    assert!(fit.history.last().unwrap().data < fit.history[0].data);
}

#[test]
fn upinn_is_deterministic_and_moves_constants() {
    let system = builtin_system(BuiltinCase::LotkaVolterra);
    let truth = rk4_integrate(&system, &system.x0, system.t_span, 1e-2).unwrap();
    let data = sample_dataset(&truth, 51).unwrap().without_derivatives();
    let spec = UnknownSpec::for_system(&system, &[1.5, 0.5], &[6]).unwrap().with_trajectory(&[8, 8], 2);
    let cfg = TrainConfig {
        epochs: 15,
        collocation_count: 32,
        ..TrainConfig::default()
    };
    let a = upinn_fit(&system, &data, &spec, &cfg).unwrap();
    let b = upinn_fit(&system, &data, &spec, &cfg).unwrap();
    assert_eq!(a.to_json().unwrap(), b.to_json().unwrap());
    assert_eq!(a.history, b.history);
    assert!(a.constants.iter().all(|c| c.value != c.initial));
    assert!(a.trajectory.is_some());
    let csv = a.history_csv();
    assert!(csv.starts_with("epoch,total,data,ode\n"));
    assert_eq!(csv.lines().count(), 16);
}

#[test]
fn upinn_rejects_bad_config() {
    let system = builtin_system(BuiltinCase::LotkaVolterra);
    let truth = rk4_integrate(&system, &system.x0, system.t_span, 1e-2).unwrap();
    let data = sample_dataset(&truth, 51).unwrap().without_derivatives();
    let spec = UnknownSpec::for_system(&system, &[1.5, 0.5], &[6]).unwrap().with_trajectory(&[8], 2);
    let cfg = TrainConfig {
        collocation_count: 0,
        ..TrainConfig::default()
    };
    assert!(matches!(upinn_fit(&system, &data, &spec, &cfg), Err(Error::Config(_))));
    let cfg = TrainConfig {
        learning_rate: -1.0,
        ..TrainConfig::default()
    };
    assert!(matches!(upinn_fit(&system, &data, &spec, &cfg), Err(Error::Config(_))));
    assert!(UnknownSpec::for_system(&system, &[1.5], &[6]).is_err());
}
