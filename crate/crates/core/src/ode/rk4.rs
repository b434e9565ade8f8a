use ndarray::Array2;

use super::system::StructuredSystem;
use super::trajectory::Trajectory;
use crate::error::{Error, Result};

/// Number of fixed steps covering `span` with step `dt`, tolerating the
/// rounding in `span / dt` for spans that are whole multiples of `dt`.
fn step_count(span: f64, dt: f64) -> usize {
    let ratio = span / dt;
    let nearest = ratio.round();
    if (ratio - nearest).abs() <= 1e-9 * ratio.max(1.0) {
        nearest as usize
    } else {
        ratio.ceil() as usize
    }
}

/// Classical fourth-order Runge-Kutta on an arbitrary right-hand side.
///
/// Step `k` starts at `t0 + k*dt`; the last step is shortened to land on
/// `t1` exactly.
pub fn rk4_with<F>(f: F, x0: &[f64], t_span: (f64, f64), dt: f64) -> Result<(Vec<f64>, Array2<f64>)>
where
    F: Fn(f64, &[f64]) -> Vec<f64>,
{
    let (t0, t1) = t_span;
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::Config(format!("step size must be positive, got {dt}")));
    }
    if !(t1 > t0) {
        return Err(Error::Config(format!("empty time span [{t0}, {t1}]")));
    }
    let n = x0.len();
    let steps = step_count(t1 - t0, dt);
    let mut times = Vec::with_capacity(steps + 1);
    let mut states = Array2::zeros((steps + 1, n));
    let mut x = x0.to_vec();
    times.push(t0);
    states.row_mut(0).assign(&ndarray::ArrayView1::from(&x));
    let mut tmp = vec![0.0; n];
    for k in 0..steps {
        let t = t0 + k as f64 * dt;
        let t_next = if k + 1 == steps { t1 } else { t0 + (k + 1) as f64 * dt };
        let h = t_next - t;
        let k1 = f(t, &x);
        for i in 0..n {
            tmp[i] = x[i] + 0.5 * h * k1[i];
        }
        let k2 = f(t + 0.5 * h, &tmp);
        for i in 0..n {
            tmp[i] = x[i] + 0.5 * h * k2[i];
        }
        let k3 = f(t + 0.5 * h, &tmp);
        for i in 0..n {
            tmp[i] = x[i] + h * k3[i];
        }
        let k4 = f(t + h, &tmp);
        for i in 0..n {
            x[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Blowup { time: t_next });
        }
        times.push(t_next);
        states.row_mut(k + 1).assign(&ndarray::ArrayView1::from(&x));
    }
    Ok((times, states))
}

/// Integrates `system` and stores the analytic right-hand side at every
/// sample as the derivative columns.
pub fn rk4_integrate(
    system: &StructuredSystem,
    x0: &[f64],
    t_span: (f64, f64),
    dt: f64,
) -> Result<Trajectory> {
    if x0.len() != system.dim() {
        return Err(Error::Shape(format!(
            "initial state has width {}, system '{}' has dimension {}",
            x0.len(),
            system.name,
            system.dim()
        )));
    }
    let (times, states) = rk4_with(|t, x| system.rhs_f64(t, x), x0, t_span, dt)?;
    Trajectory::with_analytic_derivatives(times, states, system)
}
