//! Random structured instances for the identifiability tests.
//!
//! The state is `x = (y, z)` with `H1(x) = y`; the structured component is
//! `xdot_0 = beta g(y) + C(y, z) u(y) + d(y, z)` (or with an unknown `g`).
//! Coefficient ranges keep `u`, `g` and `C` away from zero on `[-1, 1]^2`
//! so that relative errors are meaningful.

#![allow(dead_code)]

use ndarray::Array2;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use uniqode::identify::Samples;
use uniqode::ode::{Expr, Growth, StructuredTerm, Trajectory};

fn y() -> Expr {
    Expr::var(0)
}

fn z() -> Expr {
    Expr::var(1)
}

fn c(v: f64) -> Expr {
    Expr::constant(v)
}

fn sign(rng: &mut ChaCha8Rng) -> f64 {
    if rng.gen::<bool>() {
        1.0
    } else {
        -1.0
    }
}

/// Quadratic `a0 + a1 y + a2 y^2` with `|a0| in [lo, hi]` and
/// `|a1| + |a2| <= slope`; returns the polynomial and its Lipschitz
/// constant on `[-1, 1]`.
fn quadratic(rng: &mut ChaCha8Rng, lo: f64, hi: f64, slope: f64) -> (Expr, f64) {
    let a0 = sign(rng) * rng.gen_range(lo..hi);
    let split = rng.gen_range(0.0..1.0);
    let a1 = sign(rng) * slope * split;
    let a2 = sign(rng) * slope * (1.0 - split) * rng.gen_range(0.0..1.0);
    let e = c(a0) + c(a1) * y() + c(a2) * y() * y();
    (e, a1.abs() + 2.0 * a2.abs())
}

pub struct Instance {
    pub term: StructuredTerm,
    pub beta: Option<f64>,
    pub g: Expr,
    pub u: Expr,
    pub lip_g: f64,
    pub lip_u: f64,
}

impl Instance {
    pub fn random(rng: &mut ChaCha8Rng, unknown_growth: bool) -> Self {
        let (g, lip_g) = quadratic(rng, 1.0, 2.0, 0.4);
        let (u, lip_u) = quadratic(rng, 1.5, 3.0, 0.5);
        let cz = sign(rng) * rng.gen_range(0.5..1.0);
        let cy = rng.gen_range(-0.5..0.5);
        let cc = c(rng.gen_range(2.0..3.0)) + c(cz) * z() + c(cy) * y();
        let d = c(rng.gen_range(-1.0..1.0))
            + c(rng.gen_range(-1.0..1.0)) * y() * z()
            + c(rng.gen_range(-1.0..1.0)) * z() * z();
        let beta = (!unknown_growth).then(|| rng.gen_range(-5.0..5.0));
        let growth = match beta {
            Some(b) => Growth::Scaled {
                g: g.clone(),
                beta_true: b,
            },
            None => Growth::Unknown { g_true: g.clone() },
        };
        Instance {
            term: StructuredTerm {
                growth,
                constant_name: "beta".into(),
                c: cc,
                d,
                h1: vec![y()],
                u_true: u.clone(),
            },
            beta,
            g,
            u,
            lip_g,
            lip_u,
        }
    }

    pub fn xdot(&self, x: &[f64]) -> f64 {
        self.term.eval_true(x, 0.0)
    }

    /// Dataset at the given states with exact derivatives of component 0.
    pub fn dataset(&self, states: &[[f64; 2]]) -> Samples {
        let m = states.len();
        let s = Array2::from_shape_fn((m, 2), |(p, k)| states[p][k]);
        let d = Array2::from_shape_fn((m, 2), |(p, k)| if k == 0 { self.xdot(&states[p]) } else { 0.0 });
        let traj = Trajectory::new((0..m).map(|p| p as f64).collect(), s, Some(d)).unwrap();
        Samples::from_term(&self.term, 0, &traj).unwrap()
    }
}

/// `background` random states followed by `pairs` pairs; each pair shares
/// `y` exactly (`offset = 0`) or up to a random offset of at most `d`, and
/// has separated `z`.
pub fn random_states(rng: &mut ChaCha8Rng, background: usize, pairs: usize, d: f64) -> Vec<[f64; 2]> {
    let mut states: Vec<[f64; 2]> = (0..background)
        .map(|_| [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)])
        .collect();
    for _ in 0..pairs {
        let yi = rng.gen_range(-0.8..0.8);
        let off = if d > 0.0 { rng.gen_range(-d..=d).clamp(-0.2, 0.2) } else { 0.0 };
        let zi = rng.gen_range(-1.0..-0.2);
        let zj = rng.gen_range(0.2..1.0);
        states.push([yi, zi]);
        states.push([yi + off, zj]);
    }
    states
}

pub fn rel_err(got: f64, want: f64) -> f64 {
    (got - want).abs() / want.abs().max(f64::MIN_POSITIVE)
}
