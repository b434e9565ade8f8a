//! The fully parameterized systems used by the reproduction cases.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::expr::Expr;
use super::system::{Component, Growth, StructuredSystem, StructuredTerm};
use crate::error::{Error, Result};

pub const DEFAULT_T_SPAN: (f64, f64) = (0.0, 10.0);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BuiltinCase {
    /// dN/dt = beta N(1-N) - C u(N), dC/dt = -0.3 N C + exp(-5(t-4)^2).
    ChemoInjection,
    /// dN/dt = Psi(N) - C u(N), dC/dt = -0.5 N C + exp(-5(t-4)^2).
    ChemoUnknownGrowth,
    /// dx/dt = alpha x - beta x y, dy/dt = delta x y - gamma y.
    LotkaVolterra,
    /// As `ChemoInjection` with a fivefold injection and beta = 2, u = 2N.
    ChemoScaledInjection,
}

impl BuiltinCase {
    pub const ALL: [BuiltinCase; 4] = [
        BuiltinCase::ChemoInjection,
        BuiltinCase::ChemoUnknownGrowth,
        BuiltinCase::LotkaVolterra,
        BuiltinCase::ChemoScaledInjection,
    ];

    pub fn name(self) -> &'static str {
        match self {
            BuiltinCase::ChemoInjection => "chemo_injection",
            BuiltinCase::ChemoUnknownGrowth => "chemo_unknown_growth",
            BuiltinCase::LotkaVolterra => "lotka_volterra",
            BuiltinCase::ChemoScaledInjection => "chemo_scaled_injection",
        }
    }
}

impl fmt::Display for BuiltinCase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for BuiltinCase {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.trim().to_ascii_lowercase().replace('-', "_");
        BuiltinCase::ALL
            .into_iter()
            .find(|c| c.name() == norm)
            .ok_or_else(|| {
                Error::Config(format!(
                    "unknown builtin system '{s}' (expected one of: {})",
                    BuiltinCase::ALL.map(|c| c.name()).join(", ")
                ))
            })
    }
}

fn parse(src: &str, names: &[&str]) -> Expr {
    Expr::parse(src, names, &[]).expect("builtin expression")
}

/// Chemotherapy model: the structured N equation plus a known drug equation
/// with the given decay rate and injection amplitude.
fn chemo(
    growth: Growth,
    u_true: &str,
    gamma: f64,
    injection: f64,
    x0: [f64; 2],
    name: &str,
) -> StructuredSystem {
    let names = ["N", "C"];
    let y = ["y"];
    let n_eq = StructuredTerm {
        growth,
        constant_name: "beta".into(),
        c: parse("-C", &names),
        d: Expr::Const(0.0),
        h1: vec![Expr::var(0)],
        u_true: parse(u_true, &y),
    };
    let c_eq = parse(
        &format!("-{gamma:?}*N*C + {injection:?}*exp(-5*(t - 4)^2)"),
        &names,
    );
    StructuredSystem::new(
        name,
        names.iter().map(|s| s.to_string()).collect(),
        vec![Component::Structured(n_eq), Component::Known(c_eq)],
        x0.to_vec(),
        DEFAULT_T_SPAN,
    )
    .expect("builtin system is valid")
}

pub fn builtin_system(case: BuiltinCase) -> StructuredSystem {
    let logistic = || parse("y*(1 - y)", &["y"]);
    match case {
        BuiltinCase::ChemoInjection => chemo(
            Growth::Scaled {
                g: logistic(),
                beta_true: 1.0,
            },
            "y",
            0.3,
            1.0,
            [1.0, 1.0],
            case.name(),
        ),
        BuiltinCase::ChemoUnknownGrowth => chemo(
            Growth::Unknown { g_true: logistic() },
            "y",
            0.5,
            1.0,
            [0.01, 0.1],
            case.name(),
        ),
        BuiltinCase::ChemoScaledInjection => chemo(
            Growth::Scaled {
                g: logistic(),
                beta_true: 2.0,
            },
            "2*y",
            0.3,
            5.0,
            [0.01, 0.1],
            case.name(),
        ),
        BuiltinCase::LotkaVolterra => {
            let names = ["x", "y"];
            // alpha*x + (-y)*(beta*x)  and  gamma*(-y) + x*(delta*y)
            let prey = StructuredTerm {
                growth: Growth::Scaled {
                    g: Expr::var(0),
                    beta_true: 1.0,
                },
                constant_name: "alpha".into(),
                c: parse("-y", &names),
                d: Expr::Const(0.0),
                h1: vec![Expr::var(0)],
                u_true: parse("1*v", &["v"]),
            };
            let predator = StructuredTerm {
                growth: Growth::Scaled {
                    g: parse("-v", &["v"]),
                    beta_true: 1.0,
                },
                constant_name: "gamma".into(),
                c: Expr::var(0),
                d: Expr::Const(0.0),
                h1: vec![Expr::var(1)],
                u_true: parse("1*v", &["v"]),
            };
            StructuredSystem::new(
                case.name(),
                names.iter().map(|s| s.to_string()).collect(),
                vec![Component::Structured(prey), Component::Structured(predator)],
                vec![2.0, 4.0],
                DEFAULT_T_SPAN,
            )
            .expect("builtin system is valid")
        }
    }
}

/// Replaces the ground-truth `u` of structured component `q`.
pub fn with_u_true(mut system: StructuredSystem, q: usize, u_true: &str) -> Result<StructuredSystem> {
    let term = system
        .structured_mut(q)
        .ok_or_else(|| Error::Config(format!("component {q} is not structured")))?;
    term.u_true = Expr::parse(u_true, &["y"], &[])?;
    system.validate()?;
    Ok(system)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn injection_contributes_one_at_t4() {
        let sys = builtin_system(BuiltinCase::ChemoInjection);
        let f = sys.rhs_f64(4.0, &[0.0, 0.7]);
        assert_eq!(f[1], 1.0);
        let f = sys.rhs_f64(4.0, &[0.3, 0.7]);
        assert!((f[1] - (1.0 - 0.3 * 0.3 * 0.7)).abs() < 1e-15);
    }

    #[test]
    fn scaled_injection_contributes_five_at_t4() {
        let sys = builtin_system(BuiltinCase::ChemoScaledInjection);
        assert_eq!(sys.rhs_f64(4.0, &[0.0, 0.0])[1], 5.0);
        // beta* = 2, u* = 2N
        let f = sys.rhs_f64(0.0, &[0.5, 0.2]);
        assert!((f[0] - (2.0 * 0.25 - 0.2 * 1.0)).abs() < 1e-15);
    }

    #[test]
    fn lotka_volterra_unit_equilibrium() {
        let sys = builtin_system(BuiltinCase::LotkaVolterra);
        assert_eq!(sys.rhs_f64(0.0, &[1.0, 1.0]), vec![0.0, 0.0]);
        let f = sys.rhs_f64(0.0, &[2.0, 4.0]);
        assert_eq!(f, vec![2.0 - 8.0, 8.0 - 4.0]);
    }

    #[test]
    fn unknown_growth_uses_logistic_truth() {
        let sys = builtin_system(BuiltinCase::ChemoUnknownGrowth);
        assert_eq!(sys.x0, vec![0.01, 0.1]);
        let f = sys.rhs_f64(0.0, &[0.5, 0.2]);
        assert!((f[0] - (0.25 - 0.1)).abs() < 1e-15);
    }

    #[test]
    fn names_round_trip_and_unknown_is_config_error() {
        for case in BuiltinCase::ALL {
            assert_eq!(case.name().parse::<BuiltinCase>().unwrap(), case);
        }
        assert!(matches!("chemo".parse::<BuiltinCase>(), Err(Error::Config(_))));
    }
}
