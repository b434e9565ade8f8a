use serde::{Deserialize, Serialize};

use super::expr::Expr;
use crate::autodiff::Real;
use crate::error::{Error, Result};

/// Growth part of a structured component.
#[derive(Debug, Clone, PartialEq)]
pub enum Growth {
    /// `beta * g(y)` with `g` known and `beta` an unknown constant.
    Scaled { g: Expr, beta_true: f64 },
    /// `g(y)` entirely unknown; `g_true` is only used to generate data and
    /// to score recovered values.
    Unknown { g_true: Expr },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GrowthForm {
    Scaled,
    Unknown,
}

/// One equation of the form `beta*g(y) + C(x)*u(y) + d(x, t)` (or
/// `g(y) + C(x)*u(y) + d(x, t)`) with `y = H1(x)`.
#[derive(Debug, Clone, PartialEq)]
pub struct StructuredTerm {
    pub growth: Growth,
    /// Name of the unknown constant multiplying `g`, e.g. `beta`.
    pub constant_name: String,
    /// `C(x)`, over the state.
    pub c: Expr,
    /// `d(x, t)`, over the state and time; carries any forcing.
    pub d: Expr,
    /// `H1(x)`: one expression per reduced coordinate.
    pub h1: Vec<Expr>,
    /// Ground-truth `u(y)`, over the reduced coordinates.
    pub u_true: Expr,
}

impl StructuredTerm {
    pub fn k(&self) -> usize {
        self.h1.len()
    }

    pub fn form(&self) -> GrowthForm {
        match self.growth {
            Growth::Scaled { .. } => GrowthForm::Scaled,
            Growth::Unknown { .. } => GrowthForm::Unknown,
        }
    }

    pub fn reduce<S: Real>(&self, x: &[S], t: S) -> Vec<S> {
        self.h1.iter().map(|h| h.eval(x, t)).collect()
    }

    /// Known `g` in the scaled form.
    pub fn g(&self) -> Option<&Expr> {
        match &self.growth {
            Growth::Scaled { g, .. } => Some(g),
            Growth::Unknown { .. } => None,
        }
    }

    pub fn beta_true(&self) -> Option<f64> {
        match self.growth {
            Growth::Scaled { beta_true, .. } => Some(beta_true),
            Growth::Unknown { .. } => None,
        }
    }

    /// The whole growth contribution at the true parameters.
    pub fn growth_true<S: Real>(&self, y: &[S], t: S) -> S {
        match &self.growth {
            Growth::Scaled { g, beta_true } => g.eval(y, t) * t.lift(*beta_true),
            Growth::Unknown { g_true } => g_true.eval(y, t),
        }
    }

    /// Right-hand side with the growth contribution and `u(y)` supplied.
    pub fn assemble<S: Real>(&self, growth: S, u: S, x: &[S], t: S) -> S {
        growth + self.c.eval(x, t) * u + self.d.eval(x, t)
    }

    pub fn eval_true<S: Real>(&self, x: &[S], t: S) -> S {
        let y = self.reduce(x, t);
        let u = self.u_true.eval(&y, t);
        self.assemble(self.growth_true(&y, t), u, x, t)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Component {
    Known(Expr),
    Structured(StructuredTerm),
}

/// An n-dimensional ODE system in which some components have the
/// structured form amenable to identifiability analysis.
#[derive(Debug, Clone, PartialEq)]
pub struct StructuredSystem {
    pub name: String,
    pub state_names: Vec<String>,
    pub components: Vec<Component>,
    pub x0: Vec<f64>,
    pub t_span: (f64, f64),
}

impl StructuredSystem {
    pub fn new(
        name: impl Into<String>,
        state_names: Vec<String>,
        components: Vec<Component>,
        x0: Vec<f64>,
        t_span: (f64, f64),
    ) -> Result<Self> {
        let sys = Self {
            name: name.into(),
            state_names,
            components,
            x0,
            t_span,
        };
        sys.validate()?;
        Ok(sys)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.components.len();
        if n == 0 {
            return Err(Error::Config("system has no components".into()));
        }
        if self.state_names.len() != n || self.x0.len() != n {
            return Err(Error::Config(format!(
                "system '{}': {} components, {} state names, {} initial values",
                self.name,
                n,
                self.state_names.len(),
                self.x0.len()
            )));
        }
        if !(self.t_span.1 > self.t_span.0) {
            return Err(Error::Config(format!(
                "time span {:?} is empty",
                self.t_span
            )));
        }
        let check = |e: &Expr, width: usize, what: &str| match e.max_var() {
            Some(i) if i >= width => Err(Error::Config(format!(
                "{what} references variable {i} but only {width} are available"
            ))),
            _ => Ok(()),
        };
        for (q, comp) in self.components.iter().enumerate() {
            match comp {
                Component::Known(e) => check(e, n, &format!("component {q}"))?,
                Component::Structured(s) => {
                    if s.h1.is_empty() || s.h1.len() > n {
                        return Err(Error::Config(format!(
                            "component {q}: H1 width {} must be in 1..={n}",
                            s.h1.len()
                        )));
                    }
                    let k = s.k();
                    check(&s.c, n, "C")?;
                    check(&s.d, n, "d")?;
                    for h in &s.h1 {
                        check(h, n, "H1")?;
                    }
                    check(&s.u_true, k, "u")?;
                    match &s.growth {
                        Growth::Scaled { g, .. } => check(g, k, "g")?,
                        Growth::Unknown { g_true } => check(g_true, k, "g")?,
                    }
                }
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.components.len()
    }

    pub fn rhs<S: Real>(&self, t: S, x: &[S]) -> Vec<S> {
        self.components
            .iter()
            .map(|c| match c {
                Component::Known(e) => e.eval(x, t),
                Component::Structured(s) => s.eval_true(x, t),
            })
            .collect()
    }

    pub fn rhs_f64(&self, t: f64, x: &[f64]) -> Vec<f64> {
        self.rhs(t, x)
    }

    /// Indices and terms of the structured components.
    pub fn structured(&self) -> impl Iterator<Item = (usize, &StructuredTerm)> {
        self.components.iter().enumerate().filter_map(|(q, c)| match c {
            Component::Structured(s) => Some((q, s)),
            Component::Known(_) => None,
        })
    }

    pub fn structured_mut(&mut self, q: usize) -> Option<&mut StructuredTerm> {
        match self.components.get_mut(q) {
            Some(Component::Structured(s)) => Some(s),
            _ => None,
        }
    }

    pub fn state_name_refs(&self) -> Vec<&str> {
        self.state_names.iter().map(String::as_str).collect()
    }
}
