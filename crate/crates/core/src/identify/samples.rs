use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ode::{StructuredTerm, Trajectory};

/// Numerical cut-offs below which a hypothesis counts as violated.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Thresholds {
    /// Largest `‖y_i - y_j‖∞` treated as exact equality.
    pub y_match: f64,
    pub c_gap: f64,
    pub g: f64,
    pub denominator: f64,
    /// `|C(x_p)|` must exceed this for `u(y_p)` to be extended to index p.
    pub c_value: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self {
            y_match: 1e-12,
            c_gap: 1e-9,
            g: 1e-9,
            denominator: 1e-9,
            c_value: 1e-9,
        }
    }
}

/// The known parts of one structured component evaluated at every sample.
#[derive(Debug, Clone, PartialEq)]
pub struct Samples {
    pub y: Vec<Vec<f64>>,
    pub c: Vec<f64>,
    pub d: Vec<f64>,
    /// Known `g(y_p)`; absent when the growth term is itself unknown.
    pub g: Option<Vec<f64>>,
    /// Observed `(xdot_p)_q`; absent for derivative-free data.
    pub xdot: Option<Vec<f64>>,
}

impl Samples {
    /// Evaluates `H1`, `C`, `d` and (if known) `g` of component `q` on
    /// every row of `data`.
    pub fn from_term(term: &StructuredTerm, q: usize, data: &Trajectory) -> Result<Self> {
        if q >= data.dim() {
            return Err(Error::Shape(format!(
                "component {q} out of range for {}-dimensional data",
                data.dim()
            )));
        }
        let m = data.len();
        let mut s = Samples {
            y: Vec::with_capacity(m),
            c: Vec::with_capacity(m),
            d: Vec::with_capacity(m),
            g: term.g().map(|_| Vec::with_capacity(m)),
            xdot: data.derivatives().map(|d| d.column(q).to_vec()),
        };
        for (p, &t) in data.times().iter().enumerate() {
            let x = data.state(p).to_vec();
            let y = term.reduce(&x, t);
            if let (Some(gv), Some(g)) = (s.g.as_mut(), term.g()) {
                gv.push(g.eval_f64(&y, t));
            }
            s.c.push(term.c.eval_f64(&x, t));
            s.d.push(term.d.eval_f64(&x, t));
            s.y.push(y);
        }
        Ok(s)
    }

    pub fn len(&self) -> usize {
        self.c.len()
    }

    pub fn is_empty(&self) -> bool {
        self.c.is_empty()
    }

    pub fn y_distance(&self, i: usize, j: usize) -> f64 {
        self.y[i]
            .iter()
            .zip(&self.y[j])
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub(crate) fn require_xdot(&self) -> Result<&[f64]> {
        self.xdot
            .as_deref()
            .ok_or_else(|| Error::Data("exact recovery needs derivative columns".into()))
    }

    pub(crate) fn require_g(&self) -> Result<&[f64]> {
        self.g
            .as_deref()
            .ok_or_else(|| Error::Config("this operation needs a known g".into()))
    }
}
