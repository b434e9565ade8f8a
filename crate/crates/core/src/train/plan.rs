//! Closed-form partials of the ODE residuals.
//!
//! The known parts of a system are expressions, so their state derivatives
//! are derived symbolically once per fit; each collocation point then costs
//! plain evaluations instead of a recorded tape.

use ndarray::Array2;

use crate::ode::{Component, Expr, StructuredSystem, StructuredTerm};

type Partials = Vec<(usize, Expr)>;

fn partials(e: &Expr, n: usize) -> Partials {
    (0..n)
        .map(|k| (k, e.derivative(k)))
        .filter(|(_, d)| !d.is_zero())
        .collect()
}

enum Row {
    Known {
        f: Expr,
        df: Partials,
    },
    Structured {
        /// Position among the structured terms.
        term: usize,
        c: Expr,
        dc: Partials,
        d: Expr,
        dd: Partials,
        /// Known `g` and its derivative in each reduced coordinate.
        g: Option<(Expr, Vec<Expr>)>,
    },
}

/// Per-point gradient accumulators, one slot per state or structured term.
pub(crate) struct PointGrads<'a> {
    pub s: &'a mut [f64],
    pub sdot: &'a mut [f64],
    pub u: &'a mut [f64],
    /// d/dβ for known-`g` terms, d/dΨ otherwise.
    pub growth: &'a mut [f64],
}

pub(crate) struct ResidualPlan {
    rows: Vec<Row>,
    /// `H1` and its nonzero state partials for every structured term.
    h1: Vec<Vec<(Expr, Partials)>>,
}

impl ResidualPlan {
    pub fn new(system: &StructuredSystem, terms: &[(usize, &StructuredTerm)]) -> Self {
        let n = system.dim();
        let rows = system
            .components
            .iter()
            .enumerate()
            .map(|(i, comp)| match comp {
                Component::Known(f) => Row::Known {
                    f: f.clone(),
                    df: partials(f, n),
                },
                Component::Structured(term) => Row::Structured {
                    term: terms.iter().position(|(q, _)| *q == i).expect("structured term listed"),
                    c: term.c.clone(),
                    dc: partials(&term.c, n),
                    d: term.d.clone(),
                    dd: partials(&term.d, n),
                    g: term
                        .g()
                        .map(|g| (g.clone(), (0..term.k()).map(|j| g.derivative(j)).collect())),
                },
            })
            .collect();
        let h1 = terms
            .iter()
            .map(|(_, term)| term.h1.iter().map(|h| (h.clone(), partials(h, n))).collect())
            .collect();
        Self { rows, h1 }
    }

    /// Evaluates every residual at one point and returns their squared sum.
    /// With `grads`, adds `weight * r * dr/d(leaf)` for every leaf: the
    /// state, its rate, the `u` values and the growth values (one per
    /// structured term, in term order).
    pub fn point(
        &self,
        s: &[f64],
        sdot: &[f64],
        t: f64,
        u: &[f64],
        growth: &[f64],
        weight: f64,
        y: &mut Vec<f64>,
        mut grads: Option<PointGrads<'_>>,
    ) -> f64 {
        let mut sum = 0.0;
        for (i, row) in self.rows.iter().enumerate() {
            match row {
                Row::Known { f, df } => {
                    let r = sdot[i] - f.eval_f64(s, t);
                    sum += r * r;
                    if let Some(g) = grads.as_mut() {
                        let w = weight * r;
                        g.sdot[i] += w;
                        for (k, e) in df {
                            g.s[*k] -= w * e.eval_f64(s, t);
                        }
                    }
                }
                Row::Structured { term, c, dc, d, dd, g: known_g } => {
                    let j = *term;
                    let cv = c.eval_f64(s, t);
                    let uv = u[j];
                    let h1 = &self.h1[j];
                    let growth_v = match known_g {
                        Some((g, _)) => {
                            y.clear();
                            y.extend(h1.iter().map(|(h, _)| h.eval_f64(s, t)));
                            growth[j] * g.eval_f64(y, t)
                        }
                        None => growth[j],
                    };
                    let r = sdot[i] - (growth_v + cv * uv + d.eval_f64(s, t));
                    sum += r * r;
                    let Some(gr) = grads.as_mut() else { continue };
                    let w = weight * r;
                    gr.sdot[i] += w;
                    gr.u[j] -= w * cv;
                    for (k, e) in dc {
                        gr.s[*k] -= w * uv * e.eval_f64(s, t);
                    }
                    for (k, e) in dd {
                        gr.s[*k] -= w * e.eval_f64(s, t);
                    }
                    match known_g {
                        Some((g, dg)) => {
                            gr.growth[j] -= w * g.eval_f64(y, t);
                            // beta * g'(y) * dH1/ds
                            for ((_, dh), dgj) in h1.iter().zip(dg) {
                                if dgj.is_zero() {
                                    continue;
                                }
                                let scale = w * growth[j] * dgj.eval_f64(y, t);
                                for (k, e) in dh {
                                    gr.s[*k] -= scale * e.eval_f64(s, t);
                                }
                            }
                        }
                        None => gr.growth[j] -= w,
                    }
                }
            }
        }
        sum
    }

    /// `H1` of structured term `j` at every row of `s`, as (rows, k).
    pub fn reduce_batch(&self, j: usize, s: &Array2<f64>, times: &[f64]) -> Array2<f64> {
        let h1 = &self.h1[j];
        let mut x = vec![0.0; s.ncols()];
        let mut y = Array2::zeros((times.len(), h1.len()));
        for (p, &t) in times.iter().enumerate() {
            for (k, v) in x.iter_mut().enumerate() {
                *v = s[[p, k]];
            }
            for (c, (h, _)) in h1.iter().enumerate() {
                y[[p, c]] = h.eval_f64(&x, t);
            }
        }
        y
    }

    /// Adds `J_H1(s)^T gy` of structured term `j` to `gs`.
    pub fn chain_h1(&self, j: usize, s: &[f64], t: f64, gy: &[f64], gs: &mut [f64]) {
        for ((_, dh), &g) in self.h1[j].iter().zip(gy) {
            for (k, e) in dh {
                gs[*k] += g * e.eval_f64(s, t);
            }
        }
    }
}
