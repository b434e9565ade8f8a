//! Error radii for approximately matched pairs with Lipschitz unknowns.
//!
//! The radii bound the distance between the true values and the estimates
//! obtained by treating the pair as exact (the "midpoint" estimates):
//! for the known-`g` case
//! `beta_bar = (C_j (xdot_i - d_i) - C_i (xdot_j - d_j)) / (g_i C_j - g_j C_i)`
//! and `u_bar(y_p) = (xdot_p - beta_bar g_p - d_p) / C_p`; for the
//! unknown-`g` case `u_bar = (xdot_i - xdot_j - d_i + d_j) / (C_i - C_j)`
//! and `g_bar = xdot_i - C_i u_bar - d_i`.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::pairs::MatchedPair;
use super::recover::Theorem;
use super::samples::{Samples, Thresholds};
use crate::error::{Error, Result};

/// Reading of the radius formulas.
///
/// `Verbatim` uses the printed forms: denominator
/// `g(y_i)(C_i - C_j) - (C_i - C_j)` for the constant, and `C_j L2` (signed)
/// in the unknown-`g` bound. `Alternative` uses the two-point denominator
/// `g(y_i) C_j - g(y_j) C_i`, which is `-g(y_i)(C_i - C_j)` whenever
/// `g(y_i) = g(y_j)`, and `|C_j| L2`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FormulaVariant {
    #[default]
    Verbatim,
    Alternative,
}

impl fmt::Display for FormulaVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FormulaVariant::Verbatim => "verbatim",
            FormulaVariant::Alternative => "alternative",
        })
    }
}

impl FromStr for FormulaVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "verbatim" => Ok(FormulaVariant::Verbatim),
            "alternative" => Ok(FormulaVariant::Alternative),
            other => Err(Error::Config(format!(
                "unknown formula variant '{other}' (expected verbatim or alternative)"
            ))),
        }
    }
}

/// Radius of the constant for one pair.
pub fn t3_beta_radius(
    ci: f64,
    cj: f64,
    gi: f64,
    gj: f64,
    lipschitz: f64,
    d: f64,
    variant: FormulaVariant,
) -> (f64, f64) {
    let denominator = match variant {
        FormulaVariant::Verbatim => gi * (ci - cj) - (ci - cj),
        FormulaVariant::Alternative => gi * cj - gj * ci,
    };
    ((ci * cj * lipschitz * d / denominator).abs(), denominator)
}

/// Radius of `u` at index i for one pair.
pub fn t4_u_radius(ci: f64, cj: f64, l1: f64, l2: f64, d: f64, variant: FormulaVariant) -> f64 {
    let cj_l2 = match variant {
        FormulaVariant::Verbatim => cj * l2,
        FormulaVariant::Alternative => cj.abs() * l2,
    };
    (d * (l1 + cj_l2) / (ci - cj)).abs()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub theorem: Theorem,
    pub variant: FormulaVariant,
    pub pair: MatchedPair,
    /// `L` for the known-`g` case, `L2` otherwise.
    pub lipschitz_u: f64,
    pub lipschitz_g: Option<f64>,
    pub d_used: f64,
    pub c_i: f64,
    pub c_j: f64,
    pub g_i: Option<f64>,
    pub g_j: Option<f64>,
    pub denominator: Option<f64>,
    pub beta_estimate: Option<f64>,
    pub beta_radius: Option<f64>,
    pub u_estimates: BTreeMap<usize, f64>,
    pub u_radii: BTreeMap<usize, f64>,
    pub g_estimates: BTreeMap<usize, f64>,
    pub g_radii: BTreeMap<usize, f64>,
    pub thresholds: Thresholds,
}

fn check_inputs(pair: &MatchedPair, samples: &Samples, d_used: f64, lipschitz: &[f64]) -> Result<()> {
    if !(d_used >= 0.0) || lipschitz.iter().any(|l| !(*l >= 0.0)) {
        return Err(Error::Config(format!(
            "distance bound and Lipschitz constants must be non-negative (D = {d_used}, L = {lipschitz:?})"
        )));
    }
    let m = samples.len();
    if pair.i >= m || pair.j >= m || pair.i == pair.j {
        return Err(Error::Config(format!(
            "pair ({}, {}) is not two distinct indices below {m}",
            pair.i, pair.j
        )));
    }
    let dist = samples.y_distance(pair.i, pair.j);
    if dist > d_used {
        return Err(Error::Config(format!(
            "pair ({}, {}) is {dist:e} apart, more than D = {d_used:e}",
            pair.i, pair.j
        )));
    }
    Ok(())
}

fn t3_single(
    pair: &MatchedPair,
    samples: &Samples,
    lipschitz: f64,
    d_used: f64,
    variant: FormulaVariant,
    th: &Thresholds,
) -> Result<BoundReport> {
    check_inputs(pair, samples, d_used, &[lipschitz])?;
    let g = samples.require_g()?;
    let xdot = samples.require_xdot()?;
    let (i, j) = (pair.i, pair.j);
    let (ci, cj, gi, gj) = (samples.c[i], samples.c[j], g[i], g[j]);
    let gap = ci - cj;
    if !(gap.abs() >= th.c_gap) {
        return Err(Error::DegeneratePair { i, j, gap: gap.abs() });
    }
    if !(gi.abs() >= th.g) {
        return Err(Error::GZero { index: i, value: gi.abs() });
    }
    let (radius, denominator) = t3_beta_radius(ci, cj, gi, gj, lipschitz, d_used, variant);
    if !(denominator.abs() >= th.denominator) {
        return Err(Error::Unbounded { denominator: denominator.abs() });
    }
    // The estimate always uses the two-point elimination; the variant only
    // changes the radius.
    let two_point = gi * cj - gj * ci;
    if !(two_point.abs() >= th.denominator) {
        return Err(Error::Unbounded { denominator: two_point.abs() });
    }
    let beta_bar = (cj * (xdot[i] - samples.d[i]) - ci * (xdot[j] - samples.d[j])) / two_point;
    let mut u_estimates = BTreeMap::new();
    let mut u_radii = BTreeMap::new();
    for p in 0..samples.len() {
        let cp = samples.c[p];
        if cp.abs() > th.c_value {
            u_estimates.insert(p, (xdot[p] - beta_bar * g[p] - samples.d[p]) / cp);
            u_radii.insert(p, (g[p] / cp).abs() * radius);
        }
    }
    Ok(BoundReport {
        theorem: Theorem::T3,
        variant,
        pair: MatchedPair::between(samples, i, j),
        lipschitz_u: lipschitz,
        lipschitz_g: None,
        d_used,
        c_i: ci,
        c_j: cj,
        g_i: Some(gi),
        g_j: Some(gj),
        denominator: Some(denominator),
        beta_estimate: Some(beta_bar),
        beta_radius: Some(radius),
        u_estimates,
        u_radii,
        g_estimates: BTreeMap::new(),
        g_radii: BTreeMap::new(),
        thresholds: *th,
    })
}

fn t4_single(
    pair: &MatchedPair,
    samples: &Samples,
    l1: f64,
    l2: f64,
    d_used: f64,
    variant: FormulaVariant,
    th: &Thresholds,
) -> Result<BoundReport> {
    check_inputs(pair, samples, d_used, &[l1, l2])?;
    let xdot = samples.require_xdot()?;
    let (i, j) = (pair.i, pair.j);
    let (ci, cj) = (samples.c[i], samples.c[j]);
    let gap = ci - cj;
    if !(gap.abs() >= th.c_gap) {
        return Err(Error::DegeneratePair { i, j, gap: gap.abs() });
    }
    let u_radius = t4_u_radius(ci, cj, l1, l2, d_used, variant);
    let u_bar = (xdot[i] - xdot[j] - samples.d[i] + samples.d[j]) / gap;
    let g_bar = xdot[i] - ci * u_bar - samples.d[i];
    Ok(BoundReport {
        theorem: Theorem::T4,
        variant,
        pair: MatchedPair::between(samples, i, j),
        lipschitz_u: l2,
        lipschitz_g: Some(l1),
        d_used,
        c_i: ci,
        c_j: cj,
        g_i: None,
        g_j: None,
        denominator: Some(gap),
        beta_estimate: None,
        beta_radius: None,
        u_estimates: BTreeMap::from([(i, u_bar)]),
        u_radii: BTreeMap::from([(i, u_radius)]),
        g_estimates: BTreeMap::from([(i, g_bar)]),
        g_radii: BTreeMap::from([(i, ci.abs() * u_radius)]),
        thresholds: *th,
    })
}

/// Picks the candidate with the smallest radius (ties: smaller y
/// distance). Candidates violating a hypothesis are skipped; if none
/// survives, the first error is returned.
fn select(
    pairs: &[MatchedPair],
    mut bound: impl FnMut(&MatchedPair) -> Result<BoundReport>,
    radius: impl Fn(&BoundReport) -> f64,
) -> Result<BoundReport> {
    let mut best: Option<BoundReport> = None;
    let mut first_err = None;
    for pair in pairs {
        match bound(pair) {
            Ok(report) => {
                let better = match &best {
                    None => true,
                    Some(b) => {
                        let (r, rb) = (radius(&report), radius(b));
                        r < rb || (r == rb && report.pair.y_distance < b.pair.y_distance)
                    }
                };
                if better {
                    best = Some(report);
                }
            }
            Err(e) => {
                if first_err.is_none() {
                    first_err = Some(e);
                }
            }
        }
    }
    best.ok_or_else(|| first_err.unwrap_or(Error::NoMatchedPairs))
}

/// Known-`g` radii over the candidate pairs, choosing the pair that
/// minimizes the radius of the constant.
pub fn bound_t3(
    pairs: &[MatchedPair],
    samples: &Samples,
    lipschitz: f64,
    d_used: f64,
    variant: FormulaVariant,
    th: &Thresholds,
) -> Result<BoundReport> {
    select(
        pairs,
        |p| t3_single(p, samples, lipschitz, d_used, variant, th),
        |r| r.beta_radius.unwrap_or(f64::INFINITY),
    )
}

/// Unknown-`g` radii over the candidate pairs, choosing the pair that
/// minimizes the radius of `u`.
pub fn bound_t4(
    pairs: &[MatchedPair],
    samples: &Samples,
    l1: f64,
    l2: f64,
    d_used: f64,
    variant: FormulaVariant,
    th: &Thresholds,
) -> Result<BoundReport> {
    select(
        pairs,
        |p| t4_single(p, samples, l1, l2, d_used, variant, th),
        |r| r.u_radii.values().copied().next().unwrap_or(f64::INFINITY),
    )
}
