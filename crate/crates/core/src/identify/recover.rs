//! Closed-form recovery from exactly matched pairs.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::pairs::MatchedPair;
use super::samples::{Samples, Thresholds};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Theorem {
    /// Known `g`, unknown constant and `u`, exact pair.
    T1,
    /// Unknown `g` and `u`, exact pair.
    T2,
    /// As T1 with a Lipschitz `u` and an approximate pair.
    T3,
    /// As T2 with Lipschitz `g`, `u` and an approximate pair.
    T4,
}

/// Which hypotheses held for the pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Conditions {
    pub y_match: bool,
    pub c_gap_nonzero: bool,
    /// Only checked where the theorem requires it.
    pub g_nonzero: Option<bool>,
}

impl Conditions {
    pub fn all(&self) -> bool {
        self.y_match && self.c_gap_nonzero && self.g_nonzero.unwrap_or(true)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    pub theorem: Theorem,
    pub pair: MatchedPair,
    pub conditions_met: Conditions,
    pub recovered_beta: Option<f64>,
    pub recovered_u_values: BTreeMap<usize, f64>,
    pub recovered_g_values: BTreeMap<usize, f64>,
}

impl Certificate {
    fn unmet(theorem: Theorem, pair: MatchedPair, conditions_met: Conditions) -> Self {
        Certificate {
            theorem,
            pair,
            conditions_met,
            recovered_beta: None,
            recovered_u_values: BTreeMap::new(),
            recovered_g_values: BTreeMap::new(),
        }
    }
}

fn check_pair(pair: &MatchedPair, samples: &Samples) -> Result<()> {
    let m = samples.len();
    if pair.i >= m || pair.j >= m || pair.i == pair.j {
        return Err(Error::Config(format!(
            "pair ({}, {}) is not two distinct indices below {m}",
            pair.i, pair.j
        )));
    }
    Ok(())
}

/// `u` at the shared coordinate: the difference of the two equations
/// eliminates the growth term.
fn u_from_pair(i: usize, j: usize, s: &Samples, xdot: &[f64], th: &Thresholds) -> Result<f64> {
    let gap = s.c[i] - s.c[j];
    if !(gap.abs() >= th.c_gap) {
        return Err(Error::DegeneratePair { i, j, gap: gap.abs() });
    }
    Ok(((xdot[i] - xdot[j]) + s.d[j] - s.d[i]) / gap)
}

/// Known-`g` recovery: `u(ȳ)` from the pair, then the constant, then `u`
/// at every sample where `C` does not vanish.
pub fn recover_t1(pair: &MatchedPair, samples: &Samples, th: &Thresholds) -> Result<Certificate> {
    check_pair(pair, samples)?;
    let xdot = samples.require_xdot()?;
    let g = samples.require_g()?;
    let (i, j) = (pair.i, pair.j);
    let pair = MatchedPair::between(samples, i, j);
    let conditions = Conditions {
        y_match: pair.y_distance <= th.y_match,
        c_gap_nonzero: pair.c_gap.abs() >= th.c_gap,
        g_nonzero: Some(g[i].abs() >= th.g),
    };
    if !conditions.y_match {
        return Ok(Certificate::unmet(Theorem::T1, pair, conditions));
    }
    let u_bar = u_from_pair(i, j, samples, xdot, th)?;
    if !(g[i].abs() >= th.g) {
        return Err(Error::GZero { index: i, value: g[i].abs() });
    }
    let beta = (xdot[i] - samples.c[i] * u_bar - samples.d[i]) / g[i];
    let mut u_values = BTreeMap::new();
    for p in 0..samples.len() {
        if samples.c[p].abs() > th.c_value {
            u_values.insert(p, (xdot[p] - beta * g[p] - samples.d[p]) / samples.c[p]);
        }
    }
    // The pair's own value comes straight from the difference formula.
    u_values.insert(i, u_bar);
    u_values.insert(j, u_bar);
    Ok(Certificate {
        theorem: Theorem::T1,
        pair,
        conditions_met: conditions,
        recovered_beta: Some(beta),
        recovered_u_values: u_values,
        recovered_g_values: BTreeMap::new(),
    })
}

/// Unknown-`g` recovery at the two indices of one pair.
pub fn recover_t2(pair: &MatchedPair, samples: &Samples, th: &Thresholds) -> Result<Certificate> {
    check_pair(pair, samples)?;
    let xdot = samples.require_xdot()?;
    let (i, j) = (pair.i, pair.j);
    let pair = MatchedPair::between(samples, i, j);
    let conditions = Conditions {
        y_match: pair.y_distance <= th.y_match,
        c_gap_nonzero: pair.c_gap.abs() >= th.c_gap,
        g_nonzero: None,
    };
    if !conditions.y_match {
        return Ok(Certificate::unmet(Theorem::T2, pair, conditions));
    }
    let u = u_from_pair(i, j, samples, xdot, th)?;
    let mut cert = Certificate::unmet(Theorem::T2, pair, conditions);
    for p in [i, j] {
        cert.recovered_u_values.insert(p, u);
        cert.recovered_g_values
            .insert(p, xdot[p] - samples.c[p] * u - samples.d[p]);
    }
    Ok(cert)
}

/// Unknown-`g` recovery at every index that takes part in one of `pairs`;
/// each index uses the first listed pair it belongs to. Pairs violating
/// the hypotheses are skipped. The returned certificate carries the first
/// usable pair.
pub fn recover_t2_all(pairs: &[MatchedPair], samples: &Samples, th: &Thresholds) -> Result<Certificate> {
    let mut merged: Option<Certificate> = None;
    let mut last_err = None;
    for pair in pairs {
        match recover_t2(pair, samples, th) {
            Ok(cert) if cert.conditions_met.all() => match merged.as_mut() {
                None => merged = Some(cert),
                Some(m) => {
                    for (k, v) in cert.recovered_u_values {
                        m.recovered_u_values.entry(k).or_insert(v);
                    }
                    for (k, v) in cert.recovered_g_values {
                        m.recovered_g_values.entry(k).or_insert(v);
                    }
                }
            },
            Ok(_) => {}
            Err(e) => last_err = Some(e),
        }
    }
    merged.ok_or_else(|| last_err.unwrap_or(Error::NoMatchedPairs))
}
