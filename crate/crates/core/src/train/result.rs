use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::config::TrainConfig;
use super::metrics::Metrics;
use super::model::{TrajectoryNet, UnknownModel};
use super::residual::LossBreakdown;
use crate::error::{Error, Result};
use crate::ode::StructuredSystem;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitMode {
    Direct,
    Upinn,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstantEstimate {
    pub name: String,
    pub component: usize,
    pub initial: f64,
    pub value: f64,
    pub truth: Option<f64>,
}

impl ConstantEstimate {
    pub fn percent_error(&self) -> Option<f64> {
        self.truth.map(|t| 100.0 * (self.value - t).abs() / t.abs())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossRecord {
    pub epoch: usize,
    pub total: f64,
    pub data: f64,
    pub ode: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub mode: FitMode,
    pub system: String,
    pub constants: Vec<ConstantEstimate>,
    pub final_loss: LossBreakdown,
    pub metrics: Metrics,
    pub epochs_run: usize,
    pub config: TrainConfig,
    pub model: UnknownModel,
    pub trajectory: Option<TrajectoryNet>,
    #[serde(skip)]
    pub history: Vec<LossRecord>,
}

impl FitResult {
    pub fn constant(&self, name: &str) -> Option<&ConstantEstimate> {
        self.constants.iter().find(|c| c.name == name)
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(Error::from)
    }

    pub fn history_csv(&self) -> String {
        let mut out = String::from("epoch,total,data,ode\n");
        for r in &self.history {
            let _ = writeln!(out, "{},{:?},{:?},{:?}", r.epoch, r.total, r.data, r.ode);
        }
        out
    }
}

pub(crate) fn constant_estimates(system: &StructuredSystem, model: &UnknownModel) -> Vec<ConstantEstimate> {
    model
        .components
        .iter()
        .filter_map(|c| {
            let term = system.structured().find(|(q, _)| *q == c.component)?.1;
            Some(ConstantEstimate {
                name: c.constant_name.clone()?,
                component: c.component,
                initial: c.constant_initial?,
                value: c.constant?,
                truth: term.beta_true(),
            })
        })
        .collect()
}

/// Tracks the running best loss for plateau detection.
#[derive(Debug, Default)]
pub(crate) struct Plateau {
    best: Vec<f64>,
}

impl Plateau {
    /// Records `loss`; true when the configured plateau criterion fires.
    pub fn observe(&mut self, loss: f64, window: usize, min_rel: f64) -> bool {
        let best = self.best.last().map_or(loss, |b| b.min(loss));
        self.best.push(best);
        let n = self.best.len();
        if n <= window {
            return false;
        }
        let before = self.best[n - 1 - window];
        before > 0.0 && (before - best) / before < min_rel
    }
}
