use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Magnitude below which a reference value is left out of MAPE.
pub const MAPE_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub mse: f64,
    /// Coefficient of determination, per column then averaged.
    pub r2: f64,
    /// Mean absolute percentage error, in percent.
    pub mape: f64,
    pub mape_skipped: usize,
}

/// Metrics over the columns of `(samples, components)` arrays.
pub fn evaluate_metrics(predictions: ArrayView2<'_, f64>, reference: ArrayView2<'_, f64>) -> Result<Metrics> {
    if reference.is_empty() {
        return Err(Error::Usage("metrics need a non-empty reference".into()));
    }
    if predictions.dim() != reference.dim() {
        return Err(Error::Usage(format!(
            "prediction shape {:?} differs from reference shape {:?}",
            predictions.dim(),
            reference.dim()
        )));
    }
    let count = reference.len() as f64;
    let mut sq = 0.0;
    let mut ape = 0.0;
    let mut ape_n = 0usize;
    let mut skipped = 0usize;
    for (p, r) in predictions.iter().zip(reference.iter()) {
        let e = p - r;
        sq += e * e;
        if r.abs() < MAPE_FLOOR {
            skipped += 1;
        } else {
            ape += (e / r).abs();
            ape_n += 1;
        }
    }
    let mut r2_sum = 0.0;
    for (pc, rc) in predictions.columns().into_iter().zip(reference.columns()) {
        let mean = rc.mean().unwrap();
        let ss_tot: f64 = rc.iter().map(|r| (r - mean).powi(2)).sum();
        let ss_res: f64 = pc.iter().zip(rc.iter()).map(|(p, r)| (p - r).powi(2)).sum();
        r2_sum += if ss_tot > 0.0 {
            1.0 - ss_res / ss_tot
        } else if ss_res == 0.0 {
            1.0
        } else {
            0.0
        };
    }
    Ok(Metrics {
        mse: sq / count,
        r2: r2_sum / reference.ncols() as f64,
        mape: if ape_n > 0 { 100.0 * ape / ape_n as f64 } else { 0.0 },
        mape_skipped: skipped,
    })
}

/// Metrics for a single series.
pub fn evaluate_series(predictions: &[f64], reference: &[f64]) -> Result<Metrics> {
    let p = ArrayView2::from_shape((predictions.len(), 1), predictions)
        .map_err(|e| Error::Usage(e.to_string()))?;
    let r = ArrayView2::from_shape((reference.len(), 1), reference)
        .map_err(|e| Error::Usage(e.to_string()))?;
    evaluate_metrics(p, r)
}
