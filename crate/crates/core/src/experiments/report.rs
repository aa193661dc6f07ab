//! Checks on aggregated sweep results.

use serde::{Deserialize, Serialize};

use super::{SweepRecord, OPTIMAL_GAUSSIAN_ID, PIECEWISE_RFM_ID, POLYNOMIAL_RFM_ID};
use crate::error::{Error, Result};

pub const DEFAULT_EQUIVALENCE_TOLERANCE: f64 = 0.05;

/// `|value - reference| / reference`, with `0/0 = 0`.
pub fn relative_gap(value: f64, reference: f64) -> f64 {
    if value == reference {
        0.0
    } else {
        (value - reference).abs() / reference.abs()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EquivalenceRow {
    pub ratio: f64,
    pub rfm_id: String,
    pub gaussian_id: String,
    /// Gaps relative to the Gaussian model's trial-averaged errors.
    pub train_gap: f64,
    pub gen_gap: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EquivalenceReport {
    pub tolerance: f64,
    pub rows: Vec<EquivalenceRow>,
    pub pass: bool,
}

/// The Gaussian twin of an RFM row: `gauss:<sigma>` for `rfm:<sigma>`, and
/// the optimal Gaussian model for the synthesized activations.
fn twin(rfm_id: &str) -> Option<String> {
    if rfm_id == POLYNOMIAL_RFM_ID || rfm_id == PIECEWISE_RFM_ID {
        return Some(OPTIMAL_GAUSSIAN_ID.to_string());
    }
    rfm_id.strip_prefix("rfm:").map(|sigma| format!("gauss:{sigma}"))
}

/// Relative train and generalization gaps between every RFM row and its
/// Gaussian twin. A pair passes when both gaps are within `tolerance`.
pub fn equivalence_report(sweep: &[SweepRecord], tolerance: f64) -> Result<EquivalenceReport> {
    let mut rows = Vec::new();
    for record in sweep {
        for rfm in record.models.iter().filter(|r| r.model_id.starts_with("rfm:")) {
            let gaussian_id = twin(&rfm.model_id).expect("rfm prefix checked");
            let gaussian = record
                .model(&gaussian_id)
                .ok_or_else(|| Error::MissingPair(rfm.model_id.clone()))?;
            let train_gap = relative_gap(rfm.train_error.mean, gaussian.train_error.mean);
            let gen_gap = relative_gap(rfm.gen_error.mean, gaussian.gen_error.mean);
            rows.push(EquivalenceRow {
                ratio: record.ratio,
                rfm_id: rfm.model_id.clone(),
                gaussian_id,
                train_gap,
                gen_gap,
                pass: train_gap <= tolerance && gen_gap <= tolerance,
            });
        }
    }
    if rows.is_empty() {
        return Err(Error::MissingPair("(no RFM rows in the sweep)".into()));
    }
    let pass = rows.iter().all(|r| r.pass);
    Ok(EquivalenceReport { tolerance, rows, pass })
}

/// `(ratio, mean generalization error)` of one model across the sweep.
pub fn model_curve(sweep: &[SweepRecord], model_id: &str) -> Vec<(f64, f64)> {
    sweep
        .iter()
        .filter_map(|r| r.model(model_id).map(|m| (r.ratio, m.gen_error.mean)))
        .collect()
}

/// True iff no step of the curve rises by more than `slack * (1 + e)`, where
/// `e` is the error before the step.
pub fn monotonicity_check(curve: &[(f64, f64)], slack: f64) -> bool {
    curve.windows(2).all(|w| w[1].1 - w[0].1 <= slack * (1.0 + w[0].1))
}
