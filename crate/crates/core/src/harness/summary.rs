//! Aggregation of trial records into actual-vs-predicted statistics.

use serde::{Deserialize, Serialize};

use crate::harness::{HarnessError, TrialRecord};

/// Per-axis statistics over the accepted trials of one experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryTable {
    /// Unbiased sample standard deviation of the errors, per axis
    /// (meters / radians).
    pub actual_sigma: [f64; 6],
    /// Mean of the per-trial predicted sigmas, per axis.
    pub mean_predicted_sigma: [f64; 6],
    /// Mean error per axis.
    pub mean_error: [f64; 6],
    pub rejected: usize,
    pub total: usize,
}

impl SummaryTable {
    pub fn accepted(&self) -> usize {
        self.total - self.rejected
    }

    /// Per-axis `actual / mean predicted` consistency ratios.
    pub fn consistency_ratios(&self) -> [f64; 6] {
        let mut out = [0.0; 6];
        for k in 0..6 {
            out[k] = self.actual_sigma[k] / self.mean_predicted_sigma[k];
        }
        out
    }
}

/// Pools all accepted trials: per-axis error standard deviation (unbiased),
/// mean predicted sigma, mean error, and the reject count.
pub fn summarize(records: &[TrialRecord]) -> Result<SummaryTable, HarnessError> {
    let accepted: Vec<&TrialRecord> = records.iter().filter(|r| r.accepted()).collect();
    if accepted.len() < 2 {
        return Err(HarnessError::InsufficientData {
            accepted: accepted.len(),
        });
    }
    let n = accepted.len() as f64;
    let mut mean_error = [0.0; 6];
    let mut mean_pred = [0.0; 6];
    for r in &accepted {
        let err = r.error.expect("accepted records carry an error vector");
        let sig = r
            .predicted_sigma
            .expect("accepted records carry a prediction");
        for k in 0..6 {
            mean_error[k] += err[k] / n;
            mean_pred[k] += sig[k] / n;
        }
    }
    let mut actual = [0.0; 6];
    for r in &accepted {
        let err = r.error.unwrap();
        for k in 0..6 {
            actual[k] += (err[k] - mean_error[k]).powi(2);
        }
    }
    for a in &mut actual {
        *a = (*a / (n - 1.0)).sqrt();
    }
    Ok(SummaryTable {
        actual_sigma: actual,
        mean_predicted_sigma: mean_pred,
        mean_error,
        rejected: records.len() - accepted.len(),
        total: records.len(),
    })
}
