//! Scalar performance metrics and the per-trial record.

use serde::{Deserialize, Serialize};

use crate::channel::VisibilityRegion;
use crate::{CVector, Error, Result};

/// Fraction of antennas whose visibility is misclassified.
pub fn vrer(truth: &VisibilityRegion, estimate: &VisibilityRegion) -> Result<f64> {
    if truth.len() != estimate.len() {
        return Err(Error::DimensionMismatch(format!(
            "VR lengths {} and {}",
            truth.len(),
            estimate.len()
        )));
    }
    if truth.is_empty() {
        return Ok(0.0);
    }
    let wrong = truth
        .indicator()
        .iter()
        .zip(estimate.indicator())
        .filter(|(a, b)| a != b)
        .count();
    Ok(wrong as f64 / truth.len() as f64)
}

/// ‖x̂ − x‖²/‖x‖².
pub fn nmse(truth: &CVector, estimate: &CVector) -> Result<f64> {
    if truth.len() != estimate.len() {
        return Err(Error::DimensionMismatch(format!(
            "channel lengths {} and {}",
            truth.len(),
            estimate.len()
        )));
    }
    let reference = truth.norm_squared();
    if reference == 0.0 {
        return Err(Error::ZeroReference);
    }
    Ok((estimate - truth).norm_squared() / reference)
}

/// log₂(1 + |x^H x̂|²/σ_N²) with x̂ used unnormalised as the precoder.
pub fn se(truth: &CVector, estimate: &CVector, noise_var: f64) -> Result<f64> {
    if truth.len() != estimate.len() {
        return Err(Error::DimensionMismatch(format!(
            "channel lengths {} and {}",
            truth.len(),
            estimate.len()
        )));
    }
    if !(noise_var > 0.0) {
        return Err(Error::InvalidParameter(format!("noise variance must be positive, got {noise_var}")));
    }
    let gain = truth.dotc(estimate).norm_sqr();
    Ok((1.0 + gain / noise_var).log2())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub seed: u64,
    pub grid_index: usize,
    pub trial: usize,
    pub snr_db: f64,
    pub pilot_slots: usize,
    pub psi: f64,
    pub algorithm: String,
    /// Absent for estimators that do not detect a VR.
    pub vrer: Option<f64>,
    /// Absent for detectors that do not estimate the channel.
    pub nmse: Option<f64>,
    pub se: Option<f64>,
    pub runtime: f64,
    /// Set when a module error aborted the trial.
    pub error: Option<String>,
}

impl TrialRecord {
    pub fn succeeded(&self) -> bool {
        self.error.is_none()
    }
}
