//! Both stages end to end: VR beliefs from the turbo detector, then
//! belief-weighted greedy recovery in the wavenumber domain.

use serde::{Deserialize, Serialize};

use crate::bbomp::{bb_omp, build_sensing, reconstruct, SparseEstimate};
use crate::channel::WavenumberCodebook;
use crate::observation::CombinerMatrix;
use crate::vrdomp::{run_vrdomp, VrdompConfig, VrdompOutput};
use crate::{CVector, Result};

/// Which beliefs weight the stage-two dictionary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BeliefMode {
    /// ψ^post as is.
    Soft,
    /// The thresholded region α̂.
    Hard,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TsVdceConfig {
    pub vrdomp: VrdompConfig,
    pub mode: BeliefMode,
    /// Atom budget; `None` means M/2.
    pub max_support: Option<usize>,
    /// Residual stop relative to ‖y‖.
    pub relative_residual_tol: f64,
}

impl Default for TsVdceConfig {
    fn default() -> Self {
        Self {
            vrdomp: VrdompConfig::default(),
            mode: BeliefMode::Soft,
            max_support: None,
            relative_residual_tol: 1e-3,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TsVdceOutput {
    pub stage_one: VrdompOutput,
    /// Beliefs actually used to weight Φ̂.
    pub beliefs: Vec<f64>,
    pub sparse: SparseEstimate,
    pub x_hat: CVector,
}

/// Estimate beliefs from `y`, then recover x̂ = diag(b)·F·ĥ_a with b the
/// soft or hard beliefs per `config.mode`.
pub fn ts_vdce(
    y: &CVector,
    combiner: &CombinerMatrix,
    codebook: &WavenumberCodebook,
    config: &TsVdceConfig,
) -> Result<TsVdceOutput> {
    let stage_one = run_vrdomp(y, combiner, &config.vrdomp)?;
    let beliefs = match config.mode {
        BeliefMode::Soft => stage_one.belief.posterior.clone(),
        BeliefMode::Hard => stage_one.belief.detected.as_weights(),
    };
    let (sparse, x_hat) = estimate_with_beliefs(y, combiner, codebook, &beliefs, config)?;
    Ok(TsVdceOutput {
        stage_one,
        beliefs,
        sparse,
        x_hat,
    })
}

/// Stage two alone with caller-supplied beliefs.
///
/// Beliefs that annihilate every atom (an empty hard region) give the zero
/// estimate rather than an error.
pub fn estimate_with_beliefs(
    y: &CVector,
    combiner: &CombinerMatrix,
    codebook: &WavenumberCodebook,
    beliefs: &[f64],
    config: &TsVdceConfig,
) -> Result<(SparseEstimate, CVector)> {
    let sensing = build_sensing(combiner, beliefs, codebook)?;
    if sensing.is_degenerate() {
        let sparse = SparseEstimate {
            support: Vec::new(),
            coefficients: CVector::zeros(codebook.num_atoms()),
            residual_norms: vec![y.norm()],
        };
        return Ok((sparse, CVector::zeros(codebook.num_antennas())));
    }
    let k = config
        .max_support
        .unwrap_or(combiner.num_measurements() / 2)
        .min(combiner.num_measurements());
    let sparse = bb_omp(y, &sensing, k, config.relative_residual_tol * y.norm())?;
    let x_hat = reconstruct(beliefs, codebook, &sparse.coefficients)?;
    Ok((sparse, x_hat))
}
