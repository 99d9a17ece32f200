//! Stage two: greedy sparse recovery in the wavenumber domain over the
//! belief-weighted dictionary Φ̂ = A·diag(b)·F, plus the LS and RFEB
//! baselines.

use serde::{Deserialize, Serialize};

use crate::channel::{effective_bandwidth, ArrayGeometry, UserLocation, VisibilityRegion, WavenumberCodebook};
use crate::math::median;
use crate::observation::CombinerMatrix;
use crate::{CMatrix, CVector, Error, Result, C64};

/// Columns whose norm is below this fraction of the largest column norm are
/// treated as annihilated.
pub(crate) const ZERO_COLUMN_REL: f64 = 1e-12;
/// An atom is rank deficient once less than this fraction of its norm
/// survives orthogonalisation against the current support.
const RANK_REL: f64 = 1e-10;

#[derive(Debug, Clone)]
pub struct SensingMatrix {
    phi: CMatrix,
    beliefs: Vec<f64>,
    column_norms: Vec<f64>,
}

impl SensingMatrix {
    pub fn matrix(&self) -> &CMatrix {
        &self.phi
    }

    pub fn beliefs(&self) -> &[f64] {
        &self.beliefs
    }

    pub fn column_norms(&self) -> &[f64] {
        &self.column_norms
    }

    pub fn num_atoms(&self) -> usize {
        self.phi.ncols()
    }

    /// True if every column vanished.
    pub fn is_degenerate(&self) -> bool {
        self.column_norms.iter().all(|&c| c == 0.0)
    }
}

/// Φ̂ = A·diag(beliefs)·F, one column per codebook atom.
pub fn build_sensing(
    combiner: &CombinerMatrix,
    beliefs: &[f64],
    codebook: &WavenumberCodebook,
) -> Result<SensingMatrix> {
    let n = combiner.num_antennas();
    if beliefs.len() != n || codebook.num_antennas() != n {
        return Err(Error::DimensionMismatch(format!(
            "combiner has {n} antennas, beliefs {}, codebook {}",
            beliefs.len(),
            codebook.num_antennas()
        )));
    }
    let f = codebook.matrix();
    let (m, l) = (combiner.num_measurements(), codebook.num_atoms());
    let mut phi = CMatrix::zeros(m, l);
    let mut column = CVector::zeros(n);
    for j in 0..l {
        for (i, b) in beliefs.iter().enumerate() {
            column[i] = f[(i, j)] * *b;
        }
        phi.set_column(j, &combiner.apply(&column));
    }
    let column_norms = phi.column_iter().map(|c| c.norm()).collect();
    Ok(SensingMatrix {
        phi,
        beliefs: beliefs.to_vec(),
        column_norms,
    })
}

#[derive(Debug, Clone)]
pub struct SparseEstimate {
    /// Selected atoms in selection order.
    pub support: Vec<usize>,
    /// ĥ_a, zero off the support.
    pub coefficients: CVector,
    /// ‖r_t‖ for t = 0 (‖y‖) through the last accepted step.
    pub residual_norms: Vec<f64>,
}

impl SparseEstimate {
    pub fn residual_norm(&self) -> f64 {
        *self.residual_norms.last().expect("history starts with ‖y‖")
    }
}

/// Greedy recovery of y ≈ Φ̂ ĥ_a with at most `max_support` atoms.
///
/// Each step picks the unchosen column with the largest normalised
/// correlation |Φ̂_j^H r|/‖Φ̂_j‖ (lowest index on ties) and refits all
/// coefficients by least squares through an incremental QR factorisation.
/// Stops at `max_support` atoms, once ‖r‖ ≤ `residual_tol`, when the
/// residual stops decreasing, or when the new atom is linearly dependent on
/// the support (that atom is dropped).
pub fn bb_omp(y: &CVector, sensing: &SensingMatrix, max_support: usize, residual_tol: f64) -> Result<SparseEstimate> {
    let phi = &sensing.phi;
    let (m, l) = phi.shape();
    if y.len() != m {
        return Err(Error::DimensionMismatch(format!("pilot length {} vs Φ̂ rows {m}", y.len())));
    }
    if max_support > m {
        return Err(Error::InvalidParameter(format!("support size {max_support} exceeds M = {m}")));
    }
    if sensing.is_degenerate() {
        return Err(Error::DegenerateSensing);
    }
    let max_norm = sensing.column_norms.iter().cloned().fold(0.0, f64::max);
    let usable: Vec<bool> = sensing
        .column_norms
        .iter()
        .map(|&c| c > ZERO_COLUMN_REL * max_norm)
        .collect();

    let mut chosen = vec![false; l];
    let mut support = Vec::new();
    let mut q_cols: Vec<CVector> = Vec::new();
    // R stored by column: r_cols[k][i] = R[i, k] for i ≤ k.
    let mut r_cols: Vec<Vec<C64>> = Vec::new();
    // Q^H y.
    let mut qty: Vec<C64> = Vec::new();
    let mut residual = y.clone();
    let mut history = vec![residual.norm()];

    while support.len() < max_support && *history.last().unwrap() > residual_tol {
        let corr = phi.ad_mul(&residual);
        let mut best: Option<(usize, f64)> = None;
        for j in 0..l {
            if chosen[j] || !usable[j] {
                continue;
            }
            let score = corr[j].norm() / sensing.column_norms[j];
            if best.is_none_or(|(_, s)| score > s) {
                best = Some((j, score));
            }
        }
        let Some((j, _)) = best else { break };

        // Modified Gram–Schmidt with one reorthogonalisation pass.
        let mut q = phi.column(j).into_owned();
        let mut r = vec![C64::new(0.0, 0.0); q_cols.len() + 1];
        for _ in 0..2 {
            for (i, qi) in q_cols.iter().enumerate() {
                let c = qi.dotc(&q);
                q -= qi * c;
                r[i] += c;
            }
        }
        let tail = q.norm();
        if tail <= RANK_REL * sensing.column_norms[j] {
            break;
        }
        q /= C64::new(tail, 0.0);
        let proj = q.dotc(y);
        let next = &residual - &q * proj;
        let next_norm = next.norm();
        if next_norm >= *history.last().unwrap() {
            break;
        }
        r[q_cols.len()] = C64::new(tail, 0.0);
        chosen[j] = true;
        support.push(j);
        q_cols.push(q);
        r_cols.push(r);
        qty.push(proj);
        residual = next;
        history.push(next_norm);
    }

    // Back substitution R c = Q^H y.
    let t = support.len();
    let mut c = vec![C64::new(0.0, 0.0); t];
    for i in (0..t).rev() {
        let mut acc = qty[i];
        for k in i + 1..t {
            acc -= r_cols[k][i] * c[k];
        }
        c[i] = acc / r_cols[i][i];
    }
    let mut coefficients = CVector::zeros(l);
    for (&j, v) in support.iter().zip(c) {
        coefficients[j] = v;
    }
    Ok(SparseEstimate {
        support,
        coefficients,
        residual_norms: history,
    })
}

/// x̂ = diag(beliefs)·F·ĥ_a.
pub fn reconstruct(beliefs: &[f64], codebook: &WavenumberCodebook, coefficients: &CVector) -> Result<CVector> {
    if beliefs.len() != codebook.num_antennas() || coefficients.len() != codebook.num_atoms() {
        return Err(Error::DimensionMismatch(format!(
            "beliefs {}, coefficients {} vs codebook {}×{}",
            beliefs.len(),
            coefficients.len(),
            codebook.num_antennas(),
            codebook.num_atoms()
        )));
    }
    let mut x = codebook.matrix() * coefficients;
    for (v, b) in x.iter_mut().zip(beliefs) {
        *v *= *b;
    }
    Ok(x)
}

/// Minimum-norm least squares A^H(AA^H)^{-1}y = A^H y.
pub fn ls_estimate(y: &CVector, combiner: &CombinerMatrix) -> Result<CVector> {
    if y.len() != combiner.num_measurements() {
        return Err(Error::DimensionMismatch(format!(
            "pilot length {} vs combiner rows {}",
            y.len(),
            combiner.num_measurements()
        )));
    }
    Ok(combiner.adjoint(y))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RfebConfig {
    /// Moving-average length in antennas.
    pub window: usize,
    /// Threshold as a multiple of the median smoothed power.
    pub power_th: f64,
}

impl Default for RfebConfig {
    fn default() -> Self {
        Self {
            window: 8,
            power_th: 2.0,
        }
    }
}

/// Power-edge VR detection from an antenna-domain estimate.
///
/// |x̂_n|² is smoothed with a centred moving average and compared against
/// `power_th` times its median. The first upward crossing is taken as the
/// rising edge and the last downward crossing as the falling edge, and every
/// antenna between them is declared visible. A crossing that is still open
/// at an array end closes there. Without any crossing the region is empty.
pub fn rfeb_detect(x_ls: &CVector, window: usize, power_th: f64) -> Result<VisibilityRegion> {
    if window == 0 {
        return Err(Error::InvalidParameter("RFEB window must be >= 1".into()));
    }
    let n = x_ls.len();
    let power: Vec<f64> = x_ls.iter().map(|z| z.norm_sqr()).collect();
    let mut prefix = vec![0.0; n + 1];
    for (i, p) in power.iter().enumerate() {
        prefix[i + 1] = prefix[i] + p;
    }
    let half = window / 2;
    let smooth: Vec<f64> = (0..n)
        .map(|i| {
            let lo = i.saturating_sub(half);
            let hi = (i + window - half).min(n);
            (prefix[hi] - prefix[lo]) / (hi - lo) as f64
        })
        .collect();
    let level = power_th * median(&smooth);
    let above: Vec<bool> = smooth.iter().map(|&p| p > level).collect();
    let mut indicator = vec![false; n];
    if let (Some(rise), Some(fall)) = (above.iter().position(|&a| a), above.iter().rposition(|&a| a)) {
        indicator[rise..=fall].iter_mut().for_each(|v| *v = true);
    }
    Ok(VisibilityRegion::from_indicator(indicator))
}

/// Default support size: L_e of a user 10 m broadside at the given
/// oversampling, at least 4, at most M/2.
pub fn default_sparsity(geom: &ArrayGeometry, oversampling: usize, num_measurements: usize) -> Result<usize> {
    let nominal = UserLocation::from_polar(10.0, 0.0)?;
    let (_, le) = effective_bandwidth(geom, &nominal, oversampling)?;
    Ok(le.max(4).min(num_measurements / 2).max(1))
}

/// Relative residual stop used by default: 1e−3·‖y‖.
pub fn default_residual_tol(y: &CVector) -> f64 {
    1e-3 * y.norm()
}
