//! Near-field line-of-sight channels, the wavenumber-domain codebook and
//! visibility regions.
//!
//! The array is a uniform linear array along the x-axis, centred at the
//! origin. Users live in the xy-plane; azimuth is measured from broadside
//! (the +y axis), so a user at `(r, θ)` sits at `(r sin θ, r cos θ, 0)`.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector, Vector3};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::math::complex_gaussian;
use crate::{CMatrix, CVector, Error, Result, C64};

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

#[derive(Debug, Clone, PartialEq)]
pub struct ArrayGeometry {
    num_antennas: usize,
    wavelength: f64,
    spacing: f64,
    positions: Vec<Vector3<f64>>,
}

impl ArrayGeometry {
    /// Half-wavelength spaced ULA.
    pub fn new(num_antennas: usize, wavelength: f64) -> Result<Self> {
        Self::with_spacing(num_antennas, wavelength, wavelength / 2.0)
    }

    pub fn from_carrier(num_antennas: usize, carrier_hz: f64) -> Result<Self> {
        if !(carrier_hz > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "carrier frequency must be positive, got {carrier_hz}"
            )));
        }
        Self::new(num_antennas, SPEED_OF_LIGHT / carrier_hz)
    }

    pub fn with_spacing(num_antennas: usize, wavelength: f64, spacing: f64) -> Result<Self> {
        if num_antennas == 0 {
            return Err(Error::InvalidParameter("array needs at least one antenna".into()));
        }
        if !(wavelength > 0.0) || !(spacing > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "wavelength and spacing must be positive (got {wavelength}, {spacing})"
            )));
        }
        let centre = (num_antennas as f64 + 1.0) / 2.0;
        let positions = (1..=num_antennas)
            .map(|n| Vector3::new((n as f64 - centre) * spacing, 0.0, 0.0))
            .collect();
        Ok(Self {
            num_antennas,
            wavelength,
            spacing,
            positions,
        })
    }

    pub fn num_antennas(&self) -> usize {
        self.num_antennas
    }

    pub fn wavelength(&self) -> f64 {
        self.wavelength
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn positions(&self) -> &[Vector3<f64>] {
        &self.positions
    }

    /// k₀ = 2π/λ.
    pub fn wavenumber(&self) -> f64 {
        2.0 * PI / self.wavelength
    }

    /// D = N·d.
    pub fn aperture(&self) -> f64 {
        self.num_antennas as f64 * self.spacing
    }

    pub fn rayleigh_distance(&self) -> f64 {
        2.0 * self.aperture().powi(2) / self.wavelength
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UserLocation {
    position: Vector3<f64>,
}

impl UserLocation {
    pub fn from_cartesian(position: Vector3<f64>) -> Result<Self> {
        if !(position.norm() > 0.0) {
            return Err(Error::DegenerateGeometry(
                "user must not sit at the array centre".into(),
            ));
        }
        Ok(Self { position })
    }

    /// `azimuth` in radians from broadside.
    pub fn from_polar(distance: f64, azimuth: f64) -> Result<Self> {
        if !(distance > 0.0) {
            return Err(Error::DegenerateGeometry(format!(
                "user distance must be positive, got {distance}"
            )));
        }
        Self::from_cartesian(Vector3::new(
            distance * azimuth.sin(),
            distance * azimuth.cos(),
            0.0,
        ))
    }

    pub fn position(&self) -> Vector3<f64> {
        self.position
    }

    pub fn distance(&self) -> f64 {
        self.position.norm()
    }

    pub fn azimuth(&self) -> f64 {
        self.position.x.atan2(self.position.y)
    }
}

/// b(r): entry n is exp(j·k₀·r_n)/r_n with r_n = ‖s − t_n‖.
pub fn near_field_response(geom: &ArrayGeometry, user: &UserLocation) -> Result<CVector> {
    let k0 = geom.wavenumber();
    let s = user.position();
    let mut out = CVector::zeros(geom.num_antennas());
    for (entry, t) in out.iter_mut().zip(geom.positions()) {
        let r = (s - t).norm();
        if !(r > 0.0) {
            return Err(Error::DegenerateGeometry(
                "user coincides with an antenna element".into(),
            ));
        }
        *entry = C64::from_polar(1.0 / r, k0 * r);
    }
    Ok(out)
}

/// h = (λ/4π)·γ·b(r).
pub fn synthesize_stationary(geom: &ArrayGeometry, user: &UserLocation, gain: C64) -> Result<CVector> {
    let scale = gain * (geom.wavelength() / (4.0 * PI));
    Ok(near_field_response(geom, user)? * scale)
}

/// Complex path gain γ ~ CN(0, 1).
pub fn sample_gain<R: Rng + ?Sized>(rng: &mut R) -> C64 {
    complex_gaussian(rng, 1.0)
}

/// Semi-unitary plane-wave dictionary over the spatial-frequency grid
/// `{ξ ∈ ℤ : −k₀ ≤ Δξ < k₀}` with Δ = 2π/(S·D).
#[derive(Debug, Clone)]
pub struct WavenumberCodebook {
    oversampling: usize,
    grid_spacing: f64,
    indices: Vec<i64>,
    matrix: CMatrix,
}

impl WavenumberCodebook {
    pub fn oversampling(&self) -> usize {
        self.oversampling
    }

    /// Δ in rad/m.
    pub fn grid_spacing(&self) -> f64 {
        self.grid_spacing
    }

    pub fn indices(&self) -> &[i64] {
        &self.indices
    }

    /// F, N×L.
    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn num_atoms(&self) -> usize {
        self.indices.len()
    }

    pub fn num_antennas(&self) -> usize {
        self.matrix.nrows()
    }

    /// Spatial frequency Δ·ξ_l of atom `l`.
    pub fn spatial_frequency(&self, l: usize) -> f64 {
        self.grid_spacing * self.indices[l] as f64
    }
}

pub fn build_codebook(geom: &ArrayGeometry, oversampling: usize) -> Result<WavenumberCodebook> {
    if oversampling == 0 {
        return Err(Error::InvalidParameter("oversampling factor must be >= 1".into()));
    }
    let k0 = geom.wavenumber();
    let delta = 2.0 * PI / (oversampling as f64 * geom.aperture());
    // The grid edges land on integers for d = λ/2; the slack absorbs rounding.
    let slack = 1e-9;
    let lo = (-k0 / delta - slack).ceil() as i64;
    let hi = (k0 / delta - slack).ceil() as i64 - 1;
    let indices: Vec<i64> = (lo..=hi).collect();

    let n = geom.num_antennas();
    let norm = 1.0 / (n as f64).sqrt();
    let xs: Vec<f64> = geom.positions().iter().map(|p| p.x).collect();
    let matrix = DMatrix::from_fn(n, indices.len(), |row, col| {
        C64::from_polar(norm, delta * indices[col] as f64 * xs[row])
    });
    Ok(WavenumberCodebook {
        oversampling,
        grid_spacing: delta,
        indices,
        matrix,
    })
}

/// Analysis coefficients F^H h.
pub fn wavenumber_transform(h: &CVector, codebook: &WavenumberCodebook) -> Result<CVector> {
    if h.len() != codebook.num_antennas() {
        return Err(Error::DimensionMismatch(format!(
            "channel length {} vs codebook rows {}",
            h.len(),
            codebook.num_antennas()
        )));
    }
    Ok(codebook.matrix().ad_mul(h))
}

/// Effective spatial bandwidth B_e (rad/m) and the number of significant
/// grid components L_e = ⌈B_e/Δ⌉, evaluated over the discrete elements.
pub fn effective_bandwidth(
    geom: &ArrayGeometry,
    user: &UserLocation,
    oversampling: usize,
) -> Result<(f64, usize)> {
    if oversampling == 0 {
        return Err(Error::InvalidParameter("oversampling factor must be >= 1".into()));
    }
    let s = user.position();
    if s.y.hypot(s.z) == 0.0 {
        return Err(Error::DegenerateGeometry("user lies on the array axis".into()));
    }
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for t in geom.positions() {
        let d = t - s;
        let proj = d.x / d.norm();
        lo = lo.min(proj);
        hi = hi.max(proj);
    }
    let bandwidth = geom.wavenumber() * (hi - lo);
    let delta = 2.0 * PI / (oversampling as f64 * geom.aperture());
    let count = (bandwidth / delta - 1e-12).ceil().max(0.0) as usize;
    Ok((bandwidth, count))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VisibilityRegion {
    indicator: Vec<bool>,
}

impl VisibilityRegion {
    pub fn from_indicator(indicator: Vec<bool>) -> Self {
        Self { indicator }
    }

    /// From zero-based visible indices.
    pub fn from_indices(n: usize, visible: &[usize]) -> Result<Self> {
        let mut indicator = vec![false; n];
        for &i in visible {
            if i >= n {
                return Err(Error::InvalidParameter(format!(
                    "visible index {i} out of range for {n} antennas"
                )));
            }
            indicator[i] = true;
        }
        Ok(Self { indicator })
    }

    pub fn all_visible(n: usize) -> Self {
        Self {
            indicator: vec![true; n],
        }
    }

    pub fn len(&self) -> usize {
        self.indicator.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indicator.is_empty()
    }

    pub fn indicator(&self) -> &[bool] {
        &self.indicator
    }

    pub fn is_visible(&self, n: usize) -> bool {
        self.indicator[n]
    }

    /// φ, zero-based.
    pub fn visible_indices(&self) -> Vec<usize> {
        self.indicator
            .iter()
            .enumerate()
            .filter_map(|(i, &v)| v.then_some(i))
            .collect()
    }

    pub fn num_visible(&self) -> usize {
        self.indicator.iter().filter(|&&v| v).count()
    }

    /// ψ = |φ|/N.
    pub fn fill_ratio(&self) -> f64 {
        if self.indicator.is_empty() {
            return 0.0;
        }
        self.num_visible() as f64 / self.indicator.len() as f64
    }

    /// α as 0/1 reals.
    pub fn as_weights(&self) -> Vec<f64> {
        self.indicator.iter().map(|&v| if v { 1.0 } else { 0.0 }).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VrKind {
    /// One run of ⌊ψN⌋ visible elements at a uniform random offset.
    Contiguous,
    /// Two disjoint runs whose lengths sum to ⌊ψN⌋.
    TwoBlocks,
    /// A stationary first-order Markov chain with P(α=1) = ψ.
    Markov,
}

pub fn sample_vr<R: Rng + ?Sized>(
    kind: VrKind,
    psi: f64,
    p10: f64,
    n: usize,
    rng: &mut R,
) -> Result<VisibilityRegion> {
    if !(psi > 0.0 && psi <= 1.0) {
        return Err(Error::InvalidParameter(format!("fill ratio must be in (0, 1], got {psi}")));
    }
    let count = (psi * n as f64 + 1e-9).floor() as usize;
    if kind != VrKind::Markov && count < 1 {
        return Err(Error::EmptyVisibilityRegion(psi * n as f64));
    }
    if count == n {
        return Ok(VisibilityRegion::all_visible(n));
    }
    let mut indicator = vec![false; n];
    match kind {
        VrKind::Contiguous => {
            let start = rng.random_range(0..=n - count);
            indicator[start..start + count].fill(true);
        }
        VrKind::TwoBlocks => {
            if count < 2 {
                return Err(Error::InvalidParameter(format!(
                    "two blocks need at least two visible elements, got {count}"
                )));
            }
            let first = rng.random_range(1..count);
            let second = count - first;
            // At least one invisible element separates the runs; the remaining
            // `free` zeros go uniformly into the three gaps (stars and bars).
            let free = n - count - 1;
            let a = rng.random_range(0..=free);
            let b = rng.random_range(0..=free);
            let (lead, mid) = (a.min(b), a.max(b) - a.min(b));
            let start1 = lead;
            let start2 = start1 + first + 1 + mid;
            indicator[start1..start1 + first].fill(true);
            indicator[start2..start2 + second].fill(true);
        }
        VrKind::Markov => {
            if !(p10 > 0.0 && p10 < 1.0) {
                return Err(Error::InvalidParameter(format!(
                    "Markov transition probability must be in (0, 1), got {p10}"
                )));
            }
            if psi >= 1.0 {
                return Ok(VisibilityRegion::all_visible(n));
            }
            let p01 = psi * p10 / (1.0 - psi);
            if p01 > 1.0 {
                return Err(Error::InvalidParameter(format!(
                    "psi = {psi} and p10 = {p10} imply p01 = {p01} > 1"
                )));
            }
            let mut state = rng.random_bool(psi);
            for slot in indicator.iter_mut() {
                *slot = state;
                state = if state {
                    !rng.random_bool(p10)
                } else {
                    rng.random_bool(p01)
                };
            }
        }
    }
    Ok(VisibilityRegion { indicator })
}

fn check_len(a: usize, b: usize, what: &str) -> Result<()> {
    if a != b {
        return Err(Error::DimensionMismatch(format!("{what}: {a} vs {b}")));
    }
    Ok(())
}

/// x = diag(α)·h.
pub fn apply_vr(h: &CVector, vr: &VisibilityRegion) -> Result<CVector> {
    check_len(h.len(), vr.len(), "channel vs visibility region")?;
    Ok(DVector::from_iterator(
        h.len(),
        h.iter()
            .zip(vr.indicator())
            .map(|(&z, &v)| if v { z } else { C64::new(0.0, 0.0) }),
    ))
}

/// F^SnS = diag(α)·F.
pub fn sns_codebook(codebook: &WavenumberCodebook, vr: &VisibilityRegion) -> Result<CMatrix> {
    check_len(codebook.num_antennas(), vr.len(), "codebook vs visibility region")?;
    let mut out = codebook.matrix().clone();
    for (row, &visible) in vr.indicator().iter().enumerate() {
        if !visible {
            out.row_mut(row).fill(C64::new(0.0, 0.0));
        }
    }
    Ok(out)
}

/// One user's channel draw.
#[derive(Debug, Clone)]
pub struct ChannelRealization {
    pub gain: C64,
    /// h, spatially stationary.
    pub stationary: CVector,
    /// x = diag(α) h.
    pub sns: CVector,
    /// F^H h.
    pub wavenumber: CVector,
    pub vr: VisibilityRegion,
}

impl ChannelRealization {
    pub fn synthesize(
        geom: &ArrayGeometry,
        user: &UserLocation,
        gain: C64,
        vr: VisibilityRegion,
        codebook: &WavenumberCodebook,
    ) -> Result<Self> {
        let stationary = synthesize_stationary(geom, user, gain)?;
        let sns = apply_vr(&stationary, &vr)?;
        let wavenumber = wavenumber_transform(&stationary, codebook)?;
        Ok(Self {
            gain,
            stationary,
            sns,
            wavenumber,
            vr,
        })
    }
}
