//! JSON sweep configuration.
//!
//! Every block has defaults, so `{}` is a valid configuration: N = 256
//! antennas at 100 GHz with half-wavelength spacing, S = 2, users uniform in
//! 10–50 m and ±60°, contiguous VRs with ψ = 0.25, Q = 45, N_rf = 4,
//! SNR = 5 dB, 500 trials. Unknown keys are rejected.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::bbomp::RfebConfig;
use crate::channel::{ArrayGeometry, VisibilityRegion};
use crate::vrdomp::VrdompConfig;
use crate::{Error, Result};

use super::runner::Algorithm;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeometryConfig {
    pub num_antennas: usize,
    pub carrier_hz: f64,
    /// Element spacing in metres; half a wavelength when absent.
    pub spacing_m: Option<f64>,
}

impl Default for GeometryConfig {
    fn default() -> Self {
        Self {
            num_antennas: 256,
            carrier_hz: 100e9,
            spacing_m: None,
        }
    }
}

impl GeometryConfig {
    pub fn build(&self) -> Result<ArrayGeometry> {
        let wavelength = crate::channel::SPEED_OF_LIGHT / self.carrier_hz;
        match self.spacing_m {
            None => ArrayGeometry::from_carrier(self.num_antennas, self.carrier_hz),
            Some(d) => ArrayGeometry::with_spacing(self.num_antennas, wavelength, d),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CodebookConfig {
    pub oversampling: usize,
}

impl Default for CodebookConfig {
    fn default() -> Self {
        Self { oversampling: 2 }
    }
}

/// Users are drawn uniformly over the distance and azimuth ranges.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct UserConfig {
    pub distance_m: [f64; 2],
    /// Azimuth from broadside in degrees.
    pub azimuth_deg: [f64; 2],
}

impl Default for UserConfig {
    fn default() -> Self {
        Self {
            distance_m: [10.0, 50.0],
            azimuth_deg: [-60.0, 60.0],
        }
    }
}

/// How each trial's visibility region is produced.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum VrSpec {
    /// One run of ⌊ψN⌋ antennas at a uniform offset.
    #[default]
    Contiguous,
    /// Two runs with ⌊ψN⌋ antennas in total.
    TwoBlocks,
    /// Stationary two-state chain with the given P(0 | 1); resampled until
    /// at least one antenna is visible.
    Markov {
        #[serde(default = "default_p10")]
        p10: f64,
    },
    /// The same region in every trial, as inclusive 1-based index ranges.
    Fixed { blocks: Vec<[usize; 2]> },
}

fn default_p10() -> f64 {
    0.1
}

impl VrSpec {
    pub fn fixed_region(&self, n: usize) -> Result<Option<VisibilityRegion>> {
        let Self::Fixed { blocks } = self else {
            return Ok(None);
        };
        let mut indices = Vec::new();
        for &[lo, hi] in blocks {
            if lo == 0 || lo > hi || hi > n {
                return Err(Error::Config(format!("VR block [{lo}, {hi}] outside 1..={n}")));
            }
            indices.extend(lo - 1..hi);
        }
        VisibilityRegion::from_indices(n, &indices)
            .map(Some)
            .map_err(|e| Error::Config(e.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ObservationConfig {
    /// Q values to sweep.
    pub pilot_slots: Vec<usize>,
    pub rf_chains: usize,
    pub snr_db: Vec<f64>,
}

impl Default for ObservationConfig {
    fn default() -> Self {
        Self {
            pilot_slots: vec![45],
            rf_chains: 4,
            snr_db: vec![5.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EstimatorConfig {
    /// Atom budget K; derived from the array geometry when absent.
    pub max_support: Option<usize>,
    /// Residual stop relative to ‖y‖.
    pub relative_residual_tol: f64,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        Self {
            max_support: None,
            relative_residual_tol: 1e-3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Vrer,
    /// 1 − VRER.
    CorrectDetection,
    Nmse,
    Se,
    /// Per-antenna mean VRDO-MP belief; needs a single grid point.
    Belief,
}

impl Metric {
    pub fn name(self) -> &'static str {
        match self {
            Self::Vrer => "vrer",
            Self::CorrectDetection => "correct_detection",
            Self::Nmse => "nmse",
            Self::Se => "se",
            Self::Belief => "belief",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Axis {
    SnrDb,
    PilotSlots,
    Psi,
    /// 1-based antenna index, for belief profiles.
    Antenna,
}

impl Axis {
    pub fn name(self) -> &'static str {
        match self {
            Self::SnrDb => "snr_db",
            Self::PilotSlots => "pilot_slots",
            Self::Psi => "psi",
            Self::Antenna => "antenna",
        }
    }
}

/// One CSV (and optionally one SVG): `metric` against `x`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct View {
    pub name: String,
    pub metric: Metric,
    pub x: Axis,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
    /// Empty means one view per applicable metric against the swept axis.
    pub views: Vec<View>,
    pub plots: bool,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("results"),
            views: Vec::new(),
            plots: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub name: String,
    pub geometry: GeometryConfig,
    pub codebook: CodebookConfig,
    pub user: UserConfig,
    pub vr: VrSpec,
    /// ψ values to sweep; ignored for fixed regions.
    pub psi: Vec<f64>,
    pub observation: ObservationConfig,
    pub algorithms: Vec<Algorithm>,
    pub trials: usize,
    pub seed: u64,
    pub detector: VrdompConfig,
    pub rfeb: RfebConfig,
    pub estimator: EstimatorConfig,
    /// Accumulate per-antenna VRDO-MP beliefs.
    pub record_beliefs: bool,
    pub output: OutputConfig,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            name: "sweep".into(),
            geometry: GeometryConfig::default(),
            codebook: CodebookConfig::default(),
            user: UserConfig::default(),
            vr: VrSpec::default(),
            psi: vec![0.25],
            observation: ObservationConfig::default(),
            algorithms: vec![Algorithm::Vrdomp, Algorithm::BbompSoft],
            trials: 500,
            seed: 1,
            detector: VrdompConfig::default(),
            rfeb: RfebConfig::default(),
            estimator: EstimatorConfig::default(),
            record_beliefs: false,
            output: OutputConfig::default(),
        }
    }
}

impl SweepConfig {
    pub fn from_json_str(text: &str) -> Result<Self> {
        let config: Self = serde_json::from_str(text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_json_str(&text).map_err(|e| match e {
            Error::Json(j) => Error::Config(format!("{}: {j}", path.display())),
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    /// ψ axis of the grid: the configured list, or the fill ratio of a
    /// fixed region.
    pub fn psi_values(&self) -> Result<Vec<f64>> {
        match self.vr.fixed_region(self.geometry.num_antennas)? {
            Some(vr) => Ok(vec![vr.fill_ratio()]),
            None => Ok(self.psi.clone()),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        let n = self.geometry.num_antennas;
        if n < 2 {
            return bad(format!("num_antennas must be >= 2, got {n}"));
        }
        if !(self.geometry.carrier_hz > 0.0) {
            return bad(format!("carrier_hz must be positive, got {}", self.geometry.carrier_hz));
        }
        if matches!(self.geometry.spacing_m, Some(d) if !(d > 0.0)) {
            return bad("spacing_m must be positive".into());
        }
        if self.codebook.oversampling == 0 {
            return bad("oversampling must be >= 1".into());
        }
        let [d0, d1] = self.user.distance_m;
        if !(d0 > 0.0 && d0 <= d1) {
            return bad(format!("distance range [{d0}, {d1}] invalid"));
        }
        let [a0, a1] = self.user.azimuth_deg;
        if !(a0 <= a1 && a0 > -90.0 && a1 < 90.0) {
            return bad(format!("azimuth range [{a0}, {a1}] must lie inside (-90, 90)"));
        }
        match &self.vr {
            VrSpec::Markov { p10 } if !(0.0..=1.0).contains(p10) => {
                return bad(format!("markov p10 must be in [0, 1], got {p10}"));
            }
            VrSpec::Fixed { blocks } if blocks.is_empty() => {
                return bad("fixed VR needs at least one block".into());
            }
            _ => {}
        }
        self.vr.fixed_region(n)?;
        if !matches!(self.vr, VrSpec::Fixed { .. }) {
            if self.psi.is_empty() {
                return bad("psi list is empty".into());
            }
            for &p in &self.psi {
                if !(p > 0.0 && p <= 1.0) {
                    return bad(format!("psi must be in (0, 1], got {p}"));
                }
                if let VrSpec::Markov { p10 } = self.vr {
                    if p < 1.0 && p * p10 > 1.0 - p {
                        return bad(format!("psi = {p} with p10 = {p10} gives p01 > 1"));
                    }
                }
            }
        }
        let obs = &self.observation;
        if obs.pilot_slots.is_empty() || obs.snr_db.is_empty() {
            return bad("pilot_slots and snr_db must be non-empty".into());
        }
        if obs.rf_chains == 0 {
            return bad("rf_chains must be >= 1".into());
        }
        for &q in &obs.pilot_slots {
            if q == 0 || q * obs.rf_chains > n {
                return bad(format!("Q·N_rf = {}·{} must be in 1..={n}", q, obs.rf_chains));
            }
        }
        if obs.snr_db.iter().any(|s| !s.is_finite()) {
            return bad("snr_db values must be finite".into());
        }
        if self.algorithms.is_empty() {
            return bad("algorithms list is empty".into());
        }
        if self.trials == 0 {
            return bad("trials must be >= 1".into());
        }
        self.detector.validate().map_err(|e| Error::Config(e.to_string()))?;
        if self.rfeb.window == 0 {
            return bad("rfeb.window must be >= 1".into());
        }
        if matches!(self.estimator.max_support, Some(0)) {
            return bad("estimator.max_support must be >= 1".into());
        }
        if !(self.estimator.relative_residual_tol >= 0.0) {
            return bad("estimator.relative_residual_tol must be >= 0".into());
        }
        let grid_points = self.psi_values()?.len() * obs.pilot_slots.len() * obs.snr_db.len();
        for view in &self.output.views {
            if view.name.is_empty() || view.name.contains(['/', '\\']) {
                return bad(format!("view name {:?} is not a plain file stem", view.name));
            }
            match (view.metric, view.x) {
                (Metric::Belief, Axis::Antenna) => {
                    if grid_points != 1 {
                        return bad(format!("belief view {:?} needs a single grid point", view.name));
                    }
                    if !self.record_beliefs || !self.algorithms.contains(&Algorithm::Vrdomp) {
                        return bad(format!(
                            "belief view {:?} needs record_beliefs and the vrdomp algorithm",
                            view.name
                        ));
                    }
                }
                (Metric::Belief, _) | (_, Axis::Antenna) => {
                    return bad(format!("view {:?}: belief goes with the antenna axis only", view.name));
                }
                _ => {}
            }
        }
        Ok(())
    }
}
