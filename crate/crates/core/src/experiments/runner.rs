//! Trial execution and aggregation.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bbomp::{default_sparsity, ls_estimate, rfeb_detect};
use crate::channel::{
    apply_vr, build_codebook, sample_gain, sample_vr, synthesize_stationary, ArrayGeometry, UserLocation,
    VisibilityRegion, VrKind, WavenumberCodebook,
};
use crate::metrics::{nmse, se, vrer, TrialRecord};
use crate::observation::{build_combiner, observe, snr_to_noise, CombinerMatrix};
use crate::pipeline::{estimate_with_beliefs, TsVdceConfig};
use crate::vrdomp::{run_vrdomp, VrdompOutput};
use crate::{CVector, Error, Result};

use super::config::{SweepConfig, VrSpec};
use super::seed::child_seed;

/// Caps the worker pool when set to a positive integer.
pub const THREADS_ENV: &str = "SNS_XLMIMO_THREADS";

const MARKOV_ATTEMPTS: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    /// Stage-one detection, thresholded beliefs.
    Vrdomp,
    /// Power-edge detection on the LS estimate.
    Rfeb,
    /// Minimum-norm least squares.
    Ls,
    /// Wavenumber-domain OMP ignoring the VR.
    Womp,
    /// Stage two weighted by the thresholded region.
    BbompHard,
    /// Stage two weighted by the soft beliefs.
    BbompSoft,
    /// Stage two weighted by the true region.
    Genie,
    /// x̂ = x.
    PerfectCsi,
}

impl Algorithm {
    pub const ALL: [Algorithm; 8] = [
        Self::Vrdomp,
        Self::Rfeb,
        Self::Ls,
        Self::Womp,
        Self::BbompHard,
        Self::BbompSoft,
        Self::Genie,
        Self::PerfectCsi,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::Vrdomp => "vrdomp",
            Self::Rfeb => "rfeb",
            Self::Ls => "ls",
            Self::Womp => "womp",
            Self::BbompHard => "bbomp_hard",
            Self::BbompSoft => "bbomp_soft",
            Self::Genie => "genie",
            Self::PerfectCsi => "perfect_csi",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|a| a.name() == name)
    }

    pub fn detects(self) -> bool {
        matches!(self, Self::Vrdomp | Self::Rfeb)
    }

    pub fn estimates(self) -> bool {
        !self.detects()
    }

    fn uses_stage_one(self) -> bool {
        matches!(self, Self::Vrdomp | Self::BbompHard | Self::BbompSoft)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub index: usize,
    pub snr_db: f64,
    pub pilot_slots: usize,
    pub psi: f64,
}

/// Mean and standard error of one metric.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub count: usize,
    pub mean: f64,
    /// Sample standard deviation over √count; zero for a single sample.
    pub stderr: f64,
}

impl Aggregate {
    pub fn from_samples(samples: &[f64]) -> Option<Self> {
        let count = samples.len();
        if count == 0 {
            return None;
        }
        let mean = samples.iter().sum::<f64>() / count as f64;
        let stderr = if count > 1 {
            let var = samples.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (count - 1) as f64;
            (var / count as f64).sqrt()
        } else {
            0.0
        };
        Some(Self { count, mean, stderr })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlgorithmSummary {
    pub algorithm: Algorithm,
    pub trials: usize,
    pub failures: usize,
    pub vrer: Option<Aggregate>,
    pub correct_detection: Option<Aggregate>,
    pub nmse: Option<Aggregate>,
    pub se: Option<Aggregate>,
}

/// Per-antenna VRDO-MP belief statistics at one grid point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BeliefProfile {
    pub mean: Vec<f64>,
    pub stderr: Vec<f64>,
    /// Fraction of trials in which each antenna was visible.
    pub visible: Vec<f64>,
    pub trials: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointSummary {
    pub grid: GridPoint,
    pub algorithms: Vec<AlgorithmSummary>,
    pub belief_profile: Option<BeliefProfile>,
}

#[derive(Debug, Clone)]
pub struct SweepResult {
    pub config: SweepConfig,
    /// Grid-major, then trial, then configured algorithm order.
    pub records: Vec<TrialRecord>,
    pub points: Vec<PointSummary>,
    pub wall_clock_s: f64,
}

impl SweepResult {
    pub fn point(&self, index: usize) -> &PointSummary {
        &self.points[index]
    }

    pub fn summary(&self, grid_index: usize, algorithm: Algorithm) -> Option<&AlgorithmSummary> {
        self.points
            .get(grid_index)?
            .algorithms
            .iter()
            .find(|s| s.algorithm == algorithm)
    }

    /// Records of one algorithm at one grid point, in trial order.
    pub fn records_for(&self, grid_index: usize, algorithm: Algorithm) -> impl Iterator<Item = &TrialRecord> {
        let name = algorithm.name();
        self.records
            .iter()
            .filter(move |r| r.grid_index == grid_index && r.algorithm == name)
    }
}

/// Grid in ψ-major, then Q, then SNR order.
pub fn grid_points(config: &SweepConfig) -> Result<Vec<GridPoint>> {
    let mut points = Vec::new();
    for psi in config.psi_values()? {
        for &q in &config.observation.pilot_slots {
            for &snr in &config.observation.snr_db {
                points.push(GridPoint {
                    index: points.len(),
                    snr_db: snr,
                    pilot_slots: q,
                    psi,
                });
            }
        }
    }
    Ok(points)
}

struct Shared {
    geom: ArrayGeometry,
    codebook: WavenumberCodebook,
    fixed_vr: Option<VisibilityRegion>,
}

struct TrialOutcome {
    records: Vec<TrialRecord>,
    beliefs: Option<Vec<f64>>,
    truth: Option<VisibilityRegion>,
}

fn sample_region<R: Rng + ?Sized>(
    spec: &VrSpec,
    fixed: &Option<VisibilityRegion>,
    psi: f64,
    n: usize,
    rng: &mut R,
) -> Result<VisibilityRegion> {
    match spec {
        VrSpec::Fixed { .. } => Ok(fixed.clone().expect("validated fixed region")),
        VrSpec::Contiguous => sample_vr(VrKind::Contiguous, psi, 0.0, n, rng),
        VrSpec::TwoBlocks => sample_vr(VrKind::TwoBlocks, psi, 0.0, n, rng),
        VrSpec::Markov { p10 } => {
            for _ in 0..MARKOV_ATTEMPTS {
                let vr = sample_vr(VrKind::Markov, psi, *p10, n, rng)?;
                if vr.num_visible() > 0 {
                    return Ok(vr);
                }
            }
            Err(Error::EmptyVisibilityRegion(psi))
        }
    }
}

fn failed_records(config: &SweepConfig, point: &GridPoint, trial: usize, seed: u64, reason: &str) -> Vec<TrialRecord> {
    config
        .algorithms
        .iter()
        .map(|alg| TrialRecord {
            seed,
            grid_index: point.index,
            trial,
            snr_db: point.snr_db,
            pilot_slots: point.pilot_slots,
            psi: point.psi,
            algorithm: alg.name().to_string(),
            vrer: None,
            nmse: None,
            se: None,
            runtime: 0.0,
            error: Some(reason.to_string()),
        })
        .collect()
}

fn execute(config: &SweepConfig, shared: &Shared, point: &GridPoint, trial: usize) -> TrialOutcome {
    let seed = child_seed(config.seed, point.index, trial);
    match execute_inner(config, shared, point, trial, seed) {
        Ok(outcome) => outcome,
        Err(e) => TrialOutcome {
            records: failed_records(config, point, trial, seed, &e.to_string()),
            beliefs: None,
            truth: None,
        },
    }
}

/// Everything drawn for one trial before any algorithm runs.
#[derive(Debug, Clone)]
pub struct TrialInstance {
    pub grid: GridPoint,
    pub trial: usize,
    pub seed: u64,
    pub user: UserLocation,
    pub truth: VisibilityRegion,
    /// SnS channel x = diag(α)·h.
    pub x: CVector,
    pub combiner: CombinerMatrix,
    pub noise_var: f64,
    pub y: CVector,
}

fn draw_instance(config: &SweepConfig, shared: &Shared, point: &GridPoint, trial: usize, seed: u64) -> Result<TrialInstance> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = shared.geom.num_antennas();
    let [d0, d1] = config.user.distance_m;
    let [a0, a1] = config.user.azimuth_deg;
    let distance = if d0 < d1 { rng.random_range(d0..d1) } else { d0 };
    let azimuth = if a0 < a1 { rng.random_range(a0..a1) } else { a0 }.to_radians();
    let user = UserLocation::from_polar(distance, azimuth)?;
    let truth = sample_region(&config.vr, &shared.fixed_vr, point.psi, n, &mut rng)?;
    let gain = sample_gain(&mut rng);
    let h = synthesize_stationary(&shared.geom, &user, gain)?;
    let x = apply_vr(&h, &truth)?;
    let combiner = build_combiner(n, point.pilot_slots, config.observation.rf_chains, &mut rng)?;
    let noise_var = snr_to_noise(&x, point.snr_db)?;
    let obs = observe(&x, &combiner, noise_var, &mut rng)?;
    Ok(TrialInstance {
        grid: *point,
        trial,
        seed,
        user,
        truth,
        x,
        combiner,
        noise_var,
        y: obs.y,
    })
}

/// Draw the channel, combiner and pilots of one trial exactly as the sweep
/// would, without running any algorithm.
pub fn sample_instance(config: &SweepConfig, grid_index: usize, trial: usize) -> Result<TrialInstance> {
    config.validate()?;
    let points = grid_points(config)?;
    let point = points
        .get(grid_index)
        .ok_or_else(|| Error::InvalidParameter(format!("grid index {grid_index} out of range")))?;
    let shared = shared_state(config)?;
    draw_instance(config, &shared, point, trial, child_seed(config.seed, grid_index, trial))
}

/// Atom budget K of the configuration for M measurements.
pub fn sparsity_for(config: &SweepConfig, num_measurements: usize) -> Result<usize> {
    match config.estimator.max_support {
        Some(k) => Ok(k.min(num_measurements)),
        None => default_sparsity(&config.geometry.build()?, config.codebook.oversampling, num_measurements),
    }
}

fn execute_inner(
    config: &SweepConfig,
    shared: &Shared,
    point: &GridPoint,
    trial: usize,
    seed: u64,
) -> Result<TrialOutcome> {
    let inst = draw_instance(config, shared, point, trial, seed)?;
    let TrialInstance {
        truth,
        x,
        combiner,
        noise_var,
        y,
        ..
    } = &inst;
    let noise_var = *noise_var;
    let n = shared.geom.num_antennas();

    let m = combiner.num_measurements();
    let k = match config.estimator.max_support {
        Some(k) => k.min(m),
        None => default_sparsity(&shared.geom, config.codebook.oversampling, m)?,
    };
    let stage_two = TsVdceConfig {
        vrdomp: config.detector.clone(),
        max_support: Some(k),
        relative_residual_tol: config.estimator.relative_residual_tol,
        ..TsVdceConfig::default()
    };

    let needs_stage_one = config.algorithms.iter().any(|a| a.uses_stage_one()) || config.record_beliefs;
    let start = Instant::now();
    let stage_one: Option<std::result::Result<VrdompOutput, String>> =
        needs_stage_one.then(|| run_vrdomp(y, combiner, &config.detector).map_err(|e| e.to_string()));
    let stage_one_time = start.elapsed().as_secs_f64();

    let mut records = Vec::with_capacity(config.algorithms.len());
    for &alg in &config.algorithms {
        let start = Instant::now();
        let mut extra = 0.0;
        let result: Result<(Option<f64>, Option<CVector>)> = (|| match alg {
            Algorithm::Vrdomp => {
                let out = stage_one.as_ref().expect("stage one ran").as_ref().map_err(|e| Error::StageOne(e.clone()))?;
                extra = stage_one_time;
                Ok((Some(vrer(truth, &out.belief.detected)?), None))
            }
            Algorithm::Rfeb => {
                let ls = ls_estimate(y, combiner)?;
                let det = rfeb_detect(&ls, config.rfeb.window, config.rfeb.power_th)?;
                Ok((Some(vrer(truth, &det)?), None))
            }
            Algorithm::Ls => Ok((None, Some(ls_estimate(y, combiner)?))),
            Algorithm::Womp => {
                let (_, x_hat) = estimate_with_beliefs(y, combiner, &shared.codebook, &vec![1.0; n], &stage_two)?;
                Ok((None, Some(x_hat)))
            }
            Algorithm::Genie => {
                let (_, x_hat) = estimate_with_beliefs(y, combiner, &shared.codebook, &truth.as_weights(), &stage_two)?;
                Ok((None, Some(x_hat)))
            }
            Algorithm::BbompHard | Algorithm::BbompSoft => {
                let out = stage_one.as_ref().expect("stage one ran").as_ref().map_err(|e| Error::StageOne(e.clone()))?;
                extra = stage_one_time;
                let beliefs = if alg == Algorithm::BbompSoft {
                    out.belief.posterior.clone()
                } else {
                    out.belief.detected.as_weights()
                };
                let (_, x_hat) = estimate_with_beliefs(y, combiner, &shared.codebook, &beliefs, &stage_two)?;
                Ok((None, Some(x_hat)))
            }
            Algorithm::PerfectCsi => Ok((None, Some(x.clone()))),
        })();
        let runtime = start.elapsed().as_secs_f64() + extra;
        let mut record = TrialRecord {
            seed,
            grid_index: point.index,
            trial,
            snr_db: point.snr_db,
            pilot_slots: point.pilot_slots,
            psi: point.psi,
            algorithm: alg.name().to_string(),
            vrer: None,
            nmse: None,
            se: None,
            runtime,
            error: None,
        };
        match result.and_then(|(v, x_hat)| {
            let (e, s) = match &x_hat {
                Some(xh) => (Some(nmse(x, xh)?), Some(se(x, xh, noise_var)?)),
                None => (None, None),
            };
            Ok((v, e, s))
        }) {
            Ok((v, e, s)) => {
                record.vrer = v;
                record.nmse = e;
                record.se = s;
            }
            Err(e) => record.error = Some(e.to_string()),
        }
        records.push(record);
    }

    let beliefs = if config.record_beliefs {
        stage_one
            .and_then(|r| r.ok())
            .map(|out| out.belief.posterior)
    } else {
        None
    };
    Ok(TrialOutcome {
        records,
        beliefs,
        truth: Some(inst.truth),
    })
}

/// Run one trial of one grid point exactly as the sweep would.
pub fn run_trial(config: &SweepConfig, grid_index: usize, trial: usize) -> Result<Vec<TrialRecord>> {
    config.validate()?;
    let points = grid_points(config)?;
    let point = points
        .get(grid_index)
        .ok_or_else(|| Error::InvalidParameter(format!("grid index {grid_index} out of range")))?;
    let shared = shared_state(config)?;
    Ok(execute(config, &shared, point, trial).records)
}

fn shared_state(config: &SweepConfig) -> Result<Shared> {
    let geom = config.geometry.build()?;
    let codebook = build_codebook(&geom, config.codebook.oversampling)?;
    let fixed_vr = config.vr.fixed_region(geom.num_antennas())?;
    Ok(Shared {
        geom,
        codebook,
        fixed_vr,
    })
}

fn worker_count() -> Option<usize> {
    std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&n| n > 0)
}

/// Run every trial of every grid point and aggregate.
///
/// Trials run in parallel but are collected in grid/trial order, and each
/// draws from its own seed, so the result does not depend on scheduling.
pub fn run_sweep(config: &SweepConfig) -> Result<SweepResult> {
    config.validate()?;
    let started = Instant::now();
    let shared = shared_state(config)?;
    let points = grid_points(config)?;
    let jobs: Vec<(usize, usize)> = (0..points.len())
        .flat_map(|g| (0..config.trials).map(move |t| (g, t)))
        .collect();

    let run = || -> Vec<TrialOutcome> {
        jobs.par_iter()
            .map(|&(g, t)| execute(config, &shared, &points[g], t))
            .collect()
    };
    let outcomes = match worker_count() {
        Some(threads) => rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .map_err(|e| Error::InvalidParameter(format!("thread pool: {e}")))?
            .install(run),
        None => run(),
    };

    let mut summaries = Vec::with_capacity(points.len());
    let mut records = Vec::with_capacity(outcomes.len() * config.algorithms.len());
    for (g, chunk) in outcomes.chunks(config.trials).enumerate() {
        let point_records: Vec<&TrialRecord> = chunk.iter().flat_map(|o| o.records.iter()).collect();
        let algorithms = config
            .algorithms
            .iter()
            .map(|&alg| summarize(alg, point_records.iter().copied().filter(|r| r.algorithm == alg.name())))
            .collect();
        let belief_profile = config.record_beliefs.then(|| profile(chunk)).flatten();
        summaries.push(PointSummary {
            grid: points[g],
            algorithms,
            belief_profile,
        });
        records.extend(chunk.iter().flat_map(|o| o.records.iter().cloned()));
    }

    Ok(SweepResult {
        config: config.clone(),
        records,
        points: summaries,
        wall_clock_s: started.elapsed().as_secs_f64(),
    })
}

fn summarize<'a>(algorithm: Algorithm, records: impl Iterator<Item = &'a TrialRecord>) -> AlgorithmSummary {
    let records: Vec<&TrialRecord> = records.collect();
    let collect = |f: fn(&TrialRecord) -> Option<f64>| -> Vec<f64> { records.iter().filter_map(|r| f(r)).collect() };
    let vrer = collect(|r| r.vrer);
    let detection: Vec<f64> = vrer.iter().map(|v| 1.0 - v).collect();
    AlgorithmSummary {
        algorithm,
        trials: records.len(),
        failures: records.iter().filter(|r| !r.succeeded()).count(),
        vrer: Aggregate::from_samples(&vrer),
        correct_detection: Aggregate::from_samples(&detection),
        nmse: Aggregate::from_samples(&collect(|r| r.nmse)),
        se: Aggregate::from_samples(&collect(|r| r.se)),
    }
}

fn profile(outcomes: &[TrialOutcome]) -> Option<BeliefProfile> {
    let rows: Vec<(&Vec<f64>, &VisibilityRegion)> = outcomes
        .iter()
        .filter_map(|o| Some((o.beliefs.as_ref()?, o.truth.as_ref()?)))
        .collect();
    let n = rows.first()?.0.len();
    let mut mean = Vec::with_capacity(n);
    let mut stderr = Vec::with_capacity(n);
    let mut visible = Vec::with_capacity(n);
    for i in 0..n {
        let samples: Vec<f64> = rows.iter().map(|(b, _)| b[i]).collect();
        let agg = Aggregate::from_samples(&samples).expect("non-empty");
        mean.push(agg.mean);
        stderr.push(agg.stderr);
        visible.push(rows.iter().filter(|(_, t)| t.is_visible(i)).count() as f64 / rows.len() as f64);
    }
    Some(BeliefProfile {
        mean,
        stderr,
        visible,
        trials: rows.len(),
    })
}
