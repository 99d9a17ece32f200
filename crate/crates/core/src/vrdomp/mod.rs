//! Stage one: visibility-region detection by turbo message passing.
//!
//! Module A is an LMMSE estimator of the antenna-domain channel x from the
//! pilots y. Module B treats the extrinsic output of A as an AWGN
//! observation of x, combines it with the Bernoulli–Gaussian prior
//! p(x_n | α_n) and the Markov chain p(α), and returns visibility beliefs
//! ψ^post plus an extrinsic estimate of x for the next pass of A.
//!
//! Internally the pilots are normalised to unit mean power so that the
//! `v_A^pri = 1` start sits on the same scale as the channel; all returned
//! quantities are in the caller's units.

mod chain;
mod denoiser;
mod em;
mod lmmse;

pub use chain::{backward_pass, belief, forward_pass, likelihood_out, prior_in, threshold};
pub use denoiser::{denoise, DenoiserOutput};
pub use em::em_update;
pub use lmmse::{extrinsic, lmmse_step, EXT_VAR_CAP, VAR_FLOOR};

use serde::{Deserialize, Serialize};

use crate::channel::VisibilityRegion;
use crate::observation::CombinerMatrix;
use crate::{CVector, Error, Result, C64};

/// ϑ = {σ², σ_N², ψ, p10}.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Hyperparams {
    /// σ², variance of a visible channel coefficient.
    pub signal_var: f64,
    /// σ_N².
    pub noise_var: f64,
    /// Steady-state P(α_n = 1).
    pub psi: f64,
    /// P(α_n = 0 | α_{n−1} = 1).
    pub p10: f64,
}

impl Hyperparams {
    pub fn new(signal_var: f64, noise_var: f64, psi: f64, p10: f64) -> Result<Self> {
        let h = Self {
            signal_var,
            noise_var,
            psi,
            p10,
        };
        h.validate()?;
        Ok(h)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.signal_var > 0.0 && self.noise_var > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "variances must be positive (σ² = {}, σ_N² = {})",
                self.signal_var, self.noise_var
            )));
        }
        if !(0.0..=1.0).contains(&self.psi) || !(0.0..=1.0).contains(&self.p10) {
            return Err(Error::InvalidParameter(format!(
                "probabilities out of range (ψ = {}, p10 = {})",
                self.psi, self.p10
            )));
        }
        if self.psi < 1.0 && self.psi * self.p10 > 1.0 - self.psi {
            return Err(Error::InvalidParameter(format!(
                "ψ = {} and p10 = {} imply p01 > 1",
                self.psi, self.p10
            )));
        }
        Ok(())
    }

    /// P(α_n = 1 | α_{n−1} = 0) = ψ·p10/(1 − ψ).
    pub fn p01(&self) -> f64 {
        if self.psi >= 1.0 {
            return 1.0;
        }
        (self.psi * self.p10 / (1.0 - self.psi)).min(1.0)
    }

    pub fn p00(&self) -> f64 {
        1.0 - self.p01()
    }

    pub fn p11(&self) -> f64 {
        1.0 - self.p10
    }

    /// Variances divided by `power`.
    pub fn rescaled(&self, power: f64) -> Self {
        Self {
            signal_var: self.signal_var / power,
            noise_var: self.noise_var / power,
            ..*self
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VrdompConfig {
    pub max_iters: usize,
    /// Stop once ‖Δx_B^post‖/‖x_B^post‖ drops below this.
    pub tol: f64,
    /// Weight of the new module-B extrinsic message when forming the next
    /// module-A prior; 1 disables damping.
    pub damping: f64,
    /// ψ_th.
    pub threshold: f64,
    /// Run the EM update after every iteration.
    pub learn_hyperparams: bool,
    /// Starting hyperparameters in physical units; `None` derives them
    /// from the pilots.
    pub init: Option<Hyperparams>,
    pub record_diagnostics: bool,
}

impl Default for VrdompConfig {
    fn default() -> Self {
        Self {
            max_iters: 50,
            tol: 1e-5,
            damping: 0.7,
            threshold: 0.5,
            learn_hyperparams: true,
            init: None,
            record_diagnostics: false,
        }
    }
}

impl VrdompConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iters == 0 {
            return Err(Error::InvalidParameter("max_iters must be >= 1".into()));
        }
        if !(self.damping > 0.0 && self.damping <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "damping must be in (0, 1], got {}",
                self.damping
            )));
        }
        if !(0.0..1.0).contains(&self.threshold) {
            return Err(Error::InvalidParameter(format!(
                "threshold must be in [0, 1), got {}",
                self.threshold
            )));
        }
        if let Some(h) = &self.init {
            h.validate()?;
        }
        Ok(())
    }
}

/// Every message of one turbo iteration.
#[derive(Debug, Clone)]
pub struct TurboState {
    pub iteration: usize,
    /// ϑ used to compute this state.
    pub hyper: Hyperparams,
    pub x_a_pri: CVector,
    pub v_a_pri: f64,
    pub x_a_post: CVector,
    pub v_a_post: f64,
    pub x_a_ext: CVector,
    pub v_a_ext: f64,
    pub x_b_pri: CVector,
    pub v_b_pri: f64,
    pub x_b_post: CVector,
    pub v_b_post: f64,
    pub v_b_post_per_antenna: Vec<f64>,
    pub x_b_ext: CVector,
    pub v_b_ext: f64,
    pub pi_out: Vec<f64>,
    pub pi_in: Vec<f64>,
    pub psi_f: Vec<f64>,
    pub psi_b: Vec<f64>,
    pub psi_post: Vec<f64>,
    pub(crate) llr_out: Vec<f64>,
    pub(crate) llr_f: Vec<f64>,
    pub(crate) llr_b: Vec<f64>,
}

impl TurboState {
    /// Multiply means by `amplitude` and variances by its square.
    fn rescaled(&self, amplitude: f64) -> Self {
        let p = amplitude * amplitude;
        Self {
            iteration: self.iteration,
            hyper: self.hyper.rescaled(1.0 / p),
            x_a_pri: &self.x_a_pri * C64::from(amplitude),
            v_a_pri: self.v_a_pri * p,
            x_a_post: &self.x_a_post * C64::from(amplitude),
            v_a_post: self.v_a_post * p,
            x_a_ext: &self.x_a_ext * C64::from(amplitude),
            v_a_ext: self.v_a_ext * p,
            x_b_pri: &self.x_b_pri * C64::from(amplitude),
            v_b_pri: self.v_b_pri * p,
            x_b_post: &self.x_b_post * C64::from(amplitude),
            v_b_post: self.v_b_post * p,
            v_b_post_per_antenna: self.v_b_post_per_antenna.iter().map(|v| v * p).collect(),
            x_b_ext: &self.x_b_ext * C64::from(amplitude),
            v_b_ext: self.v_b_ext * p,
            pi_out: self.pi_out.clone(),
            pi_in: self.pi_in.clone(),
            psi_f: self.psi_f.clone(),
            psi_b: self.psi_b.clone(),
            psi_post: self.psi_post.clone(),
            llr_out: self.llr_out.clone(),
            llr_f: self.llr_f.clone(),
            llr_b: self.llr_b.clone(),
        }
    }
}

/// ψ^post, α̂ and ψ_th.
#[derive(Debug, Clone)]
pub struct VrBelief {
    pub posterior: Vec<f64>,
    pub detected: VisibilityRegion,
    pub threshold: f64,
}

impl VrBelief {
    pub fn new(posterior: Vec<f64>, threshold: f64) -> Self {
        let detected = chain::threshold(&posterior, threshold);
        Self {
            posterior,
            detected,
            threshold,
        }
    }
}

/// One JSON line of the optional per-iteration dump.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IterationDiagnostics {
    pub iter: usize,
    pub v_a_ext: f64,
    pub v_b_ext: f64,
    pub mean_belief: f64,
    /// ‖y − A x_B^post‖/‖y‖.
    pub residual: f64,
}

#[derive(Debug, Clone)]
pub struct VrdompOutput {
    pub belief: VrBelief,
    /// x_B^post.
    pub x_post: CVector,
    pub hyper: Hyperparams,
    /// The returned iterate; `state.iteration` may precede `iterations`
    /// when the run did not converge.
    pub state: TurboState,
    /// Iterations actually run.
    pub iterations: usize,
    pub converged: bool,
    pub diagnostics: Vec<IterationDiagnostics>,
}

/// Starting point when no prior knowledge is supplied, for pilots already
/// normalised to unit mean power: ψ₀ = 1/2, p10₀ = 0.1, and the unit pilot
/// power E|y_m|² = ψσ² + σ_N² split evenly between signal and noise.
fn default_hyper() -> Hyperparams {
    let psi = 0.5;
    let noise_var = 0.5;
    Hyperparams {
        signal_var: (1.0 - noise_var) / psi,
        noise_var,
        psi,
        p10: 0.1,
    }
}

/// Run Module A → Module B → (EM) until `max_iters` or the relative change
/// of x_B^post falls below `tol`.
///
/// On non-convergence the iterate with the smallest relative change is
/// returned and `converged` is false.
pub fn run_vrdomp(y: &CVector, combiner: &CombinerMatrix, config: &VrdompConfig) -> Result<VrdompOutput> {
    config.validate()?;
    let m = combiner.num_measurements();
    let n = combiner.num_antennas();
    if y.len() != m {
        return Err(Error::DimensionMismatch(format!(
            "pilot length {} vs combiner rows {m}",
            y.len()
        )));
    }
    let power = y.norm_squared() / m as f64;
    let power = if power > 0.0 { power } else { 1.0 };
    let amplitude = power.sqrt();
    let yn = y * C64::from(1.0 / amplitude);

    let mut hyper = match &config.init {
        Some(h) => h.rescaled(power),
        None => default_hyper(),
    };

    let mut x_a_pri = CVector::zeros(n);
    let mut v_a_pri = 1.0;
    let mut previous: Option<CVector> = None;
    let mut best: Option<(f64, TurboState)> = None;
    let mut diagnostics = Vec::new();
    let mut converged = false;
    let mut last: Option<TurboState> = None;
    let mut ran = 0;

    for iteration in 1..=config.max_iters {
        ran = iteration;
        let (x_a_post, v_a_post) = lmmse_step(&yn, combiner, &x_a_pri, v_a_pri, hyper.noise_var);
        let (x_a_ext, v_a_ext) = extrinsic(&x_a_post, v_a_post, &x_a_pri, v_a_pri);
        let (x_b_pri, v_b_pri) = (x_a_ext.clone(), v_a_ext);

        let llr_out = chain::likelihood_out_llr(&x_b_pri, v_b_pri, hyper.signal_var);
        let llr_f = chain::forward_llr(&llr_out, &hyper);
        let llr_b = chain::backward_llr(&llr_out, &hyper);
        let llr_in: Vec<f64> = llr_f.iter().zip(&llr_b).map(|(f, b)| f + b).collect();
        let den = denoiser::denoise_llr(&x_b_pri, v_b_pri, &llr_in, hyper.signal_var);
        let (x_b_ext, v_b_ext) = extrinsic(&den.mean, den.mean_var, &x_b_pri, v_b_pri);

        let sigmoid_all = |v: &[f64]| v.iter().map(|&l| crate::math::sigmoid(l)).collect::<Vec<_>>();
        let psi_post = chain::belief_llr(&llr_out, &llr_f, &llr_b, hyper.psi);
        debug_assert!(psi_post.iter().all(|p| (0.0..=1.0).contains(p)));

        let state = TurboState {
            iteration,
            hyper,
            x_a_pri: x_a_pri.clone(),
            v_a_pri,
            x_a_post,
            v_a_post,
            x_a_ext,
            v_a_ext,
            x_b_pri,
            v_b_pri,
            x_b_post: den.mean,
            v_b_post: den.mean_var,
            v_b_post_per_antenna: den.var,
            x_b_ext: x_b_ext.clone(),
            v_b_ext,
            pi_out: sigmoid_all(&llr_out),
            pi_in: sigmoid_all(&llr_in),
            psi_f: sigmoid_all(&llr_f),
            psi_b: sigmoid_all(&llr_b),
            psi_post,
            llr_out,
            llr_f,
            llr_b,
        };

        if config.record_diagnostics {
            let residual = (&yn - combiner.apply(&state.x_b_post)).norm() / yn.norm().max(f64::MIN_POSITIVE);
            diagnostics.push(IterationDiagnostics {
                iter: iteration,
                v_a_ext: state.v_a_ext * power,
                v_b_ext: state.v_b_ext * power,
                mean_belief: state.psi_post.iter().sum::<f64>() / n as f64,
                residual,
            });
        }

        let change = match &previous {
            None => f64::INFINITY,
            Some(prev) => {
                let norm = state.x_b_post.norm();
                let diff = (&state.x_b_post - prev).norm();
                if norm > 0.0 {
                    diff / norm
                } else if diff == 0.0 {
                    0.0
                } else {
                    f64::INFINITY
                }
            }
        };
        previous = Some(state.x_b_post.clone());

        if config.learn_hyperparams {
            hyper = em_update(&state, &yn, combiner, &hyper);
        }

        if iteration == 1 {
            x_a_pri = x_b_ext;
            v_a_pri = v_b_ext;
        } else {
            let beta = config.damping;
            x_a_pri = x_b_ext * C64::from(beta) + &x_a_pri * C64::from(1.0 - beta);
            v_a_pri = beta * v_b_ext + (1.0 - beta) * v_a_pri;
        }

        if change < config.tol {
            converged = true;
            last = Some(state);
            break;
        }
        if best.as_ref().is_none_or(|(c, _)| change < *c) {
            best = Some((change, state.clone()));
        }
        last = Some(state);
    }

    let state = if converged {
        last.expect("at least one iteration")
    } else {
        best.map(|(_, s)| s).or(last).expect("at least one iteration")
    };
    let state = state.rescaled(amplitude);
    let belief = VrBelief::new(state.psi_post.clone(), config.threshold);
    Ok(VrdompOutput {
        belief,
        x_post: state.x_b_post.clone(),
        hyper: state.hyper,
        iterations: ran,
        converged,
        state,
        diagnostics,
    })
}
