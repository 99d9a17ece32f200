//! Seeded equivalence checks between the main code paths and the
//! brute-force references.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::bbomp::{bb_omp, build_sensing};
use crate::channel::{build_codebook, sample_vr, ArrayGeometry, VrKind};
use crate::math::complex_gaussian;
use crate::observation::{build_combiner, observe};
use crate::vrdomp::{backward_pass, denoise, forward_pass, lmmse_step, run_vrdomp, Hyperparams, VrdompConfig};
use crate::{CMatrix, CVector, Result};

use super::{chain_messages, exact_lmmse, exact_vr_posterior, exhaustive_sparse_fit, spike_slab_quadrature};

#[derive(Debug, Clone)]
pub struct CheckOutcome {
    pub name: &'static str,
    pub passed: bool,
    /// Worst observed discrepancy.
    pub max_error: f64,
    pub tolerance: f64,
    pub cases: usize,
}

fn outcome(name: &'static str, errors: Result<Vec<f64>>, tolerance: f64) -> CheckOutcome {
    match errors {
        Ok(errors) => {
            let max_error = errors.iter().cloned().fold(0.0, f64::max);
            CheckOutcome {
                name,
                passed: errors.iter().all(|e| *e <= tolerance),
                max_error,
                tolerance,
                cases: errors.len(),
            }
        }
        Err(_) => CheckOutcome {
            name,
            passed: false,
            max_error: f64::INFINITY,
            tolerance,
            cases: 0,
        },
    }
}

fn random_cvec<R: Rng>(rng: &mut R, n: usize, var: f64) -> CVector {
    CVector::from_fn(n, |_, _| complex_gaussian(rng, var))
}

fn random_hyper<R: Rng>(rng: &mut R) -> Hyperparams {
    let psi: f64 = rng.random_range(0.15..0.85);
    let p10_max = ((1.0 - psi) / psi).min(1.0);
    Hyperparams {
        signal_var: rng.random_range(0.5..3.0),
        noise_var: rng.random_range(0.05..0.5),
        psi,
        p10: rng.random_range(0.02..0.9 * p10_max),
    }
}

/// One turbo pass with M = N against exhaustive enumeration, for N in
/// {4, 8, 10}; returns the worst belief error per instance.
pub(crate) fn vr_posterior_errors(seed: u64, instances: usize) -> Result<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut errors = Vec::new();
    for &n in &[4usize, 8, 10] {
        for _ in 0..instances {
            let hyper = random_hyper(&mut rng);
            let vr = sample_vr(VrKind::Markov, hyper.psi, hyper.p10, n, &mut rng)?;
            let x = CVector::from_fn(n, |i, _| {
                if vr.is_visible(i) {
                    complex_gaussian(&mut rng, hyper.signal_var)
                } else {
                    Default::default()
                }
            });
            let a = build_combiner(n, n, 1, &mut rng)?;
            let obs = observe(&x, &a, hyper.noise_var, &mut rng)?;
            let config = VrdompConfig {
                max_iters: 1,
                learn_hyperparams: false,
                init: Some(hyper),
                ..VrdompConfig::default()
            };
            let out = run_vrdomp(&obs.y, &a, &config)?;
            let exact = exact_vr_posterior(&out.state.x_b_pri, out.state.v_b_pri, &hyper)?;
            let err = exact
                .marginals
                .iter()
                .zip(&out.belief.posterior)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            errors.push(err);
        }
    }
    Ok(errors)
}

/// Relative error of the LMMSE shortcut against the dense formula for
/// N = 16, M = 8.
pub(crate) fn lmmse_errors(seed: u64, instances: usize) -> Result<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut errors = Vec::new();
    for _ in 0..instances {
        let a = build_combiner(16, 2, 4, &mut rng)?;
        let dense: CMatrix = a.matrix();
        let y = random_cvec(&mut rng, 8, 1.0);
        let x_pri = random_cvec(&mut rng, 16, 0.5);
        let v_pri = rng.random_range(0.1..2.0);
        let noise = rng.random_range(0.01..1.0);
        let (x_fast, v_fast) = lmmse_step(&y, &a, &x_pri, v_pri, noise);
        let (x_ref, cov) = exact_lmmse(&y, &dense, &x_pri, v_pri, noise)?;
        let v_ref = cov.diagonal().iter().map(|z| z.re).sum::<f64>() / 16.0;
        let ex = (&x_fast - &x_ref).norm() / x_ref.norm();
        let ev = (v_fast - v_ref).abs() / v_ref;
        errors.push(ex.max(ev));
    }
    Ok(errors)
}

fn chain_errors(seed: u64, instances: usize) -> Result<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut errors = Vec::new();
    for _ in 0..instances {
        let n = rng.random_range(2..40);
        let hyper = random_hyper(&mut rng);
        let pi: Vec<f64> = (0..n).map(|_| rng.random_range(0.01..0.99)).collect();
        let (f_ref, b_ref) = chain_messages(&pi, &hyper);
        let f = forward_pass(&pi, &hyper);
        let b = backward_pass(&pi, &hyper);
        let err = f
            .iter()
            .zip(&f_ref)
            .chain(b.iter().zip(&b_ref))
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        errors.push(err);
    }
    Ok(errors)
}

fn denoiser_errors(seed: u64, instances: usize) -> Result<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut errors = Vec::new();
    for _ in 0..instances {
        let signal_var = rng.random_range(0.5..2.0);
        let v = rng.random_range(0.1..1.0);
        let pi = rng.random_range(0.05..0.95);
        let x = complex_gaussian(&mut rng, signal_var + v);
        let out = denoise(&CVector::from_element(1, x), v, &[pi], signal_var);
        let (mean, var, act) = spike_slab_quadrature(x, v, pi, signal_var, 401);
        let scale = signal_var.max(x.norm_sqr());
        let err = ((out.mean[0] - mean).norm() / scale.sqrt())
            .max((out.var[0] - var).abs() / scale)
            .max((out.activity[0] - act).abs());
        errors.push(err);
    }
    Ok(errors)
}

/// K = 1 greedy fit against the exhaustive single-atom scan, and the K = 2
/// residual ordering, on a small stationary codebook.
fn sparse_errors(seed: u64, instances: usize) -> Result<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let geom = ArrayGeometry::from_carrier(32, 100e9)?;
    let codebook = build_codebook(&geom, 1)?;
    let mut errors = Vec::new();
    for _ in 0..instances {
        let a = build_combiner(32, 5, 4, &mut rng)?;
        let sensing = build_sensing(&a, &vec![1.0; 32], &codebook)?;
        let y = random_cvec(&mut rng, a.num_measurements(), 1.0);
        let greedy = bb_omp(&y, &sensing, 1, 0.0)?;
        let best = exhaustive_sparse_fit(&y, sensing.matrix(), 1)?;
        let same = greedy.support == best.support;
        let diff = (greedy.residual_norm() - best.residual_norm).abs();
        errors.push(if same { diff } else { f64::INFINITY });

        let greedy2 = bb_omp(&y, &sensing, 2, 0.0)?;
        let best2 = exhaustive_sparse_fit(&y, sensing.matrix(), 2)?;
        // Positive when the greedy residual undercuts the optimum.
        errors.push((best2.residual_norm - greedy2.residual_norm()).max(0.0));
    }
    Ok(errors)
}

/// Run every equivalence with the given seed.
pub fn run_checks(seed: u64) -> Vec<CheckOutcome> {
    vec![
        outcome("vr_posterior_vs_enumeration", vr_posterior_errors(seed, 20), 1e-6),
        outcome("lmmse_shortcut_vs_dense", lmmse_errors(seed.wrapping_add(1), 20), 1e-10),
        outcome("chain_messages_vs_tables", chain_errors(seed.wrapping_add(2), 20), 1e-10),
        outcome("denoiser_vs_quadrature", denoiser_errors(seed.wrapping_add(3), 20), 1e-5),
        outcome("greedy_vs_exhaustive", sparse_errors(seed.wrapping_add(4), 10), 1e-9),
    ]
}
