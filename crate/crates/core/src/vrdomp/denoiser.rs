//! Module B spike-and-slab posterior under the Gaussian pseudo-observation.

use crate::math::sigmoid;
use crate::{CVector, C64};

use super::chain::likelihood_out_llr;

#[derive(Debug, Clone)]
pub struct DenoiserOutput {
    /// E[x_n | x_pri].
    pub mean: CVector,
    /// Var[x_n | x_pri].
    pub var: Vec<f64>,
    /// (1/N) Σ_n Var[x_n | x_pri].
    pub mean_var: f64,
    /// Posterior probability of the slab component per entry.
    pub activity: Vec<f64>,
}

/// Posterior moments of x_n under the prior π_in CN(0, σ²) + (1 − π_in) δ
/// and the observation x_pri = x + CN(0, v).
///
/// The variance is E|x|² − |E x|² of the two-component posterior, which is
/// regular at x_pri = 0.
pub fn denoise(x_pri: &CVector, v_pri: f64, pi_in: &[f64], signal_var: f64) -> DenoiserOutput {
    let prior_llr: Vec<f64> = pi_in
        .iter()
        .map(|&p| {
            if p <= 0.0 {
                f64::NEG_INFINITY
            } else if p >= 1.0 {
                f64::INFINITY
            } else {
                p.ln() - (1.0 - p).ln()
            }
        })
        .collect();
    denoise_llr(x_pri, v_pri, &prior_llr, signal_var)
}

pub(crate) fn denoise_llr(
    x_pri: &CVector,
    v_pri: f64,
    prior_llr: &[f64],
    signal_var: f64,
) -> DenoiserOutput {
    let n = x_pri.len();
    let out = likelihood_out_llr(x_pri, v_pri, signal_var);
    let shrink = signal_var / (signal_var + v_pri);
    let slab_var = signal_var * v_pri / (signal_var + v_pri);

    let mut mean = CVector::zeros(n);
    let mut var = Vec::with_capacity(n);
    let mut activity = Vec::with_capacity(n);
    for i in 0..n {
        let pi = {
            let llr = prior_llr[i] + out[i];
            if llr.is_nan() {
                0.0
            } else {
                sigmoid(llr)
            }
        };
        let mu: C64 = x_pri[i] * shrink;
        mean[i] = mu * pi;
        var.push(pi * slab_var + pi * (1.0 - pi) * mu.norm_sqr());
        activity.push(pi);
    }
    let mean_var = if n == 0 { 0.0 } else { var.iter().sum::<f64>() / n as f64 };
    DenoiserOutput {
        mean,
        var,
        mean_var,
        activity,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::complex_gaussian;
    use crate::oracle::spike_slab_quadrature;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn certain_slab_is_gaussian_shrinkage() {
        let x = CVector::from_vec(vec![C64::new(0.7, -0.2), C64::new(-1.5, 2.0)]);
        let (s, v) = (1.3, 0.4);
        let out = denoise(&x, v, &[1.0, 1.0], s);
        let a = s / (s + v);
        assert!((&out.mean - &x * C64::from(a)).norm() < 1e-14);
        for var in &out.var {
            assert!((var - s * v / (s + v)).abs() < 1e-14);
        }
        assert_eq!(out.activity, vec![1.0, 1.0]);
    }

    #[test]
    fn certain_spike_is_zero() {
        let x = CVector::from_element(3, C64::new(4.0, 1.0));
        let out = denoise(&x, 0.5, &[0.0; 3], 2.0);
        assert_eq!(out.mean, CVector::zeros(3));
        assert_eq!(out.var, vec![0.0; 3]);
        assert_eq!(out.mean_var, 0.0);
    }

    #[test]
    fn matches_quadrature() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..10 {
            let s = rng.random_range(0.3..3.0);
            let v = rng.random_range(0.05..1.5);
            let pi = rng.random_range(0.05..0.95);
            let x = complex_gaussian(&mut rng, s + v);
            let out = denoise(&CVector::from_element(1, x), v, &[pi], s);
            let (mean, var, act) = spike_slab_quadrature(x, v, pi, s, 601);
            assert!((out.mean[0] - mean).norm() < 1e-8, "{} vs {}", out.mean[0], mean);
            assert!((out.var[0] - var).abs() < 1e-8);
            assert!((out.activity[0] - act).abs() < 1e-8);
        }
    }

    #[test]
    fn regular_at_zero_observation() {
        let out = denoise(&CVector::zeros(1), 0.5, &[0.3], 1.0);
        assert_eq!(out.mean[0], C64::new(0.0, 0.0));
        assert!(out.var[0].is_finite() && out.var[0] > 0.0);
        let (_, var, _) = spike_slab_quadrature(C64::new(0.0, 0.0), 0.5, 0.3, 1.0, 601);
        assert!((out.var[0] - var).abs() < 1e-8);
    }

    #[test]
    fn phase_rotation_commutes() {
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        let x = CVector::from_fn(8, |_, _| complex_gaussian(&mut rng, 1.0));
        let pi: Vec<f64> = (0..8).map(|_| rng.random_range(0.1..0.9)).collect();
        let rot = C64::from_polar(1.0, 0.9);
        let a = denoise(&x, 0.3, &pi, 1.2);
        let b = denoise(&(&x * rot), 0.3, &pi, 1.2);
        assert!((&a.mean * rot - &b.mean).norm() < 1e-12);
        for (u, w) in a.var.iter().zip(&b.var) {
            assert!((u - w).abs() < 1e-12);
        }
    }

    #[test]
    fn mean_variance_is_the_average() {
        let x = CVector::from_vec(vec![C64::new(0.1, 0.0), C64::new(3.0, 0.0)]);
        let out = denoise(&x, 0.2, &[0.4, 0.6], 1.0);
        assert!((out.mean_var - (out.var[0] + out.var[1]) / 2.0).abs() < 1e-15);
    }
}
