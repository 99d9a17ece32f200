//! Module A: the LMMSE estimator and Gaussian extrinsic division.

use crate::observation::CombinerMatrix;
use crate::{CVector, C64};

/// Variances are floored here after clamping.
pub const VAR_FLOOR: f64 = 1e-12;

/// Extrinsic variance used when a module returns no information.
pub const EXT_VAR_CAP: f64 = 1e6;

/// LMMSE update under the prior CN(x_pri, v_pri·I).
///
/// With A·A^H = I no inverse is needed, and A^H·A has constant diagonal M/N:
/// `x_post = x_pri + v/(v+σ²)·A^H(y − A x_pri)` and
/// `v_post = v − (M/N)·v²/(v+σ²)`.
pub fn lmmse_step(
    y: &CVector,
    combiner: &CombinerMatrix,
    x_pri: &CVector,
    v_pri: f64,
    noise_var: f64,
) -> (CVector, f64) {
    let innovation = y - combiner.apply(x_pri);
    let gain = v_pri / (v_pri + noise_var);
    let x_post = x_pri + combiner.adjoint(&innovation) * C64::from(gain);
    let v_post = v_pri - combiner.compression_ratio() * v_pri * gain;
    (x_post, v_post.max(VAR_FLOOR))
}

/// Divide the posterior CN(x_post, v_post) by the prior CN(x_pri, v_pri).
///
/// If the module gained less than [`VAR_FLOOR`] in precision the extrinsic
/// message is the posterior mean with variance [`EXT_VAR_CAP`].
pub fn extrinsic(x_post: &CVector, v_post: f64, x_pri: &CVector, v_pri: f64) -> (CVector, f64) {
    let v_post = v_post.max(VAR_FLOOR);
    if v_pri - v_post < VAR_FLOOR {
        return (x_post.clone(), EXT_VAR_CAP);
    }
    let v_ext = (v_pri * v_post / (v_pri - v_post)).clamp(VAR_FLOOR, EXT_VAR_CAP);
    let x_ext = (x_post * C64::from(1.0 / v_post) - x_pri * C64::from(1.0 / v_pri)) * C64::from(v_ext);
    (x_ext, v_ext)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::complex_gaussian;
    use crate::observation::build_combiner;
    use crate::oracle::exact_lmmse;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_vector(n: usize, var: f64, rng: &mut ChaCha8Rng) -> CVector {
        CVector::from_fn(n, |_, _| complex_gaussian(rng, var))
    }

    #[test]
    fn zero_innovation_keeps_prior_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = build_combiner(32, 3, 4, &mut rng).unwrap();
        let x_pri = random_vector(32, 1.0, &mut rng);
        let y = a.apply(&x_pri);
        let (x_post, v_post) = lmmse_step(&y, &a, &x_pri, 0.8, 0.1);
        assert!((x_post - &x_pri).norm() < 1e-12);
        let expected = 0.8 - (12.0 / 32.0) * 0.64 / 0.9;
        assert!((v_post - expected).abs() < 1e-14);
    }

    #[test]
    fn complete_noiseless_observation_inverts_combiner() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let a = build_combiner(16, 4, 4, &mut rng).unwrap();
        let x = random_vector(16, 1.0, &mut rng);
        let y = a.apply(&x);
        let (x_post, v_post) = lmmse_step(&y, &a, &CVector::zeros(16), 1.0, 1e-14);
        assert!((x_post - a.adjoint(&y)).norm() < 1e-10);
        assert!((a.adjoint(&y) - &x).norm() < 1e-10);
        assert_eq!(v_post, VAR_FLOOR);
    }

    #[test]
    fn matches_dense_formula() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let a = build_combiner(16, 2, 4, &mut rng).unwrap();
            let y = random_vector(8, 1.0, &mut rng);
            let x_pri = random_vector(16, 0.3, &mut rng);
            let v = rng.random_range(0.1..3.0);
            let s = rng.random_range(0.01..2.0);
            let (x_fast, v_fast) = lmmse_step(&y, &a, &x_pri, v, s);
            let (x_ref, cov) = exact_lmmse(&y, &a.matrix(), &x_pri, v, s).unwrap();
            assert!((&x_fast - &x_ref).norm() <= 1e-10 * x_ref.norm());
            let v_ref = cov.diagonal().iter().map(|z| z.re).sum::<f64>() / 16.0;
            assert!((v_fast - v_ref).abs() <= 1e-10 * v_ref);
        }
    }

    #[test]
    fn extrinsic_algebra() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let x_post = random_vector(6, 1.0, &mut rng);
        let (x_ext, v_ext) = extrinsic(&x_post, 0.5, &CVector::zeros(6), 1.0);
        assert!((v_ext - 1.0).abs() < 1e-15);
        assert!((x_ext - &x_post * C64::from(2.0)).norm() < 1e-12);

        let (x_ext, v_ext) = extrinsic(&x_post, 0.5, &x_post, 1.0);
        assert!((v_ext - 1.0).abs() < 1e-15);
        assert!((x_ext - &x_post).norm() < 1e-12);
    }

    #[test]
    fn extrinsic_times_prior_is_posterior() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..50 {
            let v_pri = rng.random_range(0.2..5.0);
            let v_post = v_pri * rng.random_range(0.05..0.95);
            let x_pri = random_vector(5, 1.0, &mut rng);
            let x_post = random_vector(5, 1.0, &mut rng);
            let (x_ext, v_ext) = extrinsic(&x_post, v_post, &x_pri, v_pri);
            let precision = 1.0 / v_ext + 1.0 / v_pri;
            let v = 1.0 / precision;
            let x = (&x_ext * C64::from(1.0 / v_ext) + &x_pri * C64::from(1.0 / v_pri)) * C64::from(v);
            assert!((v - v_post).abs() < 1e-10 * v_post);
            assert!((x - &x_post).norm() < 1e-10 * x_post.norm().max(1.0));
        }
    }

    #[test]
    fn uninformative_module_hits_the_cap() {
        let x = CVector::from_element(3, C64::new(1.0, -1.0));
        let (x_ext, v_ext) = extrinsic(&x, 1.0, &CVector::zeros(3), 1.0);
        assert_eq!(v_ext, EXT_VAR_CAP);
        assert_eq!(x_ext, x);
        let (_, v_ext) = extrinsic(&x, 2.0, &CVector::zeros(3), 1.0);
        assert_eq!(v_ext, EXT_VAR_CAP);
    }
}
