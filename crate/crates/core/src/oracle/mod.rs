//! Brute-force references for tests and `oracle-check`.
//!
//! Nothing here calls into the message-passing or greedy code paths: every
//! routine uses explicit loops, dense matrices and explicit inverses, and is
//! only meant for toy sizes.

use std::f64::consts::PI;

use crate::bbomp::ZERO_COLUMN_REL;
use crate::vrdomp::Hyperparams;
use crate::{CMatrix, CVector, Error, Result, C64};

/// Largest N accepted by [`exact_vr_posterior`].
pub const MAX_ENUMERATION_ANTENNAS: usize = 12;
/// Largest number of supports accepted by [`exhaustive_sparse_fit`].
pub const MAX_SUPPORTS: u64 = 1_000_000;

/// Posterior mean and full covariance of x for y = A x + w, x ~ CN(x_pri, v_pri I),
/// w ~ CN(0, σ_N² I), via V = (A^H A/σ_N² + I/v_pri)^{-1}.
pub fn exact_lmmse(
    y: &CVector,
    a: &CMatrix,
    x_pri: &CVector,
    v_pri: f64,
    noise_var: f64,
) -> Result<(CVector, CMatrix)> {
    let (m, n) = a.shape();
    if y.len() != m || x_pri.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "A is {m}×{n}, y has {}, x_pri has {}",
            y.len(),
            x_pri.len()
        )));
    }
    if !(v_pri > 0.0 && noise_var > 0.0) {
        return Err(Error::Singular);
    }
    let ah = a.adjoint();
    let mut precision = (&ah * a).map(|z| z / noise_var);
    for i in 0..n {
        precision[(i, i)] += C64::new(1.0 / v_pri, 0.0);
    }
    let cov = precision.try_inverse().ok_or(Error::Singular)?;
    let rhs = (&ah * y).map(|z| z / noise_var) + x_pri.map(|z| z / v_pri);
    Ok((&cov * rhs, cov))
}

#[derive(Debug, Clone)]
pub struct EnumerationPosterior {
    /// p(α_n = 1 | observation).
    pub marginals: Vec<f64>,
    /// Normalised p(α | observation); bit n of the index is α_n.
    pub joint: Vec<f64>,
    /// ln Σ_α p(α) p(obs | α).
    pub log_normalizer: f64,
}

fn ln_cn_zero_mean(x: C64, var: f64) -> f64 {
    -(PI * var).ln() - x.norm_sqr() / var
}

/// Exact VR marginals under the Markov prior and the Bernoulli–Gaussian
/// observation model, summing over all 2^N visibility patterns.
pub fn exact_vr_posterior(x_pri: &CVector, v_pri: f64, hyper: &Hyperparams) -> Result<EnumerationPosterior> {
    let n = x_pri.len();
    if n == 0 || n > MAX_ENUMERATION_ANTENNAS {
        return Err(Error::InvalidParameter(format!(
            "enumeration needs 1 ≤ N ≤ {MAX_ENUMERATION_ANTENNAS}, got {n}"
        )));
    }
    let psi = hyper.psi;
    let p10 = hyper.p10;
    let p01 = if psi >= 1.0 { 1.0 } else { (psi * p10 / (1.0 - psi)).min(1.0) };
    // trans[prev][next]
    let trans = [[1.0 - p01, p01], [p10, 1.0 - p10]];
    let first = [1.0 - psi, psi];
    let ll: Vec<[f64; 2]> = x_pri
        .iter()
        .map(|&x| [ln_cn_zero_mean(x, v_pri), ln_cn_zero_mean(x, v_pri + hyper.signal_var)])
        .collect();

    let count = 1usize << n;
    let mut logw = vec![f64::NEG_INFINITY; count];
    for (pattern, w) in logw.iter_mut().enumerate() {
        let bit = |k: usize| (pattern >> k) & 1;
        let mut lp = first[bit(0)].ln() + ll[0][bit(0)];
        for k in 1..n {
            lp += trans[bit(k - 1)][bit(k)].ln() + ll[k][bit(k)];
        }
        *w = lp;
    }
    let peak = logw.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let total: f64 = logw.iter().map(|w| (w - peak).exp()).sum();
    let log_normalizer = peak + total.ln();
    let joint: Vec<f64> = logw.iter().map(|w| (w - log_normalizer).exp()).collect();
    let mut marginals = vec![0.0; n];
    for (pattern, p) in joint.iter().enumerate() {
        for (k, m) in marginals.iter_mut().enumerate() {
            if (pattern >> k) & 1 == 1 {
                *m += p;
            }
        }
    }
    Ok(EnumerationPosterior {
        marginals,
        joint,
        log_normalizer,
    })
}

/// Forward and backward chain messages P(α_n = 1 | ·) by explicit 2×2
/// table products in the probability domain. The backward boundary is
/// uniform.
pub fn chain_messages(pi_out: &[f64], hyper: &Hyperparams) -> (Vec<f64>, Vec<f64>) {
    let n = pi_out.len();
    let psi = hyper.psi;
    let p10 = hyper.p10;
    let p01 = if psi >= 1.0 { 1.0 } else { (psi * p10 / (1.0 - psi)).min(1.0) };
    let t = [[1.0 - p01, p01], [p10, 1.0 - p10]];
    let like = |k: usize| [1.0 - pi_out[k], pi_out[k]];

    let mut fwd = vec![[0.0; 2]; n];
    let mut bwd = vec![[0.0; 2]; n];
    if n == 0 {
        return (vec![], vec![]);
    }
    fwd[0] = [1.0 - psi, psi];
    for k in 1..n {
        let l = like(k - 1);
        let mut next = [0.0; 2];
        for (j, nj) in next.iter_mut().enumerate() {
            for i in 0..2 {
                *nj += fwd[k - 1][i] * l[i] * t[i][j];
            }
        }
        let s = next[0] + next[1];
        fwd[k] = [next[0] / s, next[1] / s];
    }
    bwd[n - 1] = [0.5, 0.5];
    for k in (0..n - 1).rev() {
        let l = like(k + 1);
        let mut prev = [0.0; 2];
        for (i, pi) in prev.iter_mut().enumerate() {
            for j in 0..2 {
                *pi += t[i][j] * l[j] * bwd[k + 1][j];
            }
        }
        let s = prev[0] + prev[1];
        bwd[k] = [prev[0] / s, prev[1] / s];
    }
    (fwd.iter().map(|f| f[1]).collect(), bwd.iter().map(|b| b[1]).collect())
}

/// Posterior moments of x given x_pri = x + CN(0, v_pri) and the prior
/// (1 − π)δ(x) + π CN(x; 0, σ²), with the slab integrated on a square
/// trapezoid grid of `points`² nodes.
///
/// Returns (E[x], E|x|² − |E[x]|², P(x ≠ 0)).
pub fn spike_slab_quadrature(x_pri: C64, v_pri: f64, pi: f64, signal_var: f64, points: usize) -> (C64, f64, f64) {
    let points = points.max(3);
    // Likelihood and slab overlap where both are non-negligible.
    let post_var = 1.0 / (1.0 / signal_var + 1.0 / v_pri);
    let centre = x_pri * (post_var / v_pri);
    let half = 10.0 * post_var.sqrt();
    let h = 2.0 * half / (points - 1) as f64;

    let mut z = 0.0;
    let mut m1 = C64::new(0.0, 0.0);
    let mut m2 = 0.0;
    for i in 0..points {
        let wi = if i == 0 || i == points - 1 { 0.5 } else { 1.0 };
        for k in 0..points {
            let wk = if k == 0 || k == points - 1 { 0.5 } else { 1.0 };
            let x = centre + C64::new(-half + i as f64 * h, -half + k as f64 * h);
            let dens = (ln_cn_zero_mean(x, signal_var) + ln_cn_zero_mean(x_pri - x, v_pri)).exp();
            let w = wi * wk * h * h * dens;
            z += w;
            m1 += x * w;
            m2 += x.norm_sqr() * w;
        }
    }
    let slab_mass = pi * z;
    let spike_mass = (1.0 - pi) * ln_cn_zero_mean(x_pri, v_pri).exp();
    let evidence = slab_mass + spike_mass;
    let activity = slab_mass / evidence;
    let mean = m1 * (pi / evidence);
    let second = m2 * pi / evidence;
    (mean, second - mean.norm_sqr(), activity)
}

#[derive(Debug, Clone)]
pub struct ExhaustiveFit {
    /// Ascending atom indices.
    pub support: Vec<usize>,
    pub coefficients: CVector,
    pub residual_norm: f64,
}

fn binomial(n: usize, k: usize) -> Option<u64> {
    let k = k.min(n.saturating_sub(k));
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
        if acc > u64::MAX as u128 {
            return None;
        }
    }
    Some(acc as u64)
}

/// Best K-sparse least-squares fit over every support of size K, solved by
/// the normal equations with an explicit inverse. Supports whose Gram matrix
/// is singular, or that touch a numerically zero column, are skipped.
pub fn exhaustive_sparse_fit(y: &CVector, phi: &CMatrix, k: usize) -> Result<ExhaustiveFit> {
    let (m, l) = phi.shape();
    if y.len() != m {
        return Err(Error::DimensionMismatch(format!("y has {}, Φ has {m} rows", y.len())));
    }
    if k == 0 || k > l {
        return Err(Error::InvalidParameter(format!("support size {k} with {l} atoms")));
    }
    let supports = binomial(l, k).unwrap_or(u64::MAX);
    if supports > MAX_SUPPORTS {
        return Err(Error::CombinatorialBlowup {
            atoms: l,
            support: k,
            limit: MAX_SUPPORTS,
        });
    }
    // Columns at round-off level carry no signal and are skipped, as in the greedy search.
    let norms: Vec<f64> = phi.column_iter().map(|c| c.norm()).collect();
    let floor = ZERO_COLUMN_REL * norms.iter().cloned().fold(0.0, f64::max);
    let mut idx: Vec<usize> = (0..k).collect();
    let mut best: Option<(f64, Vec<usize>, CVector)> = None;
    loop {
        if idx.iter().any(|&j| norms[j] <= floor) {
            if !advance(&mut idx, l) {
                break;
            }
            continue;
        }
        let sub = CMatrix::from_fn(m, k, |r, c| phi[(r, idx[c])]);
        let gram = sub.adjoint() * &sub;
        if let Some(inv) = gram.try_inverse() {
            let c = inv * (sub.adjoint() * y);
            let res = (y - &sub * &c).norm();
            if best.as_ref().is_none_or(|(b, _, _)| res < *b) {
                best = Some((res, idx.clone(), c));
            }
        }
        if !advance(&mut idx, l) {
            break;
        }
    }
    let (residual_norm, support, c) = best.ok_or(Error::Singular)?;
    let mut coefficients = CVector::zeros(l);
    for (&j, v) in support.iter().zip(c.iter()) {
        coefficients[j] = *v;
    }
    Ok(ExhaustiveFit {
        support,
        coefficients,
        residual_norm,
    })
}

/// Step to the next k-combination of 0..l in lexicographic order.
fn advance(idx: &mut [usize], l: usize) -> bool {
    let k = idx.len();
    for i in (0..k).rev() {
        if idx[i] < l - k + i {
            idx[i] += 1;
            for j in i + 1..k {
                idx[j] = idx[j - 1] + 1;
            }
            return true;
        }
    }
    false
}

mod checks;
pub use checks::{run_checks, CheckOutcome};

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::complex_gaussian;
    use crate::observation::build_combiner;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_vector(n: usize, var: f64, rng: &mut ChaCha8Rng) -> CVector {
        CVector::from_fn(n, |_, _| complex_gaussian(rng, var))
    }

    #[test]
    fn lmmse_limits() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = build_combiner(16, 2, 4, &mut rng).unwrap().matrix();
        let y = random_vector(8, 1.0, &mut rng);
        let x_pri = random_vector(16, 1.0, &mut rng);
        let (x, _) = exact_lmmse(&y, &a, &CVector::zeros(16), 1e4, 1e-3).unwrap();
        assert!((x - a.adjoint() * &y).norm() < 1e-6 * y.norm());
        let (x, _) = exact_lmmse(&y, &a, &x_pri, 1.0, 1e12).unwrap();
        assert!((x - &x_pri).norm() < 1e-9 * x_pri.norm());
        assert!(exact_lmmse(&y, &a, &x_pri, 0.0, 1.0).is_err());
        assert!(exact_lmmse(&random_vector(7, 1.0, &mut rng), &a, &x_pri, 1.0, 1.0).is_err());
    }

    #[test]
    fn enumeration_is_normalised() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let hyper = Hyperparams::new(1.3, 0.2, 0.4, 0.3).unwrap();
        let post = exact_vr_posterior(&random_vector(9, 1.0, &mut rng), 0.5, &hyper).unwrap();
        assert_eq!(post.joint.len(), 512);
        assert!((post.joint.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(post.marginals.iter().all(|m| (0.0..=1.0).contains(m)));
        assert!(post.log_normalizer.is_finite());
        assert!(exact_vr_posterior(&CVector::zeros(13), 0.5, &hyper).is_err());
    }

    #[test]
    fn vanishing_slab_returns_prior() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let hyper = Hyperparams::new(1e-14, 0.2, 0.3, 0.2).unwrap();
        let post = exact_vr_posterior(&random_vector(6, 1.0, &mut rng), 0.5, &hyper).unwrap();
        for m in post.marginals {
            assert!((m - 0.3).abs() < 1e-10);
        }
    }

    #[test]
    fn single_antenna_marginal() {
        let hyper = Hyperparams::new(2.0, 0.1, 0.35, 0.2).unwrap();
        let x = C64::new(0.8, -0.4);
        let v = 0.6;
        let post = exact_vr_posterior(&CVector::from_element(1, x), v, &hyper).unwrap();
        let d1 = (-x.norm_sqr() / (v + 2.0)).exp() / (PI * (v + 2.0));
        let d0 = (-x.norm_sqr() / v).exp() / (PI * v);
        let pi_out = d1 / (d0 + d1);
        // Forward message ψ, backward message 1/2.
        let yes = pi_out * 0.35 * 0.5;
        let no = (1.0 - pi_out) * 0.65 * 0.5;
        assert!((post.marginals[0] - yes / (yes + no)).abs() < 1e-14);
    }

    #[test]
    fn chain_messages_without_evidence() {
        let hyper = Hyperparams::new(1.0, 0.1, 0.2, 0.4).unwrap();
        let (f, b) = chain_messages(&[0.5; 5], &hyper);
        assert!(f.iter().all(|p| (p - 0.2).abs() < 1e-15));
        assert!(b.iter().all(|p| (p - 0.5).abs() < 1e-15));
    }

    #[test]
    fn quadrature_of_pure_slab_is_gaussian() {
        let (x, v, s) = (C64::new(1.2, 0.3), 0.4, 1.5);
        let (mean, var, act) = spike_slab_quadrature(x, v, 1.0, s, 401);
        assert!((mean - x * (s / (s + v))).norm() < 1e-10);
        assert!((var - s * v / (s + v)).abs() < 1e-10);
        assert_eq!(act, 1.0);
    }

    #[test]
    fn exhaustive_fit_recovers_noiseless_truth() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let phi = CMatrix::from_fn(10, 20, |_, _| complex_gaussian(&mut rng, 1.0));
        let mut truth = CVector::zeros(20);
        truth[3] = C64::new(1.0, 2.0);
        truth[17] = C64::new(-0.5, 0.1);
        let fit = exhaustive_sparse_fit(&(&phi * &truth), &phi, 2).unwrap();
        assert_eq!(fit.support, vec![3, 17]);
        assert!(fit.residual_norm < 1e-10);
        assert!((fit.coefficients - truth).norm() < 1e-10);
    }

    #[test]
    fn exhaustive_single_atom_is_a_scan() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let phi = CMatrix::from_fn(8, 64, |_, _| complex_gaussian(&mut rng, 1.0));
        let y = random_vector(8, 1.0, &mut rng);
        let fit = exhaustive_sparse_fit(&y, &phi, 1).unwrap();
        let residual = |j: usize| {
            let c = phi.column(j);
            let coef = c.dotc(&y) / c.norm_squared();
            (&y - c * coef).norm()
        };
        let best = (0..64).min_by(|&i, &j| residual(i).total_cmp(&residual(j))).unwrap();
        assert_eq!(fit.support, vec![best]);
        assert!((fit.residual_norm - residual(best)).abs() < 1e-12);
    }

    #[test]
    fn exhaustive_fit_refuses_blowup() {
        let phi = CMatrix::zeros(4, 512);
        assert!(matches!(
            exhaustive_sparse_fit(&CVector::zeros(4), &phi, 8),
            Err(Error::CombinatorialBlowup { .. })
        ));
        assert!(exhaustive_sparse_fit(&CVector::zeros(4), &phi, 0).is_err());
    }

    #[test]
    fn checks_pass_for_several_seeds() {
        for seed in [7, 8, 2024] {
            for check in run_checks(seed) {
                assert!(check.passed, "{check:?} (seed {seed})");
                assert!(check.cases > 0);
            }
        }
    }
}
