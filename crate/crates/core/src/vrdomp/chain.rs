//! Module B message passing over the Markov visibility chain.
//!
//! Messages are carried as log-odds internally; the public functions take and
//! return probabilities.

use crate::channel::VisibilityRegion;
use crate::math::{log_add_exp, logit, sigmoid};
use crate::CVector;

use super::Hyperparams;

/// Keeps ψ away from {0, 1} so the boundary log-odds stay finite.
const PSI_GUARD: f64 = 1e-12;

/// log P(visible-hypothesis) − log P(invisible-hypothesis) for each entry of
/// the Gaussian pseudo-observation `x_pri = x + CN(0, v)`.
pub(crate) fn likelihood_out_llr(x_pri: &CVector, v_pri: f64, signal_var: f64) -> Vec<f64> {
    let total = signal_var + v_pri;
    let log_ratio = (v_pri / total).ln();
    let c = signal_var / (v_pri * total);
    x_pri.iter().map(|z| log_ratio + c * z.norm_sqr()).collect()
}

/// π_out,n = d_n / (CN(0; x_n, v) + d_n) with d_n = CN(0; x_n, σ² + v).
pub fn likelihood_out(x_pri: &CVector, v_pri: f64, signal_var: f64) -> Vec<f64> {
    likelihood_out_llr(x_pri, v_pri, signal_var)
        .into_iter()
        .map(sigmoid)
        .collect()
}

struct LogTransitions {
    p01: f64,
    p00: f64,
    p10: f64,
    p11: f64,
}

impl LogTransitions {
    fn new(h: &Hyperparams) -> Self {
        Self {
            p01: h.p01().ln(),
            p00: h.p00().ln(),
            p10: h.p10.ln(),
            p11: h.p11().ln(),
        }
    }
}

/// ln(p·e^m) in the log domain; an impossible transition stays impossible
/// whatever the message.
#[inline]
fn weigh(log_p: f64, llr: f64) -> f64 {
    if log_p == f64::NEG_INFINITY {
        log_p
    } else {
        log_p + llr
    }
}

/// Forward messages ψ^f as log-odds; ψ^f_1 = ψ.
pub(crate) fn forward_llr(out: &[f64], hyper: &Hyperparams) -> Vec<f64> {
    let t = LogTransitions::new(hyper);
    let mut fwd = Vec::with_capacity(out.len());
    if out.is_empty() {
        return fwd;
    }
    fwd.push(logit(hyper.psi.clamp(PSI_GUARD, 1.0 - PSI_GUARD)));
    for n in 1..out.len() {
        let e = fwd[n - 1] + out[n - 1];
        let one = log_add_exp(t.p01, weigh(t.p11, e));
        let zero = log_add_exp(t.p00, weigh(t.p10, e));
        fwd.push(one - zero);
    }
    fwd
}

/// Backward messages ψ^b as log-odds; ψ^b_N = 1/2.
pub(crate) fn backward_llr(out: &[f64], hyper: &Hyperparams) -> Vec<f64> {
    let t = LogTransitions::new(hyper);
    let n = out.len();
    let mut bwd = vec![0.0; n];
    for i in (0..n.saturating_sub(1)).rev() {
        let e = bwd[i + 1] + out[i + 1];
        let one = log_add_exp(t.p10, weigh(t.p11, e));
        let zero = log_add_exp(t.p00, weigh(t.p01, e));
        bwd[i] = one - zero;
    }
    bwd
}

/// Forward sweep over the chain given π_out.
pub fn forward_pass(pi_out: &[f64], hyper: &Hyperparams) -> Vec<f64> {
    let out: Vec<f64> = pi_out.iter().map(|&p| logit(p)).collect();
    forward_llr(&out, hyper).into_iter().map(sigmoid).collect()
}

/// Backward sweep over the chain given π_out.
pub fn backward_pass(pi_out: &[f64], hyper: &Hyperparams) -> Vec<f64> {
    let out: Vec<f64> = pi_out.iter().map(|&p| logit(p)).collect();
    backward_llr(&out, hyper).into_iter().map(sigmoid).collect()
}

/// ψ^post_n ∝ π_out ψ^f ψ^b against (1−π_out)(1−ψ^f)(1−ψ^b).
///
/// A 0/0 (contradicting certainties) resolves to `prior`.
pub fn belief(pi_out: &[f64], psi_f: &[f64], psi_b: &[f64], prior: f64) -> Vec<f64> {
    debug_assert!(pi_out.len() == psi_f.len() && psi_f.len() == psi_b.len());
    pi_out
        .iter()
        .zip(psi_f)
        .zip(psi_b)
        .map(|((&o, &f), &b)| {
            let yes = o * f * b;
            let no = (1.0 - o) * (1.0 - f) * (1.0 - b);
            if yes + no > 0.0 {
                yes / (yes + no)
            } else {
                let llr = logit(o) + logit(f) + logit(b);
                if llr.is_nan() {
                    prior
                } else {
                    sigmoid(llr)
                }
            }
        })
        .collect()
}

pub(crate) fn belief_llr(out: &[f64], fwd: &[f64], bwd: &[f64], prior: f64) -> Vec<f64> {
    out.iter()
        .zip(fwd)
        .zip(bwd)
        .map(|((&o, &f), &b)| {
            let llr = o + f + b;
            if llr.is_nan() {
                prior
            } else {
                sigmoid(llr)
            }
        })
        .collect()
}

/// π_in,n = ψ^f ψ^b / (ψ^f ψ^b + (1−ψ^f)(1−ψ^b)).
pub fn prior_in(psi_f: &[f64], psi_b: &[f64]) -> Vec<f64> {
    psi_f
        .iter()
        .zip(psi_b)
        .map(|(&f, &b)| {
            let yes = f * b;
            let no = (1.0 - f) * (1.0 - b);
            if yes + no > 0.0 {
                yes / (yes + no)
            } else {
                0.5
            }
        })
        .collect()
}

/// α̂_n = 1 ⇔ ψ^post_n > ψ_th.
pub fn threshold(psi_post: &[f64], psi_th: f64) -> VisibilityRegion {
    VisibilityRegion::from_indicator(psi_post.iter().map(|&p| p > psi_th).collect())
}

/// Normalised exp(w); infinite weights share all of the mass.
fn softmax<const K: usize>(w: [f64; K]) -> [f64; K] {
    let peak = w.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if peak == f64::INFINITY {
        let count = w.iter().filter(|&&v| v == f64::INFINITY).count() as f64;
        return w.map(|v| if v == f64::INFINITY { 1.0 / count } else { 0.0 });
    }
    let e = w.map(|v| (v - peak).exp());
    let total: f64 = e.iter().sum();
    e.map(|v| v / total)
}

/// Per adjacent pair, (P(α_n=1, α_{n+1}=0), P(α_n=1)) under the chain
/// posterior, from the same messages that produce the beliefs.
pub(crate) fn pairwise_drop_posteriors(
    out: &[f64],
    fwd: &[f64],
    bwd: &[f64],
    hyper: &Hyperparams,
) -> Vec<(f64, f64)> {
    let t = LogTransitions::new(hyper);
    (0..out.len().saturating_sub(1))
        .map(|n| {
            let left = fwd[n] + out[n];
            let right = bwd[n + 1] + out[n + 1];
            let w10 = weigh(t.p10, left);
            let w11 = weigh(t.p11, left + right);
            let w00 = t.p00;
            let w01 = weigh(t.p01, right);
            let [p10, p11, _, _] = softmax([w10, w11, w00, w01]);
            (p10, p10 + p11)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::chain_messages;
    use crate::C64;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn hyper(psi: f64, p10: f64) -> Hyperparams {
        Hyperparams::new(1.0, 0.1, psi, p10).unwrap()
    }

    fn max_diff(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
    }

    #[test]
    fn likelihood_limits() {
        let x = CVector::from_vec(vec![C64::new(0.3, -1.2), C64::new(2.0, 0.5)]);
        for p in likelihood_out(&x, 0.7, 1e-12) {
            assert!((p - 0.5).abs() < 1e-9);
        }
        let p = likelihood_out(&CVector::zeros(1), 0.4, 0.4);
        assert!((p[0] - 1.0 / 3.0).abs() < 1e-15);
        let (v, s) = (0.3, 1.1);
        let big = CVector::from_element(1, C64::new((100.0f64 * (s + v)).sqrt(), 0.0));
        assert!(likelihood_out(&big, v, s)[0] > 0.99);
    }

    #[test]
    fn uninformative_messages_keep_the_stationary_prior() {
        let h = hyper(0.3, 0.2);
        let half = vec![0.5; 9];
        assert!(forward_pass(&half, &h).iter().all(|p| (p - 0.3).abs() < 1e-12));
        assert!(backward_pass(&half, &h).iter().all(|p| (p - 0.5).abs() < 1e-12));
    }

    #[test]
    fn frozen_chain_without_evidence() {
        // p10 = 0 forces p01 = 0 as well.
        let h = hyper(0.4, 0.0);
        assert_eq!(h.p01(), 0.0);
        assert!(forward_pass(&[0.5; 6], &h).iter().all(|p| (p - 0.4).abs() < 1e-12));
    }

    #[test]
    fn forward_and_backward_match_table_products() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let psi: f64 = rng.random_range(0.1..0.9);
            let p10 = rng.random_range(0.01..0.9 * ((1.0 - psi) / psi).min(1.0));
            let h = hyper(psi, p10);
            let pi: Vec<f64> = (0..8).map(|_| rng.random_range(0.01..0.99)).collect();
            let (f_ref, b_ref) = chain_messages(&pi, &h);
            assert!(max_diff(&forward_pass(&pi, &h), &f_ref) < 1e-12);
            assert!(max_diff(&backward_pass(&pi, &h), &b_ref) < 1e-12);
        }
    }

    #[test]
    fn two_antenna_backward_message() {
        let h = hyper(0.25, 0.3);
        let pi = [0.8, 0.6];
        let b = backward_pass(&pi, &h);
        assert_eq!(b[1], 0.5);
        let (p01, p11) = (0.25 * 0.3 / 0.75, 0.7);
        let one = 0.3 * 0.4 + p11 * 0.6;
        let zero = (1.0 - p01) * 0.4 + p01 * 0.6;
        assert!((b[0] - one / (one + zero)).abs() < 1e-14);
    }

    #[test]
    fn symmetric_chain_is_reversible() {
        let h = hyper(0.5, 0.15);
        assert!((h.p01() - h.p10).abs() < 1e-15);
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let pi: Vec<f64> = (0..10).map(|_| rng.random_range(0.05..0.95)).collect();
        let rev: Vec<f64> = pi.iter().rev().cloned().collect();
        let mut fwd_rev = forward_pass(&rev, &h);
        fwd_rev.reverse();
        assert!(max_diff(&backward_pass(&pi, &h), &fwd_rev) < 1e-12);

        let post = belief(&pi, &forward_pass(&pi, &h), &backward_pass(&pi, &h), 0.5);
        let mut post_rev = belief(&rev, &forward_pass(&rev, &h), &backward_pass(&rev, &h), 0.5);
        post_rev.reverse();
        assert!(max_diff(&post, &post_rev) < 1e-12);
    }

    #[test]
    fn belief_and_threshold() {
        assert_eq!(belief(&[0.5], &[0.5], &[0.5], 0.3), vec![0.5]);
        assert_eq!(belief(&[1.0], &[0.0], &[0.5], 0.3), vec![0.3]);
        let vr = threshold(&[0.9, 0.3], 0.5);
        assert_eq!(vr.indicator(), &[true, false]);
        let vr = threshold(&[0.5], 0.5);
        assert_eq!(vr.indicator(), &[false]);
    }

    #[test]
    fn prior_in_combines_both_directions() {
        let p = prior_in(&[0.5, 0.2, 1.0], &[0.5, 0.5, 0.0]);
        assert!((p[0] - 0.5).abs() < 1e-15);
        assert!((p[1] - 0.2).abs() < 1e-15);
        assert_eq!(p[2], 0.5);
    }

    #[test]
    fn pairwise_posteriors_are_consistent_with_beliefs() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let h = hyper(0.35, 0.2);
        let out: Vec<f64> = (0..12).map(|_| rng.random_range(-3.0..3.0)).collect();
        let fwd = forward_llr(&out, &h);
        let bwd = backward_llr(&out, &h);
        let post = belief_llr(&out, &fwd, &bwd, h.psi);
        for (n, (drop, one)) in pairwise_drop_posteriors(&out, &fwd, &bwd, &h).into_iter().enumerate() {
            assert!((one - post[n]).abs() < 1e-12);
            assert!((0.0..=one + 1e-15).contains(&drop));
        }
    }

    #[test]
    fn certain_visibility_propagates_without_nan() {
        let h = Hyperparams::new(1.0, 0.1, 1.0, 0.0).unwrap();
        let out = vec![40.0; 6];
        let fwd = forward_llr(&out, &h);
        let bwd = backward_llr(&out, &h);
        assert!(fwd.iter().chain(&bwd).all(|l| !l.is_nan()));
        assert!(belief_llr(&out, &fwd, &bwd, h.psi).iter().all(|&p| p == 1.0));
        for (drop, one) in pairwise_drop_posteriors(&out, &fwd, &bwd, &h) {
            assert_eq!(drop, 0.0);
            assert_eq!(one, 1.0);
        }
    }
}
