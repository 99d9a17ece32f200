//! EM re-estimation of ϑ = {σ², σ_N², ψ, p10}.
//!
//! Complete data are (x, α). Given the module-B posteriors
//! q(x_n) = (1 − ρ_n) δ(x_n) + ρ_n CN(x_n; μ_n, s_n) with ρ_n = ψ^post_n, and
//! the pairwise chain posteriors, maximising the expected log-joint gives
//!
//! * σ²   ← Σ_n E|x_n|² / Σ_n ρ_n, where E|x_n|² = |x̂_n|² + v_n already carries
//!   the factor ρ_n;
//! * σ_N² ← (‖y − A x̂‖² + tr(A V A^H)) / M, and tr(A V A^H) = M·v̄ because
//!   every column of A has squared norm M/N;
//! * ψ    ← (1/N) Σ_n ρ_n (steady-state chain);
//! * p10  ← Σ_n P(α_n = 1, α_{n+1} = 0) / Σ_n P(α_n = 1), n = 1..N−1.
//!
//! Results are clamped to valid ranges. If the beliefs carry no mass the
//! previous parameters are kept.

use crate::observation::CombinerMatrix;
use crate::CVector;

use super::chain::pairwise_drop_posteriors;
use super::{Hyperparams, TurboState};

const PSI_RANGE: (f64, f64) = (1e-3, 1.0 - 1e-3);
const P10_MIN: f64 = 1e-5;

pub fn em_update(
    state: &TurboState,
    y: &CVector,
    combiner: &CombinerMatrix,
    hyper: &Hyperparams,
) -> Hyperparams {
    let n = state.x_b_post.len();
    let m = y.len();
    let mass: f64 = state.psi_post.iter().sum();
    if n == 0 || m == 0 || !(mass > 1e-9) {
        return *hyper;
    }
    let power = (y.norm_squared() / m as f64).max(f64::MIN_POSITIVE);
    let floor = 1e-12 * power;

    let second_moment: f64 = state
        .x_b_post
        .iter()
        .zip(&state.v_b_post_per_antenna)
        .map(|(z, v)| z.norm_sqr() + v)
        .sum();
    let signal_var = (second_moment / mass).max(floor);

    let residual = (y - combiner.apply(&state.x_b_post)).norm_squared();
    let noise_var = ((residual + m as f64 * state.v_b_post) / m as f64).max(floor);

    let psi = (mass / n as f64).clamp(PSI_RANGE.0, PSI_RANGE.1);

    let pairs = pairwise_drop_posteriors(&state.llr_out, &state.llr_f, &state.llr_b, &state.hyper);
    let (drops, ones) = pairs
        .iter()
        .fold((0.0, 0.0), |(d, o), &(p10, p1)| (d + p10, o + p1));
    let p10_max = ((1.0 - psi) / psi).min(1.0) * (1.0 - 1e-9);
    let p10 = if ones > 1e-9 {
        (drops / ones).clamp(P10_MIN, p10_max)
    } else {
        hyper.p10.clamp(P10_MIN, p10_max)
    };

    Hyperparams {
        signal_var,
        noise_var,
        psi,
        p10,
    }
}
