//! Partial-DFT hybrid combiner and noisy pilot observations.

use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;
use rand::Rng;
use rustfft::{Fft, FftPlanner};

use crate::math::complex_gaussian;
use crate::{CMatrix, CVector, Error, Result, C64};

/// M = Q·N_rf distinct rows of the normalised N-point DFT matrix,
/// `[A]_{m,n} = exp(j2π·k_m·n/N)/√N` with zero-based `k_m` and `n`.
///
/// Products with A and A^H go through an FFT; [`CombinerMatrix::matrix`]
/// materialises the dense form for reference computations.
#[derive(Clone)]
pub struct CombinerMatrix {
    n: usize,
    pilot_slots: usize,
    rf_chains: usize,
    rows: Vec<usize>,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl fmt::Debug for CombinerMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CombinerMatrix")
            .field("n", &self.n)
            .field("pilot_slots", &self.pilot_slots)
            .field("rf_chains", &self.rf_chains)
            .field("rows", &self.rows)
            .finish()
    }
}

impl CombinerMatrix {
    /// Combiner from explicit zero-based DFT row indices.
    pub fn from_rows(n: usize, pilot_slots: usize, rf_chains: usize, rows: Vec<usize>) -> Result<Self> {
        let m = pilot_slots * rf_chains;
        if m == 0 {
            return Err(Error::InvalidParameter("combiner needs at least one row".into()));
        }
        if m > n {
            return Err(Error::OversampledCombiner { m, n });
        }
        if rows.len() != m {
            return Err(Error::DimensionMismatch(format!(
                "{} row indices for Q·N_rf = {m}",
                rows.len()
            )));
        }
        let mut seen = vec![false; n];
        for &r in &rows {
            if r >= n || seen[r] {
                return Err(Error::InvalidParameter(format!(
                    "row index {r} is out of range or repeated"
                )));
            }
            seen[r] = true;
        }
        let mut planner = FftPlanner::new();
        Ok(Self {
            n,
            pilot_slots,
            rf_chains,
            rows,
            forward: planner.plan_fft_forward(n),
            inverse: planner.plan_fft_inverse(n),
        })
    }

    /// N antennas.
    pub fn num_antennas(&self) -> usize {
        self.n
    }

    /// M = Q·N_rf.
    pub fn num_measurements(&self) -> usize {
        self.rows.len()
    }

    pub fn pilot_slots(&self) -> usize {
        self.pilot_slots
    }

    pub fn rf_chains(&self) -> usize {
        self.rf_chains
    }

    pub fn rows(&self) -> &[usize] {
        &self.rows
    }

    /// M/N.
    pub fn compression_ratio(&self) -> f64 {
        self.rows.len() as f64 / self.n as f64
    }

    /// A·x.
    pub fn apply(&self, x: &CVector) -> CVector {
        debug_assert_eq!(x.len(), self.n);
        let mut buf: Vec<C64> = x.iter().copied().collect();
        self.inverse.process(&mut buf);
        let scale = 1.0 / (self.n as f64).sqrt();
        CVector::from_iterator(self.rows.len(), self.rows.iter().map(|&k| buf[k] * scale))
    }

    /// A^H·y.
    pub fn adjoint(&self, y: &CVector) -> CVector {
        debug_assert_eq!(y.len(), self.rows.len());
        let mut buf = vec![C64::new(0.0, 0.0); self.n];
        for (&k, &v) in self.rows.iter().zip(y.iter()) {
            buf[k] = v;
        }
        self.forward.process(&mut buf);
        let scale = 1.0 / (self.n as f64).sqrt();
        CVector::from_iterator(self.n, buf.into_iter().map(|v| v * scale))
    }

    /// Dense M×N matrix.
    pub fn matrix(&self) -> CMatrix {
        let n = self.n as f64;
        let scale = 1.0 / n.sqrt();
        DMatrix::from_fn(self.rows.len(), self.n, |i, col| {
            let phase = 2.0 * std::f64::consts::PI * ((self.rows[i] * col) % self.n) as f64 / n;
            C64::from_polar(scale, phase)
        })
    }
}

/// Select M = Q·N_rf distinct DFT rows uniformly at random.
pub fn build_combiner<R: Rng + ?Sized>(
    n: usize,
    pilot_slots: usize,
    rf_chains: usize,
    rng: &mut R,
) -> Result<CombinerMatrix> {
    let m = pilot_slots * rf_chains;
    if m > n {
        return Err(Error::OversampledCombiner { m, n });
    }
    let mut rows = rand::seq::index::sample(rng, n, m).into_vec();
    rows.sort_unstable();
    CombinerMatrix::from_rows(n, pilot_slots, rf_chains, rows)
}

#[derive(Debug, Clone)]
pub struct PilotObservation {
    pub y: CVector,
    pub noise_variance: f64,
    /// The injected noise w, kept for diagnostics.
    pub noise: Option<CVector>,
}

/// y = A·x + w, w ~ CN(0, σ_N² I_M).
pub fn observe<R: Rng + ?Sized>(
    x: &CVector,
    combiner: &CombinerMatrix,
    noise_variance: f64,
    rng: &mut R,
) -> Result<PilotObservation> {
    if x.len() != combiner.num_antennas() {
        return Err(Error::DimensionMismatch(format!(
            "channel length {} vs combiner width {}",
            x.len(),
            combiner.num_antennas()
        )));
    }
    if !(noise_variance >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "noise variance must be non-negative, got {noise_variance}"
        )));
    }
    let m = combiner.num_measurements();
    let noise = CVector::from_fn(m, |_, _| complex_gaussian(rng, noise_variance));
    let y = combiner.apply(x) + &noise;
    Ok(PilotObservation {
        y,
        noise_variance,
        noise: Some(noise),
    })
}

/// σ_N² = ‖x‖² / (N·10^(snr_db/10)).
pub fn snr_to_noise(x: &CVector, snr_db: f64) -> Result<f64> {
    let energy = x.norm_squared();
    if !(energy > 0.0) {
        return Err(Error::UndefinedSnr);
    }
    Ok(energy / (x.len() as f64 * 10f64.powf(snr_db / 10.0)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_vector(n: usize, rng: &mut ChaCha8Rng) -> CVector {
        CVector::from_fn(n, |_, _| complex_gaussian(rng, 1.0))
    }

    #[test]
    fn semi_unitary_identities() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = build_combiner(32, 5, 4, &mut rng).unwrap();
        let dense = a.matrix();
        let m = a.num_measurements();
        assert_eq!(m, 20);
        let aah = &dense * dense.adjoint();
        assert!((aah - CMatrix::identity(m, m)).camax() < 1e-10);
        // A^H A is an orthogonal projection of rank M with constant diagonal M/N.
        let aha = dense.adjoint() * &dense;
        assert!((&aha * &aha - &aha).camax() < 1e-10);
        for i in 0..32 {
            assert!((aha[(i, i)] - C64::new(20.0 / 32.0, 0.0)).norm() < 1e-12);
        }
        for row in dense.row_iter() {
            assert!((row.norm() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn complete_combiner_is_unitary() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let a = build_combiner(16, 4, 4, &mut rng).unwrap();
        let d = a.matrix();
        assert!((d.adjoint() * &d - CMatrix::identity(16, 16)).camax() < 1e-10);
        let mut rows = a.rows().to_vec();
        rows.sort_unstable();
        assert_eq!(rows, (0..16).collect::<Vec<_>>());
    }

    #[test]
    fn reference_dimensions() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = build_combiner(256, 45, 4, &mut rng).unwrap();
        assert_eq!(a.num_measurements(), 180);
        assert!((a.compression_ratio() - 180.0 / 256.0).abs() < 1e-15);
        assert!(matches!(
            build_combiner(256, 65, 4, &mut rng),
            Err(Error::OversampledCombiner { m: 260, n: 256 })
        ));
        assert!(CombinerMatrix::from_rows(8, 1, 2, vec![3, 3]).is_err());
    }

    #[test]
    fn fft_products_match_dense() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let a = build_combiner(64, 9, 4, &mut rng).unwrap();
        let d = a.matrix();
        let x = random_vector(64, &mut rng);
        let y = random_vector(36, &mut rng);
        assert!((a.apply(&x) - &d * &x).norm() < 1e-10 * x.norm());
        assert!((a.adjoint(&y) - d.adjoint() * &y).norm() < 1e-10 * y.norm());
    }

    #[test]
    fn noiseless_observation_is_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let a = build_combiner(32, 3, 4, &mut rng).unwrap();
        let x = random_vector(32, &mut rng);
        let obs = observe(&x, &a, 0.0, &mut rng).unwrap();
        assert_eq!(obs.y, a.apply(&x));
    }

    #[test]
    fn noise_variance_is_calibrated() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let a = build_combiner(64, 4, 4, &mut rng).unwrap();
        let x = CVector::zeros(64);
        let var = 0.37;
        let draws = 10_000 / 16 + 1;
        let mut acc = 0.0;
        let mut count = 0usize;
        for _ in 0..draws {
            let obs = observe(&x, &a, var, &mut rng).unwrap();
            acc += obs.y.norm_squared();
            count += obs.y.len();
        }
        let est = acc / count as f64;
        assert!((est - var).abs() < 0.05 * var, "sample variance {est}");
    }

    #[test]
    fn noise_is_white() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let a = build_combiner(16, 1, 4, &mut rng).unwrap();
        let x = CVector::zeros(16);
        let var = 2.0;
        let mut cov = CMatrix::zeros(4, 4);
        let draws = 10_000;
        for _ in 0..draws {
            let w = observe(&x, &a, var, &mut rng).unwrap().y;
            cov += &w * w.adjoint();
        }
        cov /= C64::new(draws as f64, 0.0);
        for i in 0..4 {
            for j in 0..4 {
                let target = if i == j { var } else { 0.0 };
                assert!((cov[(i, j)] - C64::new(target, 0.0)).norm() < 0.05 * var);
            }
        }
    }

    #[test]
    fn fixed_seed_is_bit_identical() {
        let run = || {
            let mut rng = ChaCha8Rng::seed_from_u64(99);
            let a = build_combiner(64, 4, 4, &mut rng).unwrap();
            let x = random_vector(64, &mut rng);
            observe(&x, &a, 0.1, &mut rng).unwrap().y
        };
        let (y1, y2) = (run(), run());
        assert!(y1.iter().zip(y2.iter()).all(|(a, b)| a.re.to_bits() == b.re.to_bits() && a.im.to_bits() == b.im.to_bits()));
    }

    #[test]
    fn compression_scaling_over_random_combiners() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let x = random_vector(64, &mut rng);
        let mut acc = 0.0;
        let draws = 1000;
        for _ in 0..draws {
            let a = build_combiner(64, 8, 4, &mut rng).unwrap();
            acc += a.apply(&x).norm_squared();
        }
        let ratio = acc / draws as f64 / x.norm_squared();
        assert!((ratio - 0.5).abs() < 0.02 * 0.5, "ratio {ratio}");
    }

    #[test]
    fn snr_conversion() {
        let x = CVector::from_element(100, C64::new(1.0, 0.0));
        assert!((snr_to_noise(&x, 0.0).unwrap() - 1.0).abs() < 1e-15);
        let a = snr_to_noise(&x, 3.0).unwrap();
        let b = snr_to_noise(&x, 13.0).unwrap();
        assert!((a / b - 10.0).abs() < 1e-12);
        assert!((snr_to_noise(&x, 5.0).unwrap() - 10f64.powf(-0.5)).abs() < 1e-12);
        assert!(matches!(snr_to_noise(&CVector::zeros(4), 0.0), Err(Error::UndefinedSnr)));
    }
}
