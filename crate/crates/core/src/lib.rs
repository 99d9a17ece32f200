//! Visibility-region detection and channel estimation for spatially
//! non-stationary extremely-large-scale MIMO uplinks.
//!
//! The crate is organised bottom-up:
//!
//! * [`channel`] synthesises near-field spherical-wavefront channels, the
//!   wavenumber-domain codebook and visibility regions.
//! * [`observation`] builds the partial-DFT hybrid combiner and noisy pilots.
//! * [`vrdomp`] is stage one: turbo message passing between an LMMSE module
//!   and a Markov-chain visibility detector, with EM hyperparameter learning.
//! * [`bbomp`] is stage two: belief-weighted OMP in the wavenumber domain,
//!   plus the LS, W-OMP, genie and power-edge baselines.
//! * [`pipeline`] glues both stages together.
//! * [`oracle`] holds brute-force references used by tests and `oracle-check`.
//! * [`metrics`] and [`experiments`] drive seeded Monte Carlo sweeps.

pub mod bbomp;
pub mod channel;
pub mod error;
pub mod experiments;
pub mod metrics;
pub mod observation;
pub mod oracle;
pub mod pipeline;
pub mod vrdomp;

mod math;

pub use error::{Error, Result};

/// Complex scalar used throughout the crate.
pub type C64 = num_complex::Complex64;

/// Dense complex column vector.
pub type CVector = nalgebra::DVector<C64>;

/// Dense complex matrix (column-major).
pub type CMatrix = nalgebra::DMatrix<C64>;
