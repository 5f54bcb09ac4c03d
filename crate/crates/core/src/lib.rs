//! Full-digital covariance reconstruction for hybrid analog-digital arrays.
//!
//! A hybrid array observes `N` antennas through `N_RF < N` RF chains behind a
//! DFT beamformer (a Butler matrix plus a switch network). Each batch of
//! snapshots sees one `N_RF`-column subset of the DFT matrix. Because the DFT
//! of a Hermitian Toeplitz matrix is Cauchy-like, a small codebook that only
//! visits the diagonal and first off-diagonal of the beamspace covariance is
//! enough to recover the full covariance. This crate provides:
//!
//! * [`structured_cov`]: DFT beam grid, Toeplitz / BTTB parameterizations and
//!   the linear coefficient matrices mapping parameters to beamspace entries.
//! * [`codebook`]: minimal switch-index matrices for linear and rectangular
//!   arrays, with a combinatorial coverage check.
//! * [`signal_sim`]: scenario description and batched snapshot generation.
//! * [`estimator`]: the weighted covariance-fitting closed form (and an
//!   unweighted least-squares ablation).
//! * [`doa`]: Root-MUSIC, 2D spectral MUSIC and a fully-digital CRB.

pub mod codebook;
pub mod doa;
pub mod error;
pub mod estimator;
pub mod linalg;
pub mod signal_sim;
pub mod structured_cov;

pub use error::{Error, Result};
pub use num_complex::Complex64;

/// Dense complex matrix used throughout the crate.
pub type CMatrix = nalgebra::DMatrix<Complex64>;
/// Dense complex column vector.
pub type CVector = nalgebra::DVector<Complex64>;
