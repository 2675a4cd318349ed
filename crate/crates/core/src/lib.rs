//! Optimal estimation of SU(d) unitary channels from `n` parallel uses.
//!
//! The crate is organised bottom-up:
//!
//! - [`linalg`]: dense complex kernels (Hermitian eigensolver, exponentials,
//!   Haar sampling, tensor utilities).
//! - [`sud`]: trace-orthonormal su(d) bases and the exponential chart on SU(d).
//! - [`designs`]: mutually unbiased bases, SIC-POVMs, 2-design certification and
//!   approximate designs built from Haar-random unitaries.
//! - [`states`]: branch-structured input states on `ancilla ⊗ (C^d)^⊗n` and the
//!   overlap engine that keeps every computation polynomial in `n`.
//! - [`dense`]: full-space materialisation, used as an oracle at small `n` and by
//!   the random measurement.
//! - [`qfi`]: quantum Fisher information, closed-form optima and attainability.
//! - [`measurement`]: the QFI-attaining POVM, classical Fisher information, the
//!   random measurement and the LOCC protocol.
//! - [`estimate`]: outcome sampling, maximum likelihood and MSE experiments.

pub mod dense;
pub mod designs;
pub mod error;
pub mod estimate;
pub mod linalg;
pub mod measurement;
pub mod qfi;
pub mod states;
pub mod sud;

pub use error::{Error, Result};
pub use linalg::{CMatrix, CVector, RMatrix};

/// Library version, embedded in every emitted artifact.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
