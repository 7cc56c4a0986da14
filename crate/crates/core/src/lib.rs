//! Joint beamforming and illumination-pattern design for beam-hopping LEO
//! satellite downlinks.
//!
//! The crate is organised bottom-up:
//!
//! - [`model`]: system parameters, the per-beam rate evaluator and the
//!   constraint checker shared by every scheme.
//! - [`channel`]: Rician multipath channel generation for a uniform linear array.
//! - [`pattern`]: illumination patterns, their enumeration and counting, and
//!   relaxed-to-binary quantization with coverage repair.
//! - [`fp`]: the fractional-programming machinery (auxiliary variables,
//!   surrogate functions, and a log-barrier solver for the two concave
//!   inner problems).
//! - [`iprs`] and [`ipao`]: the two fully-digital design schemes.
//! - [`hbf`]: factorization of a fully-digital precoder into analog and
//!   digital stages.
//! - [`harness`] (feature `harness`): configuration files, Monte-Carlo sweeps
//!   and CSV/JSON result emission.

pub mod channel;
pub mod error;
pub mod fp;
pub mod hbf;
pub mod ipao;
pub mod iprs;
pub mod model;
pub mod pattern;

#[cfg(feature = "harness")]
pub mod harness;

pub use error::{Error, Result};
pub use model::{
    rate_matrix, Beamforming, FeasibilityVerdict, PrecoderSet, RateReport, SolverSettings,
    SystemConfig, Violation,
};

/// Complex baseband sample type used throughout.
pub type Cx = num_complex::Complex64;
/// Dense complex matrix.
pub type CMatrix = nalgebra::DMatrix<Cx>;
