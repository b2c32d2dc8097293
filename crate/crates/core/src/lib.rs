//! Discrete Gaussian free fields on triangular-lattice domains, their zero
//! contour lines, Loewner driving extraction and the SLE(4) coupling checks.

pub mod cli;
pub mod continuum;
pub mod error;
pub mod field;
pub mod interface;
pub mod lattice;
pub mod linalg;
pub mod localset;
pub mod loewner;
pub mod rng;
pub mod stats;

pub use error::{Error, Result};
pub use num_complex::Complex64 as C64;

/// The boundary height `√(π/8)` for which the contour line is SLE(4).
pub fn lambda_critical() -> f64 {
    (std::f64::consts::PI / 8.0).sqrt()
}

/// Version string with the git description when available.
pub const VERSION: &str = env!("SLE4LAB_VERSION");
