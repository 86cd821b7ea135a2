//! Doubling-variables toolkit for stationary Kolmogorov equations with
//! degenerate diffusion.

pub mod certify;
pub mod coeff;
pub mod coupling;
pub mod doubling;
pub mod error;
pub mod fpk;
pub mod linalg;
pub mod measures;
pub mod mollify;
pub mod quadrature;
pub mod rng;

pub use error::{Error, Result};
