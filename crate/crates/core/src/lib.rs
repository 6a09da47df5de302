//! Simulation and certification toolkit for entanglement-based quantum
//! random number generation.
//!
//! The pipeline simulates a polarization-entangled photon-pair source
//! calibrated by a Hong–Ou–Mandel dip, produces heralded raw bits, certifies
//! the state with a direct CHSH measurement and with tomographic estimates
//! (least squares, maximum likelihood, Bayesian), compresses the bits with a
//! Toeplitz extractor and runs the SP 800-22 statistical battery plus a
//! min-entropy estimate.

pub mod certify;
pub mod error;
pub mod extract;
pub mod pipeline;
pub mod qmath;
pub mod source;
pub mod statsuite;
pub mod tomography;
pub mod seed;

pub use error::{Error, Result};
