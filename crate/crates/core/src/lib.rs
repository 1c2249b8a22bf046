//! Multi-band diffractive-lens imaging: PSF computation, forward model,
//! ADMM and HQS reconstruction, and resolution analysis.

// `!(x > 0.0)` is the NaN-rejecting form of the positivity checks.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod bessel;
pub mod cube_io;
pub mod error;
pub mod fft;
pub mod forward;
pub mod optics;
pub mod par;
pub mod recon;

pub use error::{Error, Result};
