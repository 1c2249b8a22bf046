use std::io;

use thiserror::Error;

/// Errors produced by the simulator and the solvers.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument is outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// Array shapes or counts disagree.
    #[error("shape mismatch: {0}")]
    Shape(String),

    /// Detector sampling is coarser than the band limit of the PSF.
    #[error(
        "pixel pitch {pitch_m:.4e} m exceeds the band-limit maximum {max_pitch_m:.4e} m \
         (wavelength {wavelength_m:.4e} m, distance {distance_m:.4} m)"
    )]
    Nyquist {
        pitch_m: f64,
        max_pitch_m: f64,
        wavelength_m: f64,
        distance_m: f64,
    },

    /// Malformed cube file.
    #[error("format error at byte {offset}: {message}")]
    Format { offset: u64, message: String },

    /// Numerical breakdown inside a solver.
    #[error("solver error: {0}")]
    Solver(String),

    /// Non-finite values appeared in an iterate.
    #[error("solver diverged at iteration {iteration}")]
    Diverged { iteration: usize },

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for failures of the numerics rather than of the inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(self, Error::Solver(_) | Error::Diverged { .. })
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Domain(msg.into()))
}

pub(crate) fn shape<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Shape(msg.into()))
}
