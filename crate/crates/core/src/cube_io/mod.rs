//! Spectral cubes, measurement sets, their file formats, synthetic scenes and
//! quality metrics.

mod format;
mod metrics;
mod pgm;
mod scene;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{domain, shape, Result};
use crate::optics::AcquisitionGeometry;

pub use format::{
    read_cube, read_measurements, read_raw, sidecar_path, write_cube, write_measurements, write_raw, RawCube, Role,
    MAGIC,
};
pub use metrics::{cube_quality, psnr, ssim, QualityReport, SSIM_SIGMA, SSIM_WINDOW};
pub use pgm::write_pgm16;
pub use scene::{
    grid_layout, make_point_scene, phantom_band, phantom_cube, resolution_layout, PointSceneSpec, PointSource,
};

/// A stack of equally sized 2-D planes (bands or frames).
pub type Stack = Vec<Array2<f64>>;

/// `P` band images of `N x N` intensities with their wavelengths.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralCube {
    pub bands: Stack,
    pub wavelengths_m: Vec<f64>,
    pub pixel_pitch_m: f64,
}

impl SpectralCube {
    pub fn new(bands: Stack, wavelengths_m: Vec<f64>, pixel_pitch_m: f64) -> Result<Self> {
        let cube = Self {
            bands,
            wavelengths_m,
            pixel_pitch_m,
        };
        cube.validate()?;
        Ok(cube)
    }

    pub fn zeros(n: usize, wavelengths_m: Vec<f64>, pixel_pitch_m: f64) -> Result<Self> {
        let bands = vec![Array2::zeros((n, n)); wavelengths_m.len()];
        Self::new(bands, wavelengths_m, pixel_pitch_m)
    }

    pub fn validate(&self) -> Result<()> {
        if self.bands.is_empty() {
            return domain("a spectral cube needs at least one band");
        }
        if self.bands.len() != self.wavelengths_m.len() {
            return shape(format!(
                "{} bands but {} wavelengths",
                self.bands.len(),
                self.wavelengths_m.len()
            ));
        }
        check_square_stack(&self.bands)?;
        if !(self.pixel_pitch_m > 0.0 && self.pixel_pitch_m.is_finite()) {
            return domain(format!("pixel pitch must be positive, got {}", self.pixel_pitch_m));
        }
        if self.wavelengths_m.iter().any(|&w| !(w > 0.0 && w.is_finite())) {
            return domain("wavelengths must be positive");
        }
        if self.wavelengths_m.windows(2).any(|w| w[1] <= w[0]) {
            return domain("wavelengths must be strictly increasing");
        }
        Ok(())
    }

    pub fn band_count(&self) -> usize {
        self.bands.len()
    }

    pub fn size(&self) -> usize {
        self.bands[0].nrows()
    }

    /// True when every band vanishes outside `[0, N − M]` in both axes, the
    /// condition under which linear and circular convolution with an
    /// `M x M` PSF coincide.
    pub fn satisfies_support(&self, psf_support: usize) -> bool {
        let n = self.size();
        let last = n.saturating_sub(psf_support);
        self.bands.iter().all(|b| {
            b.indexed_iter()
                .all(|((i, j), &v)| v == 0.0 || (i <= last && j <= last))
        })
    }

    pub fn clamp_nonnegative(&mut self) {
        for b in &mut self.bands {
            b.mapv_inplace(|v| v.max(0.0));
        }
    }

    pub fn is_nonnegative(&self) -> bool {
        self.bands.iter().all(|b| b.iter().all(|&v| v >= 0.0))
    }
}

/// `K` detector frames with their acquisition geometry and noise levels.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementSet {
    pub frames: Stack,
    pub geometry: Vec<AcquisitionGeometry>,
    pub noise_sigma: Vec<f64>,
    pub snr_db: Option<f64>,
    pub seed: Option<u64>,
    pub pixel_pitch_m: f64,
}

impl MeasurementSet {
    pub fn validate(&self) -> Result<()> {
        if self.frames.is_empty() {
            return domain("a measurement set needs at least one frame");
        }
        check_square_stack(&self.frames)?;
        if self.geometry.len() != self.frames.len() || self.noise_sigma.len() != self.frames.len() {
            return shape(format!(
                "{} frames, {} geometries, {} noise levels",
                self.frames.len(),
                self.geometry.len(),
                self.noise_sigma.len()
            ));
        }
        if self.noise_sigma.iter().any(|&s| !(s >= 0.0 && s.is_finite())) {
            return domain("noise levels must be finite and nonnegative");
        }
        Ok(())
    }

    pub fn frame_count(&self) -> usize {
        self.frames.len()
    }

    pub fn size(&self) -> usize {
        self.frames[0].nrows()
    }
}

/// JSON sidecar stored next to a measurement container.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeasurementSidecar {
    pub geometry: Vec<AcquisitionGeometry>,
    pub noise_sigma: Vec<f64>,
    pub snr_db: Option<f64>,
    pub seed: Option<u64>,
    pub pixel_pitch_m: f64,
}

pub(crate) fn check_square_stack(stack: &[Array2<f64>]) -> Result<()> {
    let Some(first) = stack.first() else {
        return domain("empty stack");
    };
    let (r, c) = first.dim();
    if r != c || r == 0 {
        return shape(format!("planes must be square and nonempty, got {r}x{c}"));
    }
    if let Some(bad) = stack.iter().find(|p| p.dim() != (r, c)) {
        return shape(format!("plane of {:?} in a stack of {r}x{c}", bad.dim()));
    }
    Ok(())
}
