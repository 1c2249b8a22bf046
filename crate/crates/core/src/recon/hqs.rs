//! Half-quadratic splitting: `z = D(x)`, then
//! `x = argmin ‖y − Hx‖² + ν‖x − z‖²`, repeated a fixed number of times.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::haar::{haar_forward, haar_inverse};
use super::prox::{prox_soft, prox_tv, TvDual};
use super::sigma::SigmaInverse;
use super::{all_finite, check_measurements, scaled_backprojection, sq_dist};
use crate::cube_io::{MeasurementSet, SpectralCube, Stack};
use crate::error::{domain, shape, Error, Result};
use crate::fft::Image;
use crate::forward::{forward_planes, PsfBank};
use crate::par;

/// Deterministic cube-to-cube denoiser.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DenoiserHandle {
    Identity,
    /// Per-band TV prox with a cold start.
    TvChambolle {
        weight: f64,
        iters: usize,
        step: f64,
    },
    /// Per-band soft thresholding of Haar coefficients.
    SoftThresholdHaar {
        threshold: f64,
        levels: usize,
    },
    /// Nearest-neighbour lookup in a table of flattened input/output cubes.
    ExternalTable {
        inputs: Vec<Vec<f64>>,
        outputs: Vec<Vec<f64>>,
    },
}

impl DenoiserHandle {
    pub fn validate(&self) -> Result<()> {
        match self {
            DenoiserHandle::Identity => Ok(()),
            DenoiserHandle::TvChambolle { weight, iters, step } => {
                if !(*weight > 0.0) || *iters == 0 || !(*step > 0.0 && *step < 0.25) {
                    return domain("TV denoiser needs weight > 0, iters >= 1, step in (0, 1/4)");
                }
                Ok(())
            }
            DenoiserHandle::SoftThresholdHaar { threshold, .. } => {
                if !(*threshold >= 0.0) {
                    return domain("threshold must be nonnegative");
                }
                Ok(())
            }
            DenoiserHandle::ExternalTable { inputs, outputs } => {
                if inputs.is_empty() || inputs.len() != outputs.len() {
                    return domain("lookup table needs matching, nonempty input and output lists");
                }
                let len = inputs[0].len();
                if inputs.iter().chain(outputs).any(|r| r.len() != len) {
                    return domain("lookup table entries must share one length");
                }
                Ok(())
            }
        }
    }

    pub fn apply(&self, x: &[Image]) -> Result<Stack> {
        match self {
            DenoiserHandle::Identity => Ok(x.to_vec()),
            DenoiserHandle::TvChambolle { weight, iters, step } => Ok(par::map_slice(x, |b| {
                prox_tv(b, *weight, *iters, *step, &mut TvDual::zeros(b.nrows(), b.ncols()))
            })),
            DenoiserHandle::SoftThresholdHaar { threshold, levels } => x
                .iter()
                .map(|b| haar_inverse(&prox_soft(&haar_forward(b, *levels)?, *threshold), *levels))
                .collect(),
            DenoiserHandle::ExternalTable { inputs, outputs } => {
                let flat: Vec<f64> = x.iter().flat_map(|b| b.iter().copied()).collect();
                if flat.len() != inputs[0].len() {
                    return shape(format!(
                        "lookup table holds cubes of {} values, got {}",
                        inputs[0].len(),
                        flat.len()
                    ));
                }
                let dist = |row: &Vec<f64>| row.iter().zip(&flat).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
                let best = (0..inputs.len())
                    .min_by(|&i, &j| dist(&inputs[i]).total_cmp(&dist(&inputs[j])))
                    .expect("nonempty table");
                let (r, c) = x[0].dim();
                Ok(outputs[best]
                    .chunks(r * c)
                    .map(|ch| Array2::from_shape_vec((r, c), ch.to_vec()).expect("plane size"))
                    .collect())
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HqsConfig {
    pub nu: f64,
    pub iterations: usize,
    pub denoiser: DenoiserHandle,
}

impl Default for HqsConfig {
    fn default() -> Self {
        Self {
            nu: 0.5,
            iterations: 20,
            denoiser: DenoiserHandle::TvChambolle {
                weight: 0.02,
                iters: 20,
                step: 0.249,
            },
        }
    }
}

impl HqsConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.nu > 0.0 && self.nu.is_finite()) {
            return domain(format!("nu must be positive, got {}", self.nu));
        }
        if self.iterations == 0 {
            return domain("at least one iteration is required");
        }
        self.denoiser.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HqsTraceRow {
    pub iter: usize,
    /// `‖y − Hx‖₂` after the data-consistency step.
    pub misfit: f64,
    /// `‖x − z‖₂`.
    pub denoiser_gap: f64,
}

#[derive(Debug, Clone)]
pub struct HqsResult {
    /// Final iterate clamped at zero.
    pub cube: SpectralCube,
    pub estimate: Stack,
    pub trace: Vec<HqsTraceRow>,
}

/// `F̃ᴴ (νI + ΛᴴΛ)⁻¹ (Λᴴ F̄ y + ν F̃ z)`; `sigma` must carry shift `ν`.
pub fn data_consistency_update(sigma: &SigmaInverse, bank: &PsfBank, y: &[Image], z: &[Image]) -> Result<Stack> {
    let n = bank.size();
    if y.len() != bank.frames() || z.len() != bank.bands() || y.iter().chain(z).any(|p| p.dim() != (n, n)) {
        return shape("measurement or prior planes do not match the bank");
    }
    if sigma.bands != bank.bands() {
        return shape("inverse and bank disagree on the band count");
    }
    let nu = sigma.shift;
    let mut rhs = bank.mix_adjoint(&bank.spectra_of(y));
    for (r, zs) in rhs.iter_mut().zip(bank.spectra_of(z)) {
        *r += &zs.mapv(|c| c * nu);
    }
    Ok(bank.images_of(sigma.apply(&rhs)))
}

/// Unrolled HQS with a shared denoiser. `sigma` must carry shift `config.nu`.
pub fn hqs_reconstruct(
    y: &MeasurementSet,
    bank: &PsfBank,
    sigma: &SigmaInverse,
    config: &HqsConfig,
) -> Result<HqsResult> {
    config.validate()?;
    check_measurements(bank, y)?;
    if sigma.shift != config.nu {
        return domain(format!("inverse has shift {} but nu is {}", sigma.shift, config.nu));
    }
    let mut x = scaled_backprojection(bank, &y.frames);
    let mut trace = Vec::with_capacity(config.iterations);
    for iter in 1..=config.iterations {
        let z = config.denoiser.apply(&x)?;
        x = data_consistency_update(sigma, bank, &y.frames, &z)?;
        if !all_finite(&x) {
            return Err(Error::Diverged { iteration: iter });
        }
        let hx = forward_planes(bank, &x);
        trace.push(HqsTraceRow {
            iter,
            misfit: sq_dist(&y.frames, &hx).sqrt(),
            denoiser_gap: sq_dist(&x, &z).sqrt(),
        });
    }
    let mut cube = SpectralCube::new(x.clone(), bank.wavelengths_m.clone(), bank.pixel_pitch_m)?;
    cube.clamp_nonnegative();
    Ok(HqsResult {
        cube,
        estimate: x,
        trace,
    })
}

/// Initial iterate used by [`hqs_reconstruct`].
pub fn initial_estimate(bank: &PsfBank, y: &MeasurementSet) -> Stack {
    scaled_backprojection(bank, &y.frames)
}
