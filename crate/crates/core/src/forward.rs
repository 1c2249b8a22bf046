//! Multi-band forward operator `t_k = Σ_p g_{k,p} ⊛ x_p`, its adjoint and
//! noisy measurement synthesis.
//!
//! Every kernel is circulant on the `N x N` grid, so the operator is applied
//! as `F⁻¹ Σ_p Λ_{k,p} F x_p` with `Λ_{k,p}` the unnormalised DFT of the
//! origin-centred kernel.

use ndarray::Array2;
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::cube_io::{MeasurementSet, SpectralCube, Stack};
use crate::error::{domain, shape, Result};
use crate::fft::{ifftshift, Fft2, Image, Spectrum};
use crate::optics::{psf_approx, psf_exact, AcquisitionGeometry, ApertureModel, DiffractiveLensSpec, PsfGrid};
use crate::par;

/// Which PSF routine fills the bank.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PsfModel {
    #[default]
    Approx,
    Exact(ApertureModel),
}

/// Measurement diversity strategy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Setting {
    /// One lens, detector moved to each focal plane.
    Md,
    /// Detector fixed at a reference focal plane, lens diameter changed per shot.
    Fd,
}

/// `K x P` PSFs with their cached spectra.
#[derive(Debug, Clone)]
pub struct PsfBank {
    /// `psfs[k][p]`, centred.
    pub psfs: Vec<Vec<PsfGrid>>,
    /// `lambda_dfts[k][p]`: DFT of the origin-centred kernel.
    pub lambda_dfts: Vec<Vec<Spectrum>>,
    pub geometry: Vec<AcquisitionGeometry>,
    pub wavelengths_m: Vec<f64>,
    pub pixel_pitch_m: f64,
    fft: Fft2,
}

const MIX_CHUNK: usize = 8192;

impl PsfBank {
    /// Assembles a bank from precomputed PSFs (`psfs[k][p]`, centred).
    pub fn from_psfs(
        psfs: Vec<Vec<PsfGrid>>,
        geometry: Vec<AcquisitionGeometry>,
        wavelengths_m: Vec<f64>,
        pixel_pitch_m: f64,
    ) -> Result<Self> {
        let k = psfs.len();
        if k == 0 || geometry.len() != k {
            return shape(format!("{k} PSF rows for {} geometries", geometry.len()));
        }
        let p = wavelengths_m.len();
        if p == 0 || psfs.iter().any(|row| row.len() != p) {
            return shape(format!("every PSF row needs {p} entries"));
        }
        let n = psfs[0][0].size();
        if psfs.iter().flatten().any(|g| g.size() != n) {
            return shape("all PSF grids must share one size");
        }
        let fft = Fft2::square(n);
        let flat: Vec<&PsfGrid> = psfs.iter().flatten().collect();
        let spectra = par::map_slice(&flat, |g| fft.forward_real(&ifftshift(&g.samples)));
        let mut it = spectra.into_iter();
        let lambda_dfts = (0..k).map(|_| it.by_ref().take(p).collect()).collect();
        Ok(Self {
            psfs,
            lambda_dfts,
            geometry,
            wavelengths_m,
            pixel_pitch_m,
            fft,
        })
    }

    pub fn frames(&self) -> usize {
        self.psfs.len()
    }

    pub fn bands(&self) -> usize {
        self.wavelengths_m.len()
    }

    pub fn size(&self) -> usize {
        self.fft.shape().0
    }

    pub fn fft(&self) -> &Fft2 {
        &self.fft
    }

    /// Origin-centred kernel `g_{k,p}`.
    pub fn kernel(&self, k: usize, p: usize) -> Image {
        ifftshift(&self.psfs[k][p].samples)
    }

    pub fn spectra_of(&self, planes: &[Image]) -> Vec<Spectrum> {
        par::map_slice(planes, |x| self.fft.forward_real(x))
    }

    pub fn images_of(&self, spectra: Vec<Spectrum>) -> Vec<Image> {
        inverse_all(self, spectra)
    }

    /// `T_k = Σ_p Λ_{k,p} X_p` for every frame.
    pub fn mix_forward(&self, x: &[Spectrum]) -> Vec<Spectrum> {
        (0..self.frames())
            .map(|k| {
                let w: Vec<&Spectrum> = self.lambda_dfts[k].iter().collect();
                let v: Vec<&Spectrum> = x.iter().collect();
                mix(&w, &v, false)
            })
            .collect()
    }

    /// `B_p = Σ_k conj(Λ_{k,p}) Y_k` for every band.
    pub fn mix_adjoint(&self, y: &[Spectrum]) -> Vec<Spectrum> {
        (0..self.bands())
            .map(|p| {
                let w: Vec<&Spectrum> = self.lambda_dfts.iter().map(|row| &row[p]).collect();
                let v: Vec<&Spectrum> = y.iter().collect();
                mix(&w, &v, true)
            })
            .collect()
    }

    fn check_planes(&self, planes: &[Image], expected: usize, what: &str) -> Result<()> {
        let n = self.size();
        if planes.len() != expected {
            return domain(format!("expected {expected} {what}, got {}", planes.len()));
        }
        if let Some(bad) = planes.iter().find(|x| x.dim() != (n, n)) {
            return domain(format!("{what} of shape {:?} for a {n}x{n} bank", bad.dim()));
        }
        Ok(())
    }
}

/// `out[i] = Σ_j w_j[i]·v_j[i]` (conjugating `w_j` when asked), chunked over pixels.
fn mix(w: &[&Spectrum], v: &[&Spectrum], conj: bool) -> Spectrum {
    let dim = v[0].dim();
    let mut out = Spectrum::zeros(dim);
    let ws: Vec<&[Complex64]> = w.iter().map(|a| a.as_slice().expect("standard layout")).collect();
    let vs: Vec<&[Complex64]> = v.iter().map(|a| a.as_slice().expect("standard layout")).collect();
    let dst = out.as_slice_mut().expect("standard layout");
    par::for_each_chunk_mut(dst, MIX_CHUNK, |c, chunk| {
        let base = c * MIX_CHUNK;
        for (j, (wj, vj)) in ws.iter().zip(&vs).enumerate() {
            let wj = &wj[base..base + chunk.len()];
            let vj = &vj[base..base + chunk.len()];
            for ((o, a), b) in chunk.iter_mut().zip(wj).zip(vj) {
                let a = if conj { a.conj() } else { *a };
                if j == 0 {
                    *o = a * b;
                } else {
                    *o += a * b;
                }
            }
        }
    });
    out
}

/// Computes the `K x P` PSFs for the given geometries and wavelengths.
pub fn build_bank(
    geometry: &[AcquisitionGeometry],
    wavelengths_m: &[f64],
    grid_size: usize,
    pixel_pitch_m: f64,
    model: &PsfModel,
) -> Result<PsfBank> {
    if geometry.is_empty() || wavelengths_m.is_empty() {
        return domain("a PSF bank needs at least one geometry and one wavelength");
    }
    let p = wavelengths_m.len();
    let results = par::map_range(geometry.len() * p, |idx| {
        let (k, b) = (idx / p, idx % p);
        match model {
            PsfModel::Approx => psf_approx(&geometry[k], wavelengths_m[b], grid_size, pixel_pitch_m),
            PsfModel::Exact(ap) => psf_exact(&geometry[k], wavelengths_m[b], ap, grid_size, pixel_pitch_m),
        }
    });
    let mut flat = Vec::with_capacity(results.len());
    for r in results {
        flat.push(r?);
    }
    let mut it = flat.into_iter();
    let psfs = (0..geometry.len()).map(|_| it.by_ref().take(p).collect()).collect();
    PsfBank::from_psfs(psfs, geometry.to_vec(), wavelengths_m.to_vec(), pixel_pitch_m)
}

/// Index of the band whose focal plane the fixed detector sits at.
pub fn default_reference_band(bands: usize) -> usize {
    bands.saturating_sub(1) / 2
}

/// One measurement per band: MD places the detector at each focal plane;
/// FD keeps it at the focal plane of `reference` and refocuses by changing
/// the lens diameter.
pub fn scenario_geometries(
    setting: Setting,
    lens: &DiffractiveLensSpec,
    wavelengths_m: &[f64],
    reference: usize,
) -> Result<Vec<AcquisitionGeometry>> {
    lens.validate()?;
    if reference >= wavelengths_m.len() {
        return domain(format!("reference band {reference} out of range"));
    }
    match setting {
        Setting::Md => wavelengths_m
            .iter()
            .map(|&w| AcquisitionGeometry::at_plane(lens.clone(), lens.focal_length(w)?))
            .collect(),
        Setting::Fd => {
            let plane = lens.focal_length(wavelengths_m[reference])?;
            wavelengths_m
                .iter()
                .enumerate()
                .map(|(k, &w)| {
                    let d = lens.refocus_diameter(w, plane)?;
                    let label = format!("{}-fd{k}", lens.label);
                    AcquisitionGeometry::at_plane(lens.with_diameter(d, label)?, plane)
                })
                .collect()
        }
    }
}

/// Noiseless frames `t_k = Σ_p g_{k,p} ⊛ x_p`.
pub fn apply_forward(bank: &PsfBank, cube: &SpectralCube) -> Result<Stack> {
    bank.check_planes(&cube.bands, bank.bands(), "bands")?;
    Ok(forward_planes(bank, &cube.bands))
}

pub(crate) fn forward_planes(bank: &PsfBank, bands: &[Image]) -> Stack {
    let x = bank.spectra_of(bands);
    inverse_all(bank, bank.mix_forward(&x))
}

/// Back-projection `band_p = Σ_k g_{k,p} ⋆ y_k` (circular correlation).
pub fn apply_adjoint(bank: &PsfBank, frames: &[Image]) -> Result<Stack> {
    bank.check_planes(frames, bank.frames(), "frames")?;
    Ok(adjoint_planes(bank, frames))
}

pub(crate) fn adjoint_planes(bank: &PsfBank, frames: &[Image]) -> Stack {
    let y = bank.spectra_of(frames);
    inverse_all(bank, bank.mix_adjoint(&y))
}

pub(crate) fn inverse_all(bank: &PsfBank, spectra: Vec<Spectrum>) -> Stack {
    let fft = bank.fft();
    let mut slots: Vec<(Option<Spectrum>, Image)> =
        spectra.into_iter().map(|s| (Some(s), Image::zeros((0, 0)))).collect();
    par::for_each_mut(&mut slots, |_, (s, out)| {
        *out = fft.inverse_real(s.take().expect("spectrum present"));
    });
    slots.into_iter().map(|(_, img)| img).collect()
}

/// Target SNR and random stream for additive white Gaussian noise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSpec {
    /// `10 log10(var(t_k) / σ_k²)`; `+inf` adds no noise.
    #[serde(serialize_with = "ser_snr", deserialize_with = "de_snr")]
    pub snr_db: f64,
    pub seed: u64,
    /// Variance basis: each frame's own variance, or the pooled variance of all frames.
    #[serde(default = "yes")]
    pub per_frame: bool,
}

fn yes() -> bool {
    true
}

fn ser_snr<S: Serializer>(v: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    if v.is_infinite() && *v > 0.0 {
        s.serialize_str("inf")
    } else {
        s.serialize_f64(*v)
    }
}

fn de_snr<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<f64, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Raw {
        Num(f64),
        Text(String),
    }
    match Raw::deserialize(d)? {
        Raw::Num(v) => Ok(v),
        Raw::Text(t) if matches!(t.to_ascii_lowercase().as_str(), "inf" | "infinity") => Ok(f64::INFINITY),
        Raw::Text(t) => Err(serde::de::Error::custom(format!(
            "expected a number or \"inf\", got {t:?}"
        ))),
    }
}

impl NoiseSpec {
    pub fn noiseless() -> Self {
        Self {
            snr_db: f64::INFINITY,
            seed: 0,
            per_frame: true,
        }
    }

    pub fn new(snr_db: f64, seed: u64) -> Self {
        Self {
            snr_db,
            seed,
            per_frame: true,
        }
    }
}

fn population_variance(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let (sum, count) = values.clone().fold((0.0, 0usize), |(s, c), v| (s + v, c + 1));
    let mean = sum / count as f64;
    values.map(|v| (v - mean) * (v - mean)).sum::<f64>() / count as f64
}

/// Noise level giving `snr_db` for a signal of variance `var`.
pub fn sigma_for_snr(var: f64, snr_db: f64) -> f64 {
    (var / 10f64.powf(snr_db / 10.0)).sqrt()
}

/// Adds seeded white Gaussian noise. Frame `k` draws from stream `k` of a
/// ChaCha generator keyed by the seed, pixels in row-major order.
pub fn add_noise(
    frames: Stack,
    geometry: &[AcquisitionGeometry],
    pixel_pitch_m: f64,
    spec: &NoiseSpec,
) -> Result<MeasurementSet> {
    if frames.is_empty() {
        return domain("no frames to corrupt");
    }
    if spec.snr_db.is_nan() || spec.snr_db == f64::NEG_INFINITY {
        return domain(format!("invalid SNR {}", spec.snr_db));
    }
    let noiseless = spec.snr_db == f64::INFINITY;
    let sigmas: Vec<f64> = if noiseless {
        vec![0.0; frames.len()]
    } else if spec.per_frame {
        frames
            .iter()
            .map(|f| sigma_for_snr(population_variance(f.iter().copied()), spec.snr_db))
            .collect()
    } else {
        let pooled = population_variance(frames.iter().flat_map(|f| f.iter().copied()));
        vec![sigma_for_snr(pooled, spec.snr_db); frames.len()]
    };
    if !noiseless {
        if let Some(k) = sigmas.iter().position(|&s| !(s > 0.0)) {
            return domain(format!("frame {k} has zero variance; a finite SNR is undefined"));
        }
    }
    let mut frames = frames;
    if !noiseless {
        let seed = spec.seed;
        par::for_each_mut(&mut frames, |k, f| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(k as u64);
            let s = sigmas[k];
            for v in f.iter_mut() {
                let z: f64 = StandardNormal.sample(&mut rng);
                *v += s * z;
            }
        });
    }
    let set = MeasurementSet {
        frames,
        geometry: geometry.to_vec(),
        noise_sigma: sigmas,
        snr_db: if noiseless { None } else { Some(spec.snr_db) },
        seed: if noiseless { None } else { Some(spec.seed) },
        pixel_pitch_m,
    };
    set.validate()?;
    Ok(set)
}

/// `add_noise(apply_forward(bank, cube))`.
pub fn simulate(bank: &PsfBank, cube: &SpectralCube, spec: &NoiseSpec) -> Result<MeasurementSet> {
    let frames = apply_forward(bank, cube)?;
    add_noise(frames, &bank.geometry, bank.pixel_pitch_m, spec)
}

/// Euclidean norm of a stack.
pub fn stack_norm(stack: &[Array2<f64>]) -> f64 {
    stack.iter().flat_map(|a| a.iter()).map(|v| v * v).sum::<f64>().sqrt()
}
