//! Diffractive-lens optics: focal lengths, defocus, and sampled incoherent PSFs.
//!
//! PSFs are computed in the pupil plane: the lens transmittance is sampled on
//! an `M x M` grid, multiplied by the quadratic phase left over after focusing
//! (`π ε ρ² / λ`), transformed with a 2-D DFT and squared. The pupil grid spacing
//! is chosen so that one DFT bin equals one detector pixel, and the `M x M`
//! intensity is summed periodically onto the `N x N` detector grid. That
//! periodic sum is exactly the kernel of the circular forward operator.

use std::f64::consts::PI;

use ndarray::Array2;
use num_complex::Complex64;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::bessel::jinc_r;
use crate::error::{domain, Error, Result};
use crate::fft::{fftshift, ifftshift, Fft2};
use crate::par;

/// Relative slack allowed on the `λ d / (2D)` sampling bound. Critically sampled
/// designs (two pixels per diffraction-limited spot) sit on the bound for the
/// in-focus band and slightly above it for defocused ones.
pub const NYQUIST_SLACK: f64 = 0.02;

/// Minimum number of pupil samples across the lens diameter.
const MIN_PUPIL_SAMPLES: f64 = 64.0;
/// Upper bound on the pupil grid edge.
const MAX_PUPIL_GRID: usize = 4096;
/// Fraction of PSF energy used to report the support radius.
const SUPPORT_ENERGY: f64 = 0.9999;

/// Geometry of one diffractive lens (photon sieve or zone plate).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiffractiveLensSpec {
    /// Outer diameter `D`.
    pub outer_diameter_m: f64,
    /// Smallest hole diameter, equal to the outer zone width.
    pub smallest_hole_m: f64,
    #[serde(default)]
    pub label: String,
}

impl DiffractiveLensSpec {
    pub fn new(outer_diameter_m: f64, smallest_hole_m: f64, label: impl Into<String>) -> Result<Self> {
        let lens = Self {
            outer_diameter_m,
            smallest_hole_m,
            label: label.into(),
        };
        lens.validate()?;
        Ok(lens)
    }

    pub fn validate(&self) -> Result<()> {
        let (d, w) = (self.outer_diameter_m, self.smallest_hole_m);
        if !(d.is_finite() && d > 0.0) {
            return domain(format!("outer diameter must be positive, got {d}"));
        }
        if !(w.is_finite() && w > 0.0) {
            return domain(format!("smallest hole must be positive, got {w}"));
        }
        if w >= d {
            return domain(format!("smallest hole {w} m is not smaller than the diameter {d} m"));
        }
        Ok(())
    }

    /// First-order focal length `D Δ / λ`.
    pub fn focal_length(&self, wavelength_m: f64) -> Result<f64> {
        check_wavelength(wavelength_m)?;
        Ok(self.outer_diameter_m * self.smallest_hole_m / wavelength_m)
    }

    /// Spectral bandwidth `4 Δ λ / D`.
    pub fn spectral_bandwidth(&self, wavelength_m: f64) -> Result<f64> {
        check_wavelength(wavelength_m)?;
        Ok(4.0 * self.smallest_hole_m * wavelength_m / self.outer_diameter_m)
    }

    /// Outer diameter that brings `target_wavelength_m` into focus at
    /// `plane_m` with the same smallest hole.
    pub fn refocus_diameter(&self, target_wavelength_m: f64, plane_m: f64) -> Result<f64> {
        check_wavelength(target_wavelength_m)?;
        if !(plane_m.is_finite() && plane_m > 0.0) {
            return domain(format!("focal plane must be positive, got {plane_m}"));
        }
        Ok(plane_m * target_wavelength_m / self.smallest_hole_m)
    }

    /// The same design with a different outer diameter.
    pub fn with_diameter(&self, outer_diameter_m: f64, label: impl Into<String>) -> Result<Self> {
        Self::new(outer_diameter_m, self.smallest_hole_m, label)
    }
}

fn check_wavelength(wavelength_m: f64) -> Result<()> {
    if !(wavelength_m.is_finite() && wavelength_m > 0.0) {
        return domain(format!("wavelength must be positive, got {wavelength_m}"));
    }
    Ok(())
}

/// Source distance; `Infinite` contributes `1/d_s = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum ObjectDistance {
    #[default]
    Infinite,
    Finite(f64),
}

impl ObjectDistance {
    pub fn reciprocal(self) -> f64 {
        match self {
            ObjectDistance::Infinite => 0.0,
            ObjectDistance::Finite(d) => 1.0 / d,
        }
    }
}

impl Serialize for ObjectDistance {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            ObjectDistance::Infinite => s.serialize_str("infinity"),
            ObjectDistance::Finite(d) => s.serialize_f64(*d),
        }
    }
}

impl<'de> Deserialize<'de> for ObjectDistance {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Text(String),
            Null(()),
        }
        match Raw::deserialize(d)? {
            Raw::Num(v) if v.is_infinite() && v > 0.0 => Ok(ObjectDistance::Infinite),
            Raw::Num(v) if v > 0.0 => Ok(ObjectDistance::Finite(v)),
            Raw::Num(v) => Err(serde::de::Error::custom(format!(
                "object distance must be positive, got {v}"
            ))),
            Raw::Text(t) if matches!(t.to_ascii_lowercase().as_str(), "inf" | "infinity") => {
                Ok(ObjectDistance::Infinite)
            }
            Raw::Text(t) => Err(serde::de::Error::custom(format!(
                "expected a distance or \"infinity\", got {t:?}"
            ))),
            Raw::Null(()) => Ok(ObjectDistance::Infinite),
        }
    }
}

/// Where one measurement is taken and with which lens.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AcquisitionGeometry {
    #[serde(default, rename = "object_distance_m")]
    pub object_distance: ObjectDistance,
    pub measurement_distance_m: f64,
    pub lens: DiffractiveLensSpec,
}

impl AcquisitionGeometry {
    pub fn new(
        lens: DiffractiveLensSpec,
        measurement_distance_m: f64,
        object_distance: ObjectDistance,
    ) -> Result<Self> {
        let g = Self {
            object_distance,
            measurement_distance_m,
            lens,
        };
        g.validate()?;
        Ok(g)
    }

    /// Detector at `d` from the lens, source at infinity.
    pub fn at_plane(lens: DiffractiveLensSpec, measurement_distance_m: f64) -> Result<Self> {
        Self::new(lens, measurement_distance_m, ObjectDistance::Infinite)
    }

    pub fn validate(&self) -> Result<()> {
        self.lens.validate()?;
        let d = self.measurement_distance_m;
        if !(d.is_finite() && d > 0.0) {
            return domain(format!("measurement distance must be positive, got {d}"));
        }
        if let ObjectDistance::Finite(s) = self.object_distance {
            if !(s.is_finite() && s > 0.0) {
                return domain(format!("object distance must be positive, got {s}"));
            }
        }
        Ok(())
    }

    /// `1/d_s + 1/d_k`.
    pub fn delta(&self) -> f64 {
        self.object_distance.reciprocal() + 1.0 / self.measurement_distance_m
    }

    /// Defocus parameter `1/d_k + 1/d_s − 1/f(λ)`.
    pub fn defocus(&self, wavelength_m: f64) -> Result<f64> {
        Ok(self.delta() - 1.0 / self.lens.focal_length(wavelength_m)?)
    }

    /// Largest pixel pitch that samples the PSF band limit, `λ d / (2D)`.
    pub fn max_pixel_pitch(&self, wavelength_m: f64) -> f64 {
        wavelength_m * self.measurement_distance_m / (2.0 * self.lens.outer_diameter_m)
    }

    pub fn check_sampling(&self, wavelength_m: f64, pixel_pitch_m: f64) -> Result<()> {
        let max = self.max_pixel_pitch(wavelength_m);
        if !(pixel_pitch_m > 0.0) || pixel_pitch_m > max * (1.0 + NYQUIST_SLACK) {
            return Err(Error::Nyquist {
                pitch_m: pixel_pitch_m,
                max_pitch_m: max,
                wavelength_m,
                distance_m: self.measurement_distance_m,
            });
        }
        Ok(())
    }
}

/// Solar EUV emission lines used with [`euv_sieve`], ascending.
pub const EUV_LINES_M: [f64; 4] = [33.16e-9, 33.28e-9, 33.42e-9, 33.54e-9];

/// Photon sieve with a 25 mm outer diameter and a 5 µm smallest hole.
pub fn euv_sieve() -> DiffractiveLensSpec {
    DiffractiveLensSpec {
        outer_diameter_m: 25e-3,
        smallest_hole_m: 5e-6,
        label: "euv-sieve".into(),
    }
}

/// Sampled incoherent PSF, centred at `(N/2, N/2)` and normalised to unit sum.
#[derive(Debug, Clone, PartialEq)]
pub struct PsfGrid {
    pub samples: Array2<f64>,
    pub pixel_pitch_m: f64,
    pub wavelength_m: f64,
    /// Smallest radius (pixels) holding 99.99% of the energy. Reporting only.
    pub support_radius_px: usize,
}

impl PsfGrid {
    fn from_intensity(mut samples: Array2<f64>, pixel_pitch_m: f64, wavelength_m: f64) -> Result<Self> {
        samples.mapv_inplace(|v| v.max(0.0));
        let total: f64 = samples.sum();
        if !(total > 0.0 && total.is_finite()) {
            return Err(Error::Solver("PSF has no energy".into()));
        }
        samples.mapv_inplace(|v| v / total);
        let support_radius_px = support_radius(&samples);
        Ok(Self {
            samples,
            pixel_pitch_m,
            wavelength_m,
            support_radius_px,
        })
    }

    /// Wraps arbitrary nonnegative samples without normalising them.
    pub fn from_samples(samples: Array2<f64>, pixel_pitch_m: f64, wavelength_m: f64) -> Result<Self> {
        let (r, c) = samples.dim();
        if r != c || r == 0 {
            return domain(format!("PSF grid must be square, got {r}x{c}"));
        }
        let support_radius_px = support_radius(&samples);
        Ok(Self {
            samples,
            pixel_pitch_m,
            wavelength_m,
            support_radius_px,
        })
    }

    pub fn size(&self) -> usize {
        self.samples.nrows()
    }

    pub fn peak(&self) -> f64 {
        self.samples.iter().copied().fold(0.0, f64::max)
    }

    /// Energy inside a disk of `radius_m` around the grid centre.
    pub fn encircled_energy(&self, radius_m: f64) -> f64 {
        let n = self.size();
        let c = (n / 2) as f64;
        let r_px = radius_m / self.pixel_pitch_m;
        self.samples
            .indexed_iter()
            .filter(|((i, j), _)| (*i as f64 - c).hypot(*j as f64 - c) <= r_px)
            .map(|(_, v)| v)
            .sum()
    }

    /// Diameter (pixels) of the disk whose area equals the set of samples at
    /// or above half the peak.
    pub fn fwhm_px(&self) -> f64 {
        let half = 0.5 * self.peak();
        let count = self.samples.iter().filter(|&&v| v >= half).count() as f64;
        2.0 * (count / PI).sqrt()
    }
}

fn support_radius(samples: &Array2<f64>) -> usize {
    let n = samples.nrows();
    let c = (n / 2) as f64;
    let mut by_radius: Vec<(f64, f64)> = samples
        .indexed_iter()
        .map(|((i, j), &v)| ((i as f64 - c).hypot(j as f64 - c), v))
        .collect();
    by_radius.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut acc = 0.0;
    for (r, v) in by_radius {
        acc += v;
        if acc >= SUPPORT_ENERGY {
            return r.ceil() as usize;
        }
    }
    (c * std::f64::consts::SQRT_2).ceil() as usize
}

/// One circular hole of an explicit aperture.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Hole {
    /// `[x, y]` in the lens plane.
    pub center_m: [f64; 2],
    pub diameter_m: f64,
}

/// Aperture used by [`psf_exact`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ApertureModel {
    /// Clear disk of the lens diameter carrying the ideal first-order focusing phase.
    FilledLens,
    /// Explicit holes; the lens focusing comes from their arrangement.
    Holes(Vec<Hole>),
}

/// Approximate (first-order lens) PSF.
pub fn psf_approx(
    geom: &AcquisitionGeometry,
    wavelength_m: f64,
    grid_size: usize,
    pixel_pitch_m: f64,
) -> Result<PsfGrid> {
    check_grid(geom, wavelength_m, grid_size, pixel_pitch_m)?;
    let eps = geom.defocus(wavelength_m)?;
    let intensity = pupil_intensity(
        geom.lens.outer_diameter_m,
        eps,
        wavelength_m,
        geom.measurement_distance_m,
        grid_size,
        pixel_pitch_m,
    );
    PsfGrid::from_intensity(intensity, pixel_pitch_m, wavelength_m)
}

/// Fresnel PSF of an explicit aperture.
pub fn psf_exact(
    geom: &AcquisitionGeometry,
    wavelength_m: f64,
    aperture: &ApertureModel,
    grid_size: usize,
    pixel_pitch_m: f64,
) -> Result<PsfGrid> {
    check_grid(geom, wavelength_m, grid_size, pixel_pitch_m)?;
    match aperture {
        ApertureModel::FilledLens => {
            // Δ_k minus the lens power 1/f: the residual quadratic phase.
            let chirp = geom.delta() - 1.0 / geom.lens.focal_length(wavelength_m)?;
            let intensity = pupil_intensity(
                geom.lens.outer_diameter_m,
                chirp,
                wavelength_m,
                geom.measurement_distance_m,
                grid_size,
                pixel_pitch_m,
            );
            PsfGrid::from_intensity(intensity, pixel_pitch_m, wavelength_m)
        }
        ApertureModel::Holes(holes) => {
            if holes.is_empty() {
                return domain("aperture hole list is empty");
            }
            if let Some(h) = holes.iter().find(|h| !(h.diameter_m > 0.0)) {
                return domain(format!("hole diameter must be positive, got {}", h.diameter_m));
            }
            let intensity = hole_sum_intensity(holes, geom, wavelength_m, grid_size, pixel_pitch_m);
            PsfGrid::from_intensity(intensity, pixel_pitch_m, wavelength_m)
        }
    }
}

fn check_grid(geom: &AcquisitionGeometry, wavelength_m: f64, grid_size: usize, pixel_pitch_m: f64) -> Result<()> {
    geom.validate()?;
    check_wavelength(wavelength_m)?;
    if grid_size < 2 || !grid_size.is_multiple_of(2) {
        return domain(format!("grid size must be even and >= 2, got {grid_size}"));
    }
    geom.check_sampling(wavelength_m, pixel_pitch_m)
}

/// Pupil-plane grid size for a given detector grid: `(M, spacing)`.
fn pupil_grid(diameter: f64, chirp: f64, wavelength: f64, distance: f64, n: usize, pitch: f64) -> (usize, f64) {
    let extent = wavelength * distance / pitch;
    let need_samples = MIN_PUPIL_SAMPLES * extent / diameter;
    // phase increment at the rim: 2π|ε|(D/2)δξ/λ <= π/2
    let need_chirp = 2.0 * chirp.abs() * diameter * extent / wavelength;
    let need = need_samples.max(need_chirp).max(n as f64);
    let mut q = (need / n as f64).ceil().max(1.0) as usize;
    if q * n > MAX_PUPIL_GRID {
        let capped = (MAX_PUPIL_GRID / n).max(1);
        log::warn!(
            "pupil grid {} exceeds {}; using {} (PSF may be under-resolved)",
            q * n,
            MAX_PUPIL_GRID,
            capped * n
        );
        q = capped;
    }
    let m = q * n;
    (m, extent / m as f64)
}

fn pupil_intensity(diameter: f64, chirp: f64, wavelength: f64, distance: f64, n: usize, pitch: f64) -> Array2<f64> {
    let (m, dxi) = pupil_grid(diameter, chirp, wavelength, distance, n, pitch);
    let radius = 0.5 * diameter;
    let half = (m / 2) as f64;
    const SUB: usize = 4;
    let rows: Vec<Vec<Complex64>> = par::map_range(m, |i| {
        let y = (i as f64 - half) * dxi;
        (0..m)
            .map(|j| {
                let x = (j as f64 - half) * dxi;
                let r = x.hypot(y);
                let cover = if r + dxi < radius {
                    1.0
                } else if r - dxi > radius {
                    0.0
                } else {
                    let mut hits = 0;
                    for a in 0..SUB {
                        for b in 0..SUB {
                            let yy = y + ((a as f64 + 0.5) / SUB as f64 - 0.5) * dxi;
                            let xx = x + ((b as f64 + 0.5) / SUB as f64 - 0.5) * dxi;
                            if xx.hypot(yy) <= radius {
                                hits += 1;
                            }
                        }
                    }
                    hits as f64 / (SUB * SUB) as f64
                };
                if cover == 0.0 {
                    Complex64::new(0.0, 0.0)
                } else {
                    Complex64::from_polar(cover, PI * chirp * r * r / wavelength)
                }
            })
            .collect()
    });
    let mut field = Array2::from_shape_vec((m, m), rows.into_iter().flatten().collect()).expect("pupil shape");
    field = ifftshift(&field);
    Fft2::square(m).forward_inplace(&mut field);
    let field = fftshift(&field);
    periodize(&field.mapv(|u| u.norm_sqr()), n)
}

/// Sums an `M x M` centred grid onto `N x N` (both centred at half size).
fn periodize(big: &Array2<f64>, n: usize) -> Array2<f64> {
    let m = big.nrows();
    if m == n {
        return big.clone();
    }
    let mut out = Array2::<f64>::zeros((n, n));
    for ((i, j), &v) in big.indexed_iter() {
        let oi = (i + n * m - m / 2 + n / 2) % n;
        let oj = (j + n * m - m / 2 + n / 2) % n;
        out[(oi, oj)] += v;
    }
    out
}

fn hole_sum_intensity(
    holes: &[Hole],
    geom: &AcquisitionGeometry,
    wavelength: f64,
    n: usize,
    pitch: f64,
) -> Array2<f64> {
    let d = geom.measurement_distance_m;
    let delta = geom.delta();
    let half = (n / 2) as f64;
    let rows: Vec<Vec<f64>> = par::map_range(n, |i| {
        let v = (i as f64 - half) * pitch;
        (0..n)
            .map(|j| {
                let u = (j as f64 - half) * pitch;
                let mut acc = Complex64::new(0.0, 0.0);
                for h in holes {
                    let [cx, cy] = h.center_m;
                    let w = h.diameter_m;
                    // chirp linearised about the hole centre shifts the hole's transform
                    let su = u - d * delta * cx;
                    let sv = v - d * delta * cy;
                    let rho = su.hypot(sv) / (wavelength * d);
                    let amp = w * w * jinc_r(w * rho);
                    let phase =
                        PI * delta * (cx * cx + cy * cy) / wavelength - 2.0 * PI * (cx * u + cy * v) / (wavelength * d);
                    acc += Complex64::from_polar(amp, phase);
                }
                acc.norm_sqr()
            })
            .collect()
    });
    Array2::from_shape_vec((n, n), rows.into_iter().flatten().collect()).expect("psf shape")
}
