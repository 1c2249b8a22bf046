//! Synthetic scenes: point targets and smooth structured phantoms.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::SpectralCube;
use crate::error::{domain, Result};

/// One square point source.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PointSource {
    pub band: usize,
    pub row_m: f64,
    pub col_m: f64,
    pub size_m: f64,
    #[serde(default = "unit")]
    pub amplitude: f64,
}

fn unit() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PointSceneSpec {
    pub pitch_m: f64,
    #[serde(default)]
    pub points: Vec<PointSource>,
}

/// Renders point sources as square blocks of `round(size / pitch)` pixels
/// centred on their positions.
pub fn make_point_scene(spec: &PointSceneSpec, wavelengths_m: &[f64], n: usize) -> Result<SpectralCube> {
    let pitch = spec.pitch_m;
    if !(pitch > 0.0) {
        return domain(format!("scene pitch must be positive, got {pitch}"));
    }
    let mut cube = SpectralCube::zeros(n, wavelengths_m.to_vec(), pitch)?;
    for (idx, p) in spec.points.iter().enumerate() {
        if p.band >= wavelengths_m.len() {
            return domain(format!("point {idx}: band {} out of range", p.band));
        }
        let size = (p.size_m / pitch).round();
        if size < 1.0 {
            return domain(format!("point {idx}: size {} m is below one pixel", p.size_m));
        }
        let size = size as i64;
        let r0 = (p.row_m / pitch - (size - 1) as f64 / 2.0).round() as i64;
        let c0 = (p.col_m / pitch - (size - 1) as f64 / 2.0).round() as i64;
        let inside = |v: i64| v >= 0 && v + size <= n as i64;
        if !inside(r0) || !inside(c0) {
            return domain(format!(
                "point {idx} at ({:.3e}, {:.3e}) m falls outside the {n}x{n} field",
                p.row_m, p.col_m
            ));
        }
        let band = &mut cube.bands[p.band];
        for i in r0..r0 + size {
            for j in c0..c0 + size {
                band[(i as usize, j as usize)] = p.amplitude;
            }
        }
    }
    Ok(cube)
}

fn grid_shape(count: usize) -> (usize, usize) {
    let mut rows = (count as f64).sqrt().floor() as usize;
    while rows > 1 && !count.is_multiple_of(rows) {
        rows -= 1;
    }
    (rows.max(1), count / rows.max(1))
}

/// `count` unit points on a square-ish grid with the given spacing, centred
/// in an `n x n` field.
pub fn grid_layout(band: usize, count: usize, spacing_m: f64, pitch_m: f64, n: usize) -> Vec<PointSource> {
    let (rows, cols) = grid_shape(count);
    let s = spacing_m / pitch_m;
    let centre = (n / 2) as f64;
    let r_start = (centre - (rows - 1) as f64 * s / 2.0).floor();
    let c_start = (centre - (cols - 1) as f64 * s / 2.0).floor();
    let mut out = Vec::with_capacity(count);
    for i in 0..rows {
        for j in 0..cols {
            out.push(PointSource {
                band,
                row_m: (r_start + (i as f64 * s).round()) * pitch_m,
                col_m: (c_start + (j as f64 * s).round()) * pitch_m,
                size_m: pitch_m,
                amplitude: 1.0,
            });
        }
    }
    out
}

/// Two, four and sixteen point sources in the first three bands.
pub fn resolution_layout(spacing_m: f64, pitch_m: f64, n: usize) -> PointSceneSpec {
    let mut points = grid_layout(0, 2, spacing_m, pitch_m, n);
    points.extend(grid_layout(1, 4, spacing_m, pitch_m, n));
    points.extend(grid_layout(2, 16, spacing_m, pitch_m, n));
    PointSceneSpec { pitch_m, points }
}

fn mix(seed: u64, key: u64) -> u64 {
    // splitmix64 finaliser
    let mut z = seed ^ key.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Smooth structured phantom in `[0, 1]`: Gaussian blobs plus soft-edged
/// disks. `key` selects the member of the family.
pub fn phantom_band(n: usize, seed: u64, key: u64) -> Array2<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(mix(seed, key));
    let nf = n as f64;
    let blobs: Vec<(f64, f64, f64, f64)> = (0..rng.random_range(5..9))
        .map(|_| {
            (
                rng.random_range(0.2..0.8) * nf,
                rng.random_range(0.2..0.8) * nf,
                rng.random_range(0.04..0.12) * nf,
                rng.random_range(0.3..1.0),
            )
        })
        .collect();
    let disks: Vec<(f64, f64, f64, f64)> = (0..2)
        .map(|_| {
            (
                rng.random_range(0.25..0.75) * nf,
                rng.random_range(0.25..0.75) * nf,
                rng.random_range(0.06..0.15) * nf,
                rng.random_range(0.2..0.6),
            )
        })
        .collect();
    let mut img = Array2::from_shape_fn((n, n), |(i, j)| {
        let (y, x) = (i as f64, j as f64);
        let mut v = 0.0;
        for &(cy, cx, s, a) in &blobs {
            let r2 = (y - cy).powi(2) + (x - cx).powi(2);
            v += a * (-r2 / (2.0 * s * s)).exp();
        }
        for &(cy, cx, r, a) in &disks {
            let d = (y - cy).hypot(x - cx) - r;
            v += a * 0.5 * (1.0 - (d / 1.5).tanh());
        }
        v
    });
    let max = img.iter().copied().fold(0.0, f64::max);
    if max > 0.0 {
        img.mapv_inplace(|v| v / max);
    }
    img
}

pub fn phantom_cube(n: usize, seed: u64, keys: &[u64], wavelengths_m: &[f64], pitch_m: f64) -> Result<SpectralCube> {
    if keys.len() != wavelengths_m.len() {
        return domain("one phantom key per wavelength is required");
    }
    let bands = keys.iter().map(|&k| phantom_band(n, seed, k)).collect();
    SpectralCube::new(bands, wavelengths_m.to_vec(), pitch_m)
}
