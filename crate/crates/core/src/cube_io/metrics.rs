//! PSNR and SSIM.

use ndarray::{Array2, ArrayView2};
use serde::Serialize;

use super::SpectralCube;
use crate::error::{domain, Result};

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;

fn same_shape(a: ArrayView2<f64>, b: ArrayView2<f64>) -> Result<()> {
    if a.dim() != b.dim() {
        return domain(format!("metric inputs differ in shape: {:?} vs {:?}", a.dim(), b.dim()));
    }
    if a.is_empty() {
        return domain("metric inputs are empty");
    }
    Ok(())
}

fn peak_of(a: ArrayView2<f64>) -> f64 {
    a.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

fn psnr_with_peak(reference: ArrayView2<f64>, estimate: ArrayView2<f64>, peak: f64) -> f64 {
    let mse = reference
        .iter()
        .zip(estimate.iter())
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        / reference.len() as f64;
    if mse == 0.0 {
        f64::INFINITY
    } else {
        10.0 * (peak * peak / mse).log10()
    }
}

/// `10 log10(peak² / MSE)` with `peak` the reference maximum; `+inf` for an
/// exact match.
pub fn psnr(reference: &Array2<f64>, estimate: &Array2<f64>) -> Result<f64> {
    same_shape(reference.view(), estimate.view())?;
    Ok(psnr_with_peak(
        reference.view(),
        estimate.view(),
        peak_of(reference.view()),
    ))
}

pub(crate) fn gaussian_window() -> [f64; SSIM_WINDOW] {
    let mut w = [0.0; SSIM_WINDOW];
    let c = (SSIM_WINDOW / 2) as f64;
    for (i, v) in w.iter_mut().enumerate() {
        let d = i as f64 - c;
        *v = (-d * d / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
    }
    let s: f64 = w.iter().sum();
    w.iter_mut().for_each(|v| *v /= s);
    w
}

/// Separable Gaussian filtering over valid positions only.
fn filter_valid(a: &Array2<f64>, w: &[f64; SSIM_WINDOW]) -> Array2<f64> {
    let (r, c) = a.dim();
    let oc = c - SSIM_WINDOW + 1;
    let or = r - SSIM_WINDOW + 1;
    let horiz = Array2::from_shape_fn((r, oc), |(i, j)| {
        (0..SSIM_WINDOW).map(|t| w[t] * a[(i, j + t)]).sum::<f64>()
    });
    Array2::from_shape_fn((or, oc), |(i, j)| {
        (0..SSIM_WINDOW).map(|t| w[t] * horiz[(i + t, j)]).sum::<f64>()
    })
}

fn ssim_with_peak(x: &Array2<f64>, y: &Array2<f64>, peak: f64) -> f64 {
    let w = gaussian_window();
    let c1 = (0.01 * peak).powi(2);
    let c2 = (0.03 * peak).powi(2);
    let mx = filter_valid(x, &w);
    let my = filter_valid(y, &w);
    let sxx = filter_valid(&(x * x), &w);
    let syy = filter_valid(&(y * y), &w);
    let sxy = filter_valid(&(x * y), &w);
    let mut total = 0.0;
    for idx in 0..mx.len() {
        let (i, j) = (idx / mx.ncols(), idx % mx.ncols());
        let (ux, uy) = (mx[(i, j)], my[(i, j)]);
        let vx = sxx[(i, j)] - ux * ux;
        let vy = syy[(i, j)] - uy * uy;
        let cov = sxy[(i, j)] - ux * uy;
        total += ((2.0 * ux * uy + c1) * (2.0 * cov + c2)) / ((ux * ux + uy * uy + c1) * (vx + vy + c2));
    }
    total / mx.len() as f64
}

/// Mean SSIM over valid 11x11 Gaussian windows; constants scale with the
/// reference maximum.
pub fn ssim(reference: &Array2<f64>, estimate: &Array2<f64>) -> Result<f64> {
    same_shape(reference.view(), estimate.view())?;
    let (r, c) = reference.dim();
    if r < SSIM_WINDOW || c < SSIM_WINDOW {
        return domain(format!("SSIM needs at least {SSIM_WINDOW}x{SSIM_WINDOW} pixels"));
    }
    let peak = peak_of(reference.view());
    let min = reference.iter().copied().fold(f64::INFINITY, f64::min);
    if peak == min {
        return domain("SSIM is undefined for a constant reference");
    }
    Ok(ssim_with_peak(reference, estimate, peak))
}

/// Per-band and cube-level quality figures.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QualityReport {
    pub band_psnr_db: Vec<f64>,
    /// `None` where the reference band is constant.
    pub band_ssim: Vec<Option<f64>>,
    /// PSNR of the concatenated cube, peak = global reference maximum.
    pub cube_psnr_db: f64,
    pub mean_band_psnr_db: f64,
    /// Mean of the defined per-band SSIM values.
    pub cube_ssim: f64,
}

pub fn cube_quality(reference: &SpectralCube, estimate: &SpectralCube) -> Result<QualityReport> {
    if reference.band_count() != estimate.band_count() {
        return domain(format!(
            "cubes have {} and {} bands",
            reference.band_count(),
            estimate.band_count()
        ));
    }
    let mut band_psnr_db = Vec::new();
    let mut band_ssim = Vec::new();
    let mut sq = 0.0;
    let mut count = 0usize;
    let mut global_peak = f64::NEG_INFINITY;
    for (r, e) in reference.bands.iter().zip(&estimate.bands) {
        same_shape(r.view(), e.view())?;
        band_psnr_db.push(psnr(r, e)?);
        band_ssim.push(ssim(r, e).ok());
        sq += r.iter().zip(e.iter()).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
        count += r.len();
        global_peak = global_peak.max(peak_of(r.view()));
    }
    let mse = sq / count as f64;
    let cube_psnr_db = if mse == 0.0 {
        f64::INFINITY
    } else {
        10.0 * (global_peak * global_peak / mse).log10()
    };
    let defined: Vec<f64> = band_ssim.iter().flatten().copied().collect();
    let cube_ssim = if defined.is_empty() {
        f64::NAN
    } else {
        defined.iter().sum::<f64>() / defined.len() as f64
    };
    let mean_band_psnr_db = band_psnr_db.iter().sum::<f64>() / band_psnr_db.len() as f64;
    Ok(QualityReport {
        band_psnr_db,
        band_ssim,
        cube_psnr_db,
        mean_band_psnr_db,
        cube_ssim,
    })
}
