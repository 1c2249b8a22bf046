//! Two-point resolvability of reconstructed point targets.

use serde::Serialize;

use super::{reconstruct, ReconMethod};
use crate::cube_io::{make_point_scene, PointSceneSpec, SpectralCube};
use crate::error::{domain, Result};
use crate::fft::Image;
use crate::forward::{simulate, NoiseSpec, PsfBank};

/// A pair counts as resolved when the midpoint falls below this fraction of
/// the weaker peak.
pub const DIP_RATIO: f64 = 0.8;
const PROFILE_SAMPLES: usize = 21;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairResult {
    pub band: usize,
    /// `(row, col)` in pixels.
    pub a: (f64, f64),
    pub b: (f64, f64),
    pub peak_a: f64,
    pub peak_b: f64,
    pub midpoint: f64,
    pub resolved: bool,
    /// Bilinear samples along the segment from `a` to `b`.
    pub profile: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct ResolutionOutcome {
    pub truth: SpectralCube,
    pub cube: SpectralCube,
    pub pairs: Vec<PairResult>,
    pub converged: Option<bool>,
}

impl ResolutionOutcome {
    pub fn all_resolved(&self) -> bool {
        !self.pairs.is_empty() && self.pairs.iter().all(|p| p.resolved)
    }

    pub fn none_resolved(&self) -> bool {
        self.pairs.iter().all(|p| !p.resolved)
    }

    pub fn resolved_fraction(&self) -> f64 {
        if self.pairs.is_empty() {
            return 0.0;
        }
        self.pairs.iter().filter(|p| p.resolved).count() as f64 / self.pairs.len() as f64
    }
}

pub(crate) fn bilinear(img: &Image, r: f64, c: f64) -> f64 {
    let (n, m) = img.dim();
    let r0 = r.floor().clamp(0.0, (n - 1) as f64);
    let c0 = c.floor().clamp(0.0, (m - 1) as f64);
    let (i, j) = (r0 as usize, c0 as usize);
    let (i1, j1) = ((i + 1).min(n - 1), (j + 1).min(m - 1));
    let (fr, fc) = ((r - r0).clamp(0.0, 1.0), (c - c0).clamp(0.0, 1.0));
    img[(i, j)] * (1.0 - fr) * (1.0 - fc)
        + img[(i1, j)] * fr * (1.0 - fc)
        + img[(i, j1)] * (1.0 - fr) * fc
        + img[(i1, j1)] * fr * fc
}

fn local_peak(img: &Image, r: f64, c: f64) -> f64 {
    let (n, m) = img.dim();
    let (ri, ci) = (r.round() as isize, c.round() as isize);
    let mut best = f64::NEG_INFINITY;
    for di in -1..=1 {
        for dj in -1..=1 {
            let (i, j) = (ri + di, ci + dj);
            if i >= 0 && j >= 0 && (i as usize) < n && (j as usize) < m {
                best = best.max(img[(i as usize, j as usize)]);
            }
        }
    }
    best
}

/// Nearest-neighbour pairs of each band's points, judged on `cube`.
pub fn judge_pairs(spec: &PointSceneSpec, cube: &SpectralCube) -> Vec<PairResult> {
    let pitch = spec.pitch_m;
    let mut out = Vec::new();
    for band in 0..cube.band_count() {
        let pts: Vec<(f64, f64)> = spec
            .points
            .iter()
            .filter(|p| p.band == band)
            .map(|p| (p.row_m / pitch, p.col_m / pitch))
            .collect();
        let dist = |a: (f64, f64), b: (f64, f64)| (a.0 - b.0).hypot(a.1 - b.1);
        let mut nearest = f64::INFINITY;
        for (i, &a) in pts.iter().enumerate() {
            for &b in &pts[i + 1..] {
                nearest = nearest.min(dist(a, b));
            }
        }
        let img = &cube.bands[band];
        for (i, &a) in pts.iter().enumerate() {
            for &b in &pts[i + 1..] {
                if dist(a, b) > nearest * (1.0 + 1e-9) {
                    continue;
                }
                let peak_a = local_peak(img, a.0, a.1);
                let peak_b = local_peak(img, b.0, b.1);
                let midpoint = bilinear(img, 0.5 * (a.0 + b.0), 0.5 * (a.1 + b.1));
                let profile = (0..PROFILE_SAMPLES)
                    .map(|s| {
                        let t = s as f64 / (PROFILE_SAMPLES - 1) as f64;
                        bilinear(img, a.0 + t * (b.0 - a.0), a.1 + t * (b.1 - a.1))
                    })
                    .collect();
                let weaker = peak_a.min(peak_b);
                out.push(PairResult {
                    band,
                    a,
                    b,
                    peak_a,
                    peak_b,
                    midpoint,
                    resolved: weaker > 0.0 && midpoint < DIP_RATIO * weaker,
                    profile,
                });
            }
        }
    }
    out
}

/// Simulates the point scene at the given noise level, reconstructs it and
/// applies the dip criterion to every nearest-neighbour pair.
pub fn resolution_experiment(
    bank: &PsfBank,
    spec: &PointSceneSpec,
    noise: &NoiseSpec,
    method: &ReconMethod,
) -> Result<ResolutionOutcome> {
    if (spec.pitch_m - bank.pixel_pitch_m).abs() > 1e-12 * bank.pixel_pitch_m {
        return domain("scene pitch differs from the detector pitch");
    }
    let truth = make_point_scene(spec, &bank.wavelengths_m, bank.size())?;
    let y = simulate(bank, &truth, noise)?;
    let rec = reconstruct(&y, bank, method)?;
    let pairs = judge_pairs(spec, &rec.cube);
    Ok(ResolutionOutcome {
        truth,
        cube: rec.cube,
        pairs,
        converged: rec.converged,
    })
}
