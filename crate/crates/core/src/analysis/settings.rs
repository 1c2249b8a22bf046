//! MD/FD and band-count comparisons on a fixed phantom family.

use serde::{Deserialize, Serialize};

use super::{PreparedMethod, ReconMethod};
use crate::cube_io::{cube_quality, phantom_cube};
use crate::error::{domain, Result};
use crate::forward::{build_bank, default_reference_band, scenario_geometries, simulate, NoiseSpec, PsfModel, Setting};
use crate::optics::{DiffractiveLensSpec, EUV_LINES_M};

/// Bands for a `P`-band study: `P = 1` keeps the second line, `P = 2` the
/// two longest, `P = 3` the three longest, `P = 4` all four.
pub fn wavelengths_for(bands: usize) -> Result<Vec<f64>> {
    match bands {
        1 => Ok(vec![EUV_LINES_M[2]]),
        2..=4 => Ok(EUV_LINES_M[4 - bands..].to_vec()),
        _ => domain(format!("band count {bands} not in 1..=4")),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SettingCase {
    pub setting: Setting,
    /// `K = P`.
    pub bands: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SettingRow {
    pub setting: Setting,
    pub frames: usize,
    pub bands: usize,
    pub snr_db: f64,
    /// Number of phantoms averaged into this row.
    pub phantoms: usize,
    pub psnr_db: f64,
    pub ssim: f64,
    pub mean_band_psnr_db: f64,
}

/// Simulates and reconstructs a phantom family for every case and SNR and
/// reports family means. Band `λ_i` always carries the phantom keyed by its
/// line index, so cases with more bands extend the same scenes. Phantom `j`
/// uses noise seed `noise_seed + j` in every case.
#[allow(clippy::too_many_arguments)]
pub fn setting_comparison(
    lens: &DiffractiveLensSpec,
    grid_size: usize,
    pixel_pitch_m: f64,
    model: &PsfModel,
    cases: &[SettingCase],
    snr_db: &[f64],
    phantom_seeds: &[u64],
    noise_seed: u64,
    method: &ReconMethod,
) -> Result<Vec<SettingRow>> {
    if phantom_seeds.is_empty() {
        return domain("at least one phantom seed is required");
    }
    let mut rows = Vec::new();
    for case in cases {
        let wl = wavelengths_for(case.bands)?;
        let keys: Vec<u64> = wl
            .iter()
            .map(|w| EUV_LINES_M.iter().position(|l| l == w).expect("known line") as u64)
            .collect();
        let geom = scenario_geometries(case.setting, lens, &wl, default_reference_band(wl.len()))?;
        let bank = build_bank(&geom, &wl, grid_size, pixel_pitch_m, model)?;
        let solver = PreparedMethod::new(&bank, method)?;
        let truths = phantom_seeds
            .iter()
            .map(|&s| phantom_cube(grid_size, s, &keys, &wl, pixel_pitch_m))
            .collect::<Result<Vec<_>>>()?;
        for &snr in snr_db {
            let (mut psnr, mut ssim, mut band) = (0.0, 0.0, 0.0);
            for (j, truth) in truths.iter().enumerate() {
                let y = simulate(&bank, truth, &NoiseSpec::new(snr, noise_seed.wrapping_add(j as u64)))?;
                let rec = solver.solve(&y, &bank)?;
                let q = cube_quality(truth, &rec.cube)?;
                psnr += q.cube_psnr_db;
                ssim += q.cube_ssim;
                band += q.mean_band_psnr_db;
            }
            let m = truths.len() as f64;
            rows.push(SettingRow {
                setting: case.setting,
                frames: geom.len(),
                bands: wl.len(),
                snr_db: snr,
                phantoms: truths.len(),
                psnr_db: psnr / m,
                ssim: ssim / m,
                mean_band_psnr_db: band / m,
            });
        }
    }
    Ok(rows)
}
