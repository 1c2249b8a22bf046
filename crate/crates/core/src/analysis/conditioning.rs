//! Condition numbers of column submatrices of `H` for known point supports.

use std::collections::HashSet;

use nalgebra::DMatrix;
use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::cube_io::grid_layout;
use crate::error::{domain, Result};
use crate::forward::{forward_planes, PsfBank};
use crate::par;

/// Upper bound on the number of columns handed to the dense SVD.
pub const MAX_COLUMNS: usize = 4096;

/// One voxel of the unknown cube.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Voxel {
    pub band: usize,
    pub row: usize,
    pub col: usize,
}

/// Column `H e_v`, flattened frame-major.
pub fn impulse_column(bank: &PsfBank, v: Voxel) -> Vec<f64> {
    let n = bank.size();
    let mut bands = vec![Array2::zeros((n, n)); bank.bands()];
    bands[v.band][(v.row, v.col)] = 1.0;
    forward_planes(bank, &bands)
        .into_iter()
        .flat_map(|f| f.into_iter())
        .collect()
}

/// `σ_max / σ_min` of the submatrix of `H` whose columns are the given voxels.
/// Returns `+inf` when the columns are numerically dependent.
pub fn submatrix_conditioning(bank: &PsfBank, voxels: &[Voxel]) -> Result<f64> {
    if voxels.is_empty() {
        return domain("at least one voxel is required");
    }
    if voxels.len() > MAX_COLUMNS {
        return domain(format!(
            "{} columns exceed the dense budget of {MAX_COLUMNS}",
            voxels.len()
        ));
    }
    let n = bank.size();
    let mut seen = HashSet::new();
    for v in voxels {
        if v.band >= bank.bands() || v.row >= n || v.col >= n {
            return domain(format!("voxel {v:?} outside the {}x{n}x{n} cube", bank.bands()));
        }
        if !seen.insert(*v) {
            return domain(format!("duplicate voxel {v:?}"));
        }
    }
    let cols = par::map_slice(voxels, |v| impulse_column(bank, *v));
    Ok(condition_number_of_columns(&cols))
}

/// Condition number of the matrix with the given columns, via a dense SVD.
pub fn condition_number_of_columns(cols: &[Vec<f64>]) -> f64 {
    let rows = cols[0].len();
    let m = DMatrix::from_fn(rows, cols.len(), |i, j| cols[j][i]);
    let sv = m.singular_values();
    let max = sv.iter().copied().fold(0.0, f64::max);
    let min = sv.iter().copied().fold(f64::INFINITY, f64::min);
    // numerical rank test: singular values at rounding level count as zero
    let floor = (max * rows.max(cols.len()) as f64 * f64::EPSILON).max(1e-300);
    if min < floor {
        f64::INFINITY
    } else {
        max / min
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConditioningRow {
    pub band: usize,
    pub count: usize,
    pub spacing_m: f64,
    pub condition: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConditioningReport {
    pub grid_size: usize,
    pub pixel_pitch_m: f64,
    pub rows: Vec<ConditioningRow>,
}

/// Sweeps point-grid layouts (`count` points at each spacing) in every listed band.
pub fn conditioning_sweep(
    bank: &PsfBank,
    bands: &[usize],
    counts: &[usize],
    spacings_m: &[f64],
) -> Result<ConditioningReport> {
    let n = bank.size();
    let pitch = bank.pixel_pitch_m;
    let mut rows = Vec::new();
    for &band in bands {
        for &count in counts {
            for &spacing in spacings_m {
                let voxels: Vec<Voxel> = grid_layout(band, count, spacing, pitch, n)
                    .into_iter()
                    .map(|p| {
                        let row = (p.row_m / pitch).round();
                        let col = (p.col_m / pitch).round();
                        if row < 0.0 || col < 0.0 || row >= n as f64 || col >= n as f64 {
                            return domain(format!("{count} points at {spacing} m do not fit a {n}x{n} grid"));
                        }
                        Ok(Voxel {
                            band,
                            row: row as usize,
                            col: col as usize,
                        })
                    })
                    .collect::<Result<_>>()?;
                rows.push(ConditioningRow {
                    band,
                    count,
                    spacing_m: spacing,
                    condition: submatrix_conditioning(bank, &voxels)?,
                });
            }
        }
    }
    Ok(ConditioningReport {
        grid_size: n,
        pixel_pitch_m: pitch,
        rows,
    })
}

/// Consecutive spacing pair with the largest drop in `ln(condition)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Knee {
    pub from_m: f64,
    pub to_m: f64,
    pub log_drop: f64,
}

impl ConditioningReport {
    /// Rows for one `(band, count)`, ordered by spacing.
    pub fn series(&self, band: usize, count: usize) -> Vec<&ConditioningRow> {
        let mut s: Vec<&ConditioningRow> = self
            .rows
            .iter()
            .filter(|r| r.band == band && r.count == count)
            .collect();
        s.sort_by(|a, b| a.spacing_m.total_cmp(&b.spacing_m));
        s
    }

    pub fn knee(&self, band: usize, count: usize) -> Option<Knee> {
        let s = self.series(band, count);
        s.windows(2)
            .map(|w| Knee {
                from_m: w[0].spacing_m,
                to_m: w[1].spacing_m,
                log_drop: w[0].condition.ln() - w[1].condition.ln(),
            })
            .filter(|k| !k.log_drop.is_nan())
            .max_by(|a, b| a.log_drop.total_cmp(&b.log_drop))
    }
}
