//! Orthonormal multilevel 2-D Haar transform.

use ndarray::{s, Array2};

use crate::error::{domain, Result};

/// Number of levels actually usable on an `n x n` grid, at most `requested`.
pub fn usable_levels(n: usize, requested: usize) -> usize {
    let mut levels = 0;
    let mut size = n;
    while levels < requested && size >= 2 && size.is_multiple_of(2) {
        size /= 2;
        levels += 1;
    }
    levels
}

fn step_1d(buf: &mut [f64], tmp: &mut [f64], inverse: bool) {
    let h = buf.len() / 2;
    let r = std::f64::consts::FRAC_1_SQRT_2;
    if inverse {
        for i in 0..h {
            let (a, d) = (buf[i], buf[h + i]);
            tmp[2 * i] = r * (a + d);
            tmp[2 * i + 1] = r * (a - d);
        }
    } else {
        for i in 0..h {
            let (x, y) = (buf[2 * i], buf[2 * i + 1]);
            tmp[i] = r * (x + y);
            tmp[h + i] = r * (x - y);
        }
    }
    buf.copy_from_slice(&tmp[..buf.len()]);
}

fn level(a: &mut Array2<f64>, size: usize, inverse: bool) {
    let mut buf = vec![0.0; size];
    let mut tmp = vec![0.0; size];
    let mut block = a.slice_mut(s![..size, ..size]);
    let mut pass = |block: &mut ndarray::ArrayViewMut2<f64>, along_rows: bool| {
        for idx in 0..size {
            let mut lane = if along_rows {
                block.row_mut(idx)
            } else {
                block.column_mut(idx)
            };
            for (b, v) in buf.iter_mut().zip(lane.iter()) {
                *b = *v;
            }
            step_1d(&mut buf, &mut tmp, inverse);
            for (v, b) in lane.iter_mut().zip(&buf) {
                *v = *b;
            }
        }
    };
    if inverse {
        pass(&mut block, false);
        pass(&mut block, true);
    } else {
        pass(&mut block, true);
        pass(&mut block, false);
    }
}

/// Forward transform; coarse coefficients end up in the top-left corner.
pub fn haar_forward(img: &Array2<f64>, levels: usize) -> Result<Array2<f64>> {
    let n = check(img, levels)?;
    let mut a = img.clone();
    let mut size = n;
    for _ in 0..levels {
        level(&mut a, size, false);
        size /= 2;
    }
    Ok(a)
}

pub fn haar_inverse(coeffs: &Array2<f64>, levels: usize) -> Result<Array2<f64>> {
    let n = check(coeffs, levels)?;
    let mut a = coeffs.clone();
    for l in (0..levels).rev() {
        level(&mut a, n >> l, true);
    }
    Ok(a)
}

fn check(a: &Array2<f64>, levels: usize) -> Result<usize> {
    let (r, c) = a.dim();
    if r != c {
        return domain(format!("Haar transform needs a square image, got {r}x{c}"));
    }
    if usable_levels(r, levels) != levels {
        return domain(format!("{levels} Haar levels do not fit a {r}x{r} grid"));
    }
    Ok(r)
}
