//! Two-dimensional DFTs on row-major arrays, plus shift helpers.

use std::sync::Arc;

use ndarray::Array2;
use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::par;

pub type Image = Array2<f64>;
pub type Spectrum = Array2<Complex64>;

/// Planned forward/inverse 2-D DFT for a fixed `rows x cols` shape.
///
/// The forward transform is unnormalised; the inverse carries the
/// `1/(rows*cols)` factor, so `inverse(forward(x)) == x`.
#[derive(Clone)]
pub struct Fft2 {
    rows: usize,
    cols: usize,
    row_fwd: Arc<dyn Fft<f64>>,
    row_inv: Arc<dyn Fft<f64>>,
    col_fwd: Arc<dyn Fft<f64>>,
    col_inv: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for Fft2 {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Fft2")
            .field("rows", &self.rows)
            .field("cols", &self.cols)
            .finish()
    }
}

impl Fft2 {
    pub fn new(rows: usize, cols: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            rows,
            cols,
            row_fwd: planner.plan_fft_forward(cols),
            row_inv: planner.plan_fft_inverse(cols),
            col_fwd: planner.plan_fft_forward(rows),
            col_inv: planner.plan_fft_inverse(rows),
        }
    }

    pub fn square(n: usize) -> Self {
        Self::new(n, n)
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn forward_inplace(&self, a: &mut Spectrum) {
        self.transform(a, &self.row_fwd, &self.col_fwd);
    }

    pub fn inverse_inplace(&self, a: &mut Spectrum) {
        self.transform(a, &self.row_inv, &self.col_inv);
        let scale = self.scale();
        a.mapv_inplace(|v| v * scale);
    }

    fn scale(&self) -> f64 {
        1.0 / (self.rows * self.cols) as f64
    }

    pub fn forward_real(&self, img: &Image) -> Spectrum {
        let mut s = img.mapv(|v| Complex64::new(v, 0.0));
        self.forward_inplace(&mut s);
        s
    }

    /// Inverse transform keeping the real part.
    pub fn inverse_real(&self, mut spec: Spectrum) -> Image {
        self.transform(&mut spec, &self.row_inv, &self.col_inv);
        let scale = self.scale();
        spec.mapv(|v| v.re * scale)
    }

    fn transform(&self, a: &mut Spectrum, row: &Arc<dyn Fft<f64>>, col: &Arc<dyn Fft<f64>>) {
        assert_eq!(a.dim(), (self.rows, self.cols), "Fft2 shape mismatch");
        if !a.is_standard_layout() {
            *a = a.as_standard_layout().into_owned();
        }
        let data = a.as_slice_mut().expect("standard layout");
        run_rows(data, self.cols, row);
        run_cols(data, self.rows, self.cols, col);
    }
}

fn run_rows(data: &mut [Complex64], len: usize, fft: &Arc<dyn Fft<f64>>) {
    let rows = data.len() / len;
    let threads = par::current_threads().max(1);
    let rows_per_task = rows.div_ceil(threads * 2).max(1);
    par::for_each_chunk_mut(data, rows_per_task * len, |_, chunk| {
        let mut scratch = vec![Complex64::new(0.0, 0.0); fft.get_inplace_scratch_len()];
        fft.process_with_scratch(chunk, &mut scratch);
    });
}

/// Columns per gather block: a few cache lines per row, so strided reads
/// and writes use every line they touch exactly once.
const COL_BLOCK: usize = 16;

/// Transforms every column: gather a block of columns into contiguous rows,
/// run the 1-D FFTs, scatter back.
fn run_cols(data: &mut [Complex64], rows: usize, cols: usize, fft: &Arc<dyn Fft<f64>>) {
    let blocks = cols.div_ceil(COL_BLOCK);
    let batch = (par::current_threads() * 2).max(1);
    let mut first = 0;
    while first < blocks {
        let last = (first + batch).min(blocks);
        let src: &[Complex64] = data;
        let done = par::map_range(last - first, |i| {
            let c0 = (first + i) * COL_BLOCK;
            let width = COL_BLOCK.min(cols - c0);
            let mut buf = vec![Complex64::new(0.0, 0.0); width * rows];
            for r in 0..rows {
                let row = &src[r * cols + c0..r * cols + c0 + width];
                for (b, v) in row.iter().enumerate() {
                    buf[b * rows + r] = *v;
                }
            }
            let mut scratch = vec![Complex64::new(0.0, 0.0); fft.get_inplace_scratch_len()];
            fft.process_with_scratch(&mut buf, &mut scratch);
            (c0, width, buf)
        });
        for (c0, width, buf) in done {
            for r in 0..rows {
                let row = &mut data[r * cols + c0..r * cols + c0 + width];
                for (b, v) in row.iter_mut().enumerate() {
                    *v = buf[b * rows + r];
                }
            }
        }
        first = last;
    }
}

/// Circular shift: `out[(i + dr) mod rows, (j + dc) mod cols] = a[i, j]`.
pub fn roll<T: Clone>(a: &Array2<T>, dr: isize, dc: isize) -> Array2<T> {
    let (rows, cols) = a.dim();
    let dr = dr.rem_euclid(rows as isize) as usize;
    let dc = dc.rem_euclid(cols as isize) as usize;
    Array2::from_shape_fn((rows, cols), |(i, j)| {
        a[((i + rows - dr) % rows, (j + cols - dc) % cols)].clone()
    })
}

/// Moves the zero-frequency (origin) sample to the array centre.
pub fn fftshift<T: Clone>(a: &Array2<T>) -> Array2<T> {
    let (rows, cols) = a.dim();
    roll(a, (rows / 2) as isize, (cols / 2) as isize)
}

/// Inverse of [`fftshift`]: moves the centre sample to the origin.
pub fn ifftshift<T: Clone>(a: &Array2<T>) -> Array2<T> {
    let (rows, cols) = a.dim();
    roll(a, -((rows / 2) as isize), -((cols / 2) as isize))
}
