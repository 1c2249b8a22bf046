//! `(shift·I + ΛᴴΛ)⁻¹` for a block matrix of diagonal blocks.
//!
//! Every block is diagonal in the DFT basis, so the block recursion decouples
//! into one small `P x P` inversion per frequency. The recursion splits at
//! `floor(P/2)` and uses the Schur-complement formulas
//! `K = −(Σ22 − Σ21 Σ11⁻¹ Σ12)⁻¹`, `C = Σ11⁻¹ − Σ11⁻¹ Σ12 K Σ21 Σ11⁻¹`.

use num_complex::Complex64;

use crate::error::{domain, Error, Result};
use crate::fft::Spectrum;
use crate::forward::PsfBank;
use crate::par;

const PIVOT_FLOOR: f64 = 1e-300;
const CHUNK: usize = 4096;

/// `P x P` grid of diagonal blocks, stored as spectra in row-major block order.
#[derive(Debug, Clone)]
pub struct SigmaInverse {
    pub bands: usize,
    pub shift: f64,
    pub blocks: Vec<Spectrum>,
}

type C = Complex64;

/// Dense row-major `m x m` complex matrix helpers.
fn sub(a: &[C], m: usize, r0: usize, c0: usize, rows: usize, cols: usize) -> Vec<C> {
    let mut out = Vec::with_capacity(rows * cols);
    for i in 0..rows {
        out.extend_from_slice(&a[(r0 + i) * m + c0..(r0 + i) * m + c0 + cols]);
    }
    out
}

fn matmul(a: &[C], b: &[C], n: usize, k: usize, m: usize) -> Vec<C> {
    let mut out = vec![C::new(0.0, 0.0); n * m];
    for i in 0..n {
        for t in 0..k {
            let av = a[i * k + t];
            for j in 0..m {
                out[i * m + j] += av * b[t * m + j];
            }
        }
    }
    out
}

/// Recursive 2x2 block inversion.
pub(crate) fn block_inverse(a: &[C], m: usize) -> Result<Vec<C>> {
    if m == 1 {
        if a[0].norm() < PIVOT_FLOOR {
            return Err(Error::Solver(format!("singular pivot {:e}", a[0].norm())));
        }
        return Ok(vec![a[0].inv()]);
    }
    let h = m / 2;
    let l = m - h;
    let s11 = sub(a, m, 0, 0, h, h);
    let s12 = sub(a, m, 0, h, h, l);
    let s21 = sub(a, m, h, 0, l, h);
    let s22 = sub(a, m, h, h, l, l);
    let s11i = block_inverse(&s11, h)?;
    let s11i_s12 = matmul(&s11i, &s12, h, h, l);
    let s21_s11i = matmul(&s21, &s11i, l, h, h);
    let mut schur = matmul(&s21, &s11i_s12, l, h, l);
    for (s, d) in schur.iter_mut().zip(&s22) {
        *s = d - *s;
    }
    let k: Vec<C> = block_inverse(&schur, l)?.into_iter().map(|v| -v).collect();
    let top_right = matmul(&s11i_s12, &k, h, l, l);
    let bottom_left = matmul(&k, &s21_s11i, l, l, h);
    let corr = matmul(&top_right, &s21_s11i, h, l, h);
    let mut out = vec![C::new(0.0, 0.0); m * m];
    for i in 0..h {
        for j in 0..h {
            out[i * m + j] = s11i[i * h + j] - corr[i * h + j];
        }
        for j in 0..l {
            out[i * m + h + j] = top_right[i * l + j];
        }
    }
    for i in 0..l {
        for j in 0..h {
            out[(h + i) * m + j] = bottom_left[i * h + j];
        }
        for j in 0..l {
            out[(h + i) * m + h + j] = -k[i * l + j];
        }
    }
    Ok(out)
}

/// Per-frequency `Σ = shift·I + ΛᴴΛ` entry `(i, j)` at flat index `f`.
fn sigma_entry(bank: &PsfBank, i: usize, j: usize, f: usize, shift: f64) -> C {
    let mut acc = if i == j { C::new(shift, 0.0) } else { C::new(0.0, 0.0) };
    for row in &bank.lambda_dfts {
        let a = row[i].as_slice().expect("standard layout")[f];
        let b = row[j].as_slice().expect("standard layout")[f];
        acc += a.conj() * b;
    }
    acc
}

/// Inverts `shift·I + ΛᴴΛ` frequency by frequency.
pub fn precompute_sigma_inverse(bank: &PsfBank, shift: f64) -> Result<SigmaInverse> {
    if !(shift > 0.0 && shift.is_finite()) {
        return domain(format!("shift must be positive, got {shift}"));
    }
    let p = bank.bands();
    let n = bank.size();
    let total = n * n;
    let chunks = total.div_ceil(CHUNK);
    let results: Vec<Result<Vec<C>>> = par::map_range(chunks, |c| {
        let lo = c * CHUNK;
        let hi = (lo + CHUNK).min(total);
        let mut out = Vec::with_capacity((hi - lo) * p * p);
        let mut sig = vec![C::new(0.0, 0.0); p * p];
        for f in lo..hi {
            for i in 0..p {
                for j in 0..p {
                    sig[i * p + j] = sigma_entry(bank, i, j, f, shift);
                }
            }
            let mut inv = block_inverse(&sig, p)?;
            // Σ is Hermitian; make the stored inverse exactly so.
            for i in 0..p {
                inv[i * p + i].im = 0.0;
                for j in 0..i {
                    inv[i * p + j] = inv[j * p + i].conj();
                }
            }
            out.extend(inv);
        }
        Ok(out)
    });
    let mut blocks = vec![Spectrum::zeros((n, n)); p * p];
    for (c, r) in results.into_iter().enumerate() {
        let data = r?;
        let lo = c * CHUNK;
        for (t, chunk) in data.chunks(p * p).enumerate() {
            for (b, v) in chunk.iter().enumerate() {
                blocks[b].as_slice_mut().expect("standard layout")[lo + t] = *v;
            }
        }
    }
    Ok(SigmaInverse {
        bands: p,
        shift,
        blocks,
    })
}

impl SigmaInverse {
    pub fn block(&self, i: usize, j: usize) -> &Spectrum {
        &self.blocks[i * self.bands + j]
    }

    /// `out_i = Σ_j block(i, j) · rhs_j`.
    pub fn apply(&self, rhs: &[Spectrum]) -> Vec<Spectrum> {
        let p = self.bands;
        assert_eq!(rhs.len(), p, "right-hand side needs one spectrum per band");
        let srcs: Vec<&[C]> = rhs.iter().map(|r| r.as_slice().expect("standard layout")).collect();
        (0..p)
            .map(|i| {
                let mut out = Spectrum::zeros(rhs[0].dim());
                let row: Vec<&[C]> = (0..p)
                    .map(|j| self.block(i, j).as_slice().expect("standard layout"))
                    .collect();
                let dst = out.as_slice_mut().expect("standard layout");
                par::for_each_chunk_mut(dst, CHUNK, |c, chunk| {
                    let base = c * CHUNK;
                    for (t, o) in chunk.iter_mut().enumerate() {
                        let f = base + t;
                        let mut acc = C::new(0.0, 0.0);
                        for j in 0..p {
                            acc += row[j][f] * srcs[j][f];
                        }
                        *o = acc;
                    }
                });
                out
            })
            .collect()
    }

    /// `max |(shift·I + ΛᴴΛ)·Σ⁻¹ − I|` over all frequencies and entries.
    pub fn residual(&self, bank: &PsfBank) -> f64 {
        let p = self.bands;
        let total = bank.size() * bank.size();
        let chunks = total.div_ceil(CHUNK);
        let worst = par::map_range(chunks, |c| {
            let lo = c * CHUNK;
            let hi = (lo + CHUNK).min(total);
            let mut worst = 0.0f64;
            for f in lo..hi {
                for i in 0..p {
                    for j in 0..p {
                        let mut acc = C::new(0.0, 0.0);
                        for t in 0..p {
                            let inv = self.block(t, j).as_slice().expect("standard layout")[f];
                            acc += sigma_entry(bank, i, t, f, self.shift) * inv;
                        }
                        if i == j {
                            acc -= 1.0;
                        }
                        worst = worst.max(acc.norm());
                    }
                }
            }
            worst
        });
        worst.into_iter().fold(0.0, f64::max)
    }
}
