#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use sieve_core::cube_io::{MeasurementSet, SpectralCube, Stack};
use sieve_core::forward::{apply_forward, PsfBank};
use sieve_core::optics::{euv_sieve, AcquisitionGeometry, PsfGrid};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_image(rng: &mut ChaCha8Rng, n: usize) -> Array2<f64> {
    Array2::from_shape_fn((n, n), |_| rng.random_range(-1.0..1.0))
}

pub fn random_stack(rng: &mut ChaCha8Rng, count: usize, n: usize) -> Stack {
    (0..count).map(|_| random_image(rng, n)).collect()
}

pub fn wavelengths(p: usize) -> Vec<f64> {
    (0..p).map(|i| 33.0e-9 + i as f64 * 0.1e-9).collect()
}

/// Bank of `k x p` random nonnegative, unit-sum kernels; geometry is nominal.
pub fn random_bank(rng: &mut ChaCha8Rng, n: usize, k: usize, p: usize) -> PsfBank {
    let wl = wavelengths(p);
    let psfs = (0..k)
        .map(|_| {
            wl.iter()
                .map(|&w| {
                    let mut s = Array2::from_shape_fn((n, n), |_| rng.random_range(0.0..1.0));
                    let total = s.sum();
                    s.mapv_inplace(|v| v / total);
                    PsfGrid::from_samples(s, 1e-6, w).unwrap()
                })
                .collect()
        })
        .collect();
    let geometry = (0..k)
        .map(|i| AcquisitionGeometry::at_plane(euv_sieve(), 3.7 + 0.01 * i as f64).unwrap())
        .collect();
    PsfBank::from_psfs(psfs, geometry, wl, 1e-6).unwrap()
}

pub fn cube(bands: Stack) -> SpectralCube {
    let p = bands.len();
    SpectralCube::new(bands, wavelengths(p), 1e-6).unwrap()
}

pub fn measurements(bank: &PsfBank, frames: Stack) -> MeasurementSet {
    let k = frames.len();
    MeasurementSet {
        frames,
        geometry: bank.geometry.clone(),
        noise_sigma: vec![0.0; k],
        snr_db: None,
        seed: None,
        pixel_pitch_m: bank.pixel_pitch_m,
    }
}

pub fn flatten(stack: &[Array2<f64>]) -> DVector<f64> {
    DVector::from_iterator(
        stack.iter().map(|a| a.len()).sum(),
        stack.iter().flat_map(|a| a.iter().copied()),
    )
}

pub fn unflatten(v: &DVector<f64>, count: usize, n: usize) -> Stack {
    (0..count)
        .map(|c| Array2::from_shape_fn((n, n), |(i, j)| v[c * n * n + i * n + j]))
        .collect()
}

/// Dense `H` assembled column by column from unit impulses.
pub fn dense_h(bank: &PsfBank) -> DMatrix<f64> {
    let (n, p, k) = (bank.size(), bank.bands(), bank.frames());
    let mut h = DMatrix::zeros(k * n * n, p * n * n);
    for col in 0..p * n * n {
        let mut e = vec![Array2::zeros((n, n)); p];
        e[col / (n * n)][((col % (n * n)) / n, col % n)] = 1.0;
        let y = apply_forward(bank, &cube(e)).unwrap();
        h.set_column(col, &flatten(&y));
    }
    h
}

pub fn dot(a: &[Array2<f64>], b: &[Array2<f64>]) -> f64 {
    a.iter()
        .zip(b)
        .flat_map(|(x, y)| x.iter().zip(y.iter()))
        .map(|(p, q)| p * q)
        .sum()
}

pub fn norm(a: &[Array2<f64>]) -> f64 {
    dot(a, a).sqrt()
}

pub fn rel_err(a: &[Array2<f64>], b: &[Array2<f64>]) -> f64 {
    let scale = norm(b).max(1e-300);
    let diff: f64 = a
        .iter()
        .zip(b)
        .flat_map(|(x, y)| x.iter().zip(y.iter()))
        .map(|(p, q)| (p - q) * (p - q))
        .sum();
    diff.sqrt() / scale
}
