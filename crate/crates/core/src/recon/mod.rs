//! Reconstruction: constrained ADMM with an analytical prior and
//! half-quadratic splitting with a pluggable denoiser.

mod admm;
mod haar;
mod hqs;
mod prox;
mod sigma;

pub use admm::{admm_reconstruct, feasible, x_update, AdmmResult, Prior, ReconConfig, TraceRow, FEASIBILITY_SLACK};
pub use haar::{haar_forward, haar_inverse, usable_levels};
pub use hqs::{
    data_consistency_update, hqs_reconstruct, initial_estimate, DenoiserHandle, HqsConfig, HqsResult, HqsTraceRow,
};
pub use prox::{
    divergence, gradient, project_epsilon_ball, prox_soft, prox_tv, soft, total_variation, tv_objective, TvDual,
};
pub use sigma::{precompute_sigma_inverse, SigmaInverse};

use ndarray::Array2;

use crate::cube_io::MeasurementSet;
use crate::error::{shape, Result};
use crate::forward::{adjoint_planes, forward_planes, PsfBank};

pub(crate) fn check_measurements(bank: &PsfBank, y: &MeasurementSet) -> Result<()> {
    y.validate()?;
    if y.frame_count() != bank.frames() || y.size() != bank.size() {
        return shape(format!(
            "{} frames of {}x{} for a bank of {} frames at {}x{}",
            y.frame_count(),
            y.size(),
            y.size(),
            bank.frames(),
            bank.size(),
            bank.size()
        ));
    }
    Ok(())
}

pub(crate) fn sq_norm(stack: &[Array2<f64>]) -> f64 {
    stack.iter().flat_map(|a| a.iter()).map(|v| v * v).sum()
}

pub(crate) fn sq_dist(a: &[Array2<f64>], b: &[Array2<f64>]) -> f64 {
    a.iter()
        .zip(b)
        .flat_map(|(x, y)| x.iter().zip(y.iter()))
        .map(|(p, q)| (p - q) * (p - q))
        .sum()
}

pub(crate) fn all_finite(stack: &[Array2<f64>]) -> bool {
    stack.iter().all(|a| a.iter().all(|v| v.is_finite()))
}

/// `α·Hᴴy` with `α` minimising `‖y − α·H Hᴴ y‖`.
pub(crate) fn scaled_backprojection(bank: &PsfBank, y: &[Array2<f64>]) -> Vec<Array2<f64>> {
    let mut x = adjoint_planes(bank, y);
    let hx = forward_planes(bank, &x);
    let num: f64 = y
        .iter()
        .zip(&hx)
        .flat_map(|(a, b)| a.iter().zip(b.iter()))
        .map(|(a, b)| a * b)
        .sum();
    let den = sq_norm(&hx);
    let alpha = if den > 0.0 { num / den } else { 0.0 };
    for b in &mut x {
        b.mapv_inplace(|v| alpha * v);
    }
    x
}
