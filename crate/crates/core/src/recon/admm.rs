//! Constrained ADMM: minimise `Φ(Px)` subject to `‖y − Hx‖₂ ≤ ε`.

use std::time::Instant;

use ndarray::{Array2, Zip};
use serde::{Deserialize, Serialize};

use super::haar::{haar_forward, haar_inverse, usable_levels};
use super::prox::{project_epsilon_ball, prox_soft, prox_tv, TvDual};
use super::sigma::SigmaInverse;
use super::{all_finite, check_measurements, scaled_backprojection, sq_dist, sq_norm};
use crate::cube_io::{MeasurementSet, SpectralCube, Stack};
use crate::error::{domain, shape, Error, Result};
use crate::fft::Image;
use crate::forward::PsfBank;
use crate::par;

/// Regulariser `Φ` and its transform `P`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Prior {
    /// Isotropic TV per band, `P = I`.
    TvIsotropic,
    /// `‖x‖₁`, `P = I`.
    L1Identity,
    /// `‖Wx‖₁` with `W` the orthonormal Haar transform per band.
    L1Haar { levels: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReconConfig {
    pub prior: Prior,
    /// Ball radius; `None` uses `epsilon_scale · sqrt(Σ_k σ_k² N²)`.
    pub epsilon: Option<f64>,
    pub epsilon_scale: f64,
    pub mu: f64,
    pub max_iters: usize,
    pub tol_primal: f64,
    pub tol_dual: f64,
    pub chambolle_iters: usize,
    pub chambolle_step: f64,
}

impl Default for ReconConfig {
    fn default() -> Self {
        Self {
            prior: Prior::TvIsotropic,
            epsilon: None,
            epsilon_scale: 1.0,
            mu: 1.0,
            max_iters: 200,
            tol_primal: 1e-4,
            tol_dual: 1e-4,
            chambolle_iters: 20,
            chambolle_step: 0.249,
        }
    }
}

/// Relative slack allowed on the data constraint when declaring success.
pub const FEASIBILITY_SLACK: f64 = 1e-3;
/// Absolute floor on the constraint check, for `ε = 0`.
const FEASIBILITY_FLOOR: f64 = 1e-9;

impl ReconConfig {
    pub fn validate(&self) -> Result<()> {
        if let Some(e) = self.epsilon {
            if !(e >= 0.0 && e.is_finite()) {
                return domain(format!("epsilon must be nonnegative, got {e}"));
            }
        }
        if !(self.epsilon_scale >= 0.0 && self.epsilon_scale.is_finite()) {
            return domain("epsilon_scale must be nonnegative");
        }
        if !(self.mu > 0.0 && self.mu.is_finite()) {
            return domain(format!("mu must be positive, got {}", self.mu));
        }
        if self.max_iters == 0 || self.chambolle_iters == 0 {
            return domain("iteration caps must be at least 1");
        }
        if !(self.tol_primal > 0.0 && self.tol_dual > 0.0) {
            return domain("tolerances must be positive");
        }
        if !(self.chambolle_step > 0.0 && self.chambolle_step < 0.25) {
            return domain(format!(
                "Chambolle step must lie in (0, 1/4), got {}",
                self.chambolle_step
            ));
        }
        Ok(())
    }

    /// Radius used for measurements `y`.
    pub fn resolve_epsilon(&self, y: &MeasurementSet) -> f64 {
        self.epsilon.unwrap_or_else(|| {
            let n2 = (y.size() * y.size()) as f64;
            self.epsilon_scale * (y.noise_sigma.iter().map(|s| s * s * n2).sum::<f64>()).sqrt()
        })
    }
}

/// One ADMM iteration's diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceRow {
    pub iter: usize,
    /// `‖y − Hx‖₂`.
    pub misfit: f64,
    /// `‖Px − u‖₂`.
    pub primal_u: f64,
    /// `‖Hx − v‖₂`.
    pub primal_v: f64,
    pub rel_primal: f64,
    pub rel_dual: f64,
    #[serde(skip)]
    pub elapsed_ms: f64,
}

#[derive(Debug, Clone)]
pub struct AdmmResult {
    /// Final iterate clamped at zero.
    pub cube: SpectralCube,
    /// Final iterate before clamping.
    pub estimate: Stack,
    pub trace: Vec<TraceRow>,
    /// Residual tolerances met and `‖y − Hx‖ ≤ ε(1 + 1e-3)`.
    pub converged: bool,
    pub epsilon: f64,
}

fn apply_p(prior: Prior, x: &[Image]) -> Result<Stack> {
    match prior {
        Prior::L1Haar { levels } => x.iter().map(|b| haar_forward(b, levels)).collect(),
        _ => Ok(x.to_vec()),
    }
}

fn apply_ph(prior: Prior, c: &[Image]) -> Result<Stack> {
    match prior {
        Prior::L1Haar { levels } => c.iter().map(|b| haar_inverse(b, levels)).collect(),
        _ => Ok(c.to_vec()),
    }
}

/// `F̃ᴴ (I + ΛᴴΛ)⁻¹ (F̃ a + Λᴴ F̄ b)` with `a = Pᴴ(u + d)` and `b = v + f`.
pub fn x_update(sigma: &SigmaInverse, bank: &PsfBank, a: &[Image], b: &[Image]) -> Result<Stack> {
    check_sizes(bank, a, b)?;
    let spectra = x_update_spectra(sigma, bank, a, b);
    Ok(bank.images_of(spectra))
}

fn check_sizes(bank: &PsfBank, a: &[Image], b: &[Image]) -> Result<()> {
    let n = bank.size();
    if a.len() != bank.bands() || b.len() != bank.frames() {
        return shape(format!(
            "{} band planes and {} frame planes for a {}x{} bank",
            a.len(),
            b.len(),
            bank.frames(),
            bank.bands()
        ));
    }
    if a.iter().chain(b).any(|p| p.dim() != (n, n)) {
        return shape(format!("planes must be {n}x{n}"));
    }
    Ok(())
}

fn x_update_spectra(sigma: &SigmaInverse, bank: &PsfBank, a: &[Image], b: &[Image]) -> Vec<crate::fft::Spectrum> {
    let mut rhs = bank.spectra_of(a);
    let back = bank.mix_adjoint(&bank.spectra_of(b));
    for (r, t) in rhs.iter_mut().zip(back) {
        *r += &t;
    }
    sigma.apply(&rhs)
}

fn add(a: &[Image], b: &[Image]) -> Stack {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

fn sub(a: &[Image], b: &[Image]) -> Stack {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

struct BandState {
    z: Image,
    u: Image,
    dual: TvDual,
}

/// Runs the ADMM loop. `sigma` must be `(I + ΛᴴΛ)⁻¹` for `bank`.
pub fn admm_reconstruct(
    y: &MeasurementSet,
    bank: &PsfBank,
    sigma: &SigmaInverse,
    config: &ReconConfig,
) -> Result<AdmmResult> {
    config.validate()?;
    check_measurements(bank, y)?;
    if sigma.bands != bank.bands() || sigma.shift != 1.0 {
        return domain("ADMM needs the unit-shift inverse of the same bank");
    }
    if let Prior::L1Haar { levels } = config.prior {
        if usable_levels(bank.size(), levels) != levels {
            return domain(format!(
                "{levels} Haar levels do not fit a {}x{} grid",
                bank.size(),
                bank.size()
            ));
        }
    }
    let start = Instant::now();
    let eps = config.resolve_epsilon(y);
    let weight = 1.0 / config.mu;
    let n = bank.size();
    let frames = &y.frames;

    let x0 = scaled_backprojection(bank, frames);
    let mut u = apply_p(config.prior, &x0)?;
    let mut v = frames.clone();
    let mut d: Stack = vec![Array2::zeros((n, n)); bank.bands()];
    let mut f: Stack = vec![Array2::zeros((n, n)); bank.frames()];
    let mut duals: Vec<TvDual> = (0..bank.bands()).map(|_| TvDual::zeros(n, n)).collect();

    let mut trace = Vec::new();
    let mut x = x0;
    let mut converged = false;
    for iter in 1..=config.max_iters {
        let a = apply_ph(config.prior, &add(&u, &d))?;
        let b = add(&v, &f);
        let xs = x_update_spectra(sigma, bank, &a, &b);
        let hx = bank.images_of(bank.mix_forward(&xs));
        x = bank.images_of(xs);
        if !all_finite(&x) || !all_finite(&hx) {
            return Err(Error::Diverged { iteration: iter });
        }

        let px = apply_p(config.prior, &x)?;
        let z = sub(&px, &d);
        let mut states: Vec<BandState> = z
            .into_iter()
            .zip(duals.drain(..))
            .map(|(z, dual)| BandState {
                z,
                u: Array2::zeros((0, 0)),
                dual,
            })
            .collect();
        let prior = config.prior;
        par::for_each_mut(&mut states, |_, s| {
            s.u = match prior {
                Prior::TvIsotropic => prox_tv(&s.z, weight, config.chambolle_iters, config.chambolle_step, &mut s.dual),
                Prior::L1Identity | Prior::L1Haar { .. } => prox_soft(&s.z, weight),
            };
        });
        let mut u_new = Vec::with_capacity(states.len());
        for s in states {
            u_new.push(s.u);
            duals.push(s.dual);
        }

        let s_v = sub(&hx, &f);
        let v_new = project_epsilon_ball(&s_v, frames, eps);

        for ((dp, p), un) in d.iter_mut().zip(&px).zip(&u_new) {
            Zip::from(dp).and(p).and(un).for_each(|dv, &pv, &uv| *dv -= pv - uv);
        }
        for ((fk, h), vn) in f.iter_mut().zip(&hx).zip(&v_new) {
            Zip::from(fk).and(h).and(vn).for_each(|fv, &hv, &vv| *fv -= hv - vv);
        }

        let primal_u = sq_dist(&px, &u_new).sqrt();
        let primal_v = sq_dist(&hx, &v_new).sqrt();
        let misfit = sq_dist(frames, &hx).sqrt();
        let change = (sq_dist(&u_new, &u) + sq_dist(&v_new, &v)).sqrt();
        let scale_primal = (sq_norm(&px) + sq_norm(&hx))
            .max(sq_norm(&u_new) + sq_norm(&v_new))
            .sqrt();
        let scale_dual = (sq_norm(&d) + sq_norm(&f)).sqrt();
        let rel_primal = ratio(primal_u.hypot(primal_v), scale_primal);
        let rel_dual = ratio(change, scale_dual);
        u = u_new;
        v = v_new;
        trace.push(TraceRow {
            iter,
            misfit,
            primal_u,
            primal_v,
            rel_primal,
            rel_dual,
            elapsed_ms: start.elapsed().as_secs_f64() * 1e3,
        });
        if rel_primal < config.tol_primal && rel_dual < config.tol_dual && feasible(misfit, eps) {
            converged = true;
            break;
        }
    }

    let mut cube = SpectralCube::new(x.clone(), bank.wavelengths_m.clone(), bank.pixel_pitch_m)?;
    cube.clamp_nonnegative();
    Ok(AdmmResult {
        cube,
        estimate: x,
        trace,
        converged,
        epsilon: eps,
    })
}

fn ratio(num: f64, den: f64) -> f64 {
    if num == 0.0 {
        0.0
    } else if den > 0.0 {
        num / den
    } else {
        f64::INFINITY
    }
}

/// `‖y − Hx‖ ≤ ε(1 + 1e-3)` up to a tiny absolute floor.
pub fn feasible(misfit: f64, epsilon: f64) -> bool {
    misfit <= epsilon * (1.0 + FEASIBILITY_SLACK) + FEASIBILITY_FLOOR
}
