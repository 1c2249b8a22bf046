//! Resolution analysis and comparison experiments built on the forward model
//! and the solvers.

mod conditioning;
mod resolution;
mod sensitivity;
mod settings;

pub use conditioning::{
    condition_number_of_columns, conditioning_sweep, impulse_column, submatrix_conditioning, ConditioningReport,
    ConditioningRow, Knee, Voxel, MAX_COLUMNS,
};
pub use resolution::{judge_pairs, resolution_experiment, PairResult, ResolutionOutcome, DIP_RATIO};
pub use sensitivity::{misplacement_sensitivity, perturbed_geometry, SensitivityReport, SensitivityRow};
pub use settings::{setting_comparison, wavelengths_for, SettingCase, SettingRow};

use serde::{Deserialize, Serialize};

use crate::cube_io::{MeasurementSet, SpectralCube, Stack};
use crate::error::Result;
use crate::forward::PsfBank;
use crate::recon::{admm_reconstruct, hqs_reconstruct, precompute_sigma_inverse, HqsConfig, ReconConfig, SigmaInverse};

/// Solver selection for experiments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", content = "config", rename_all = "snake_case")]
pub enum ReconMethod {
    Admm(ReconConfig),
    Hqs(HqsConfig),
}

impl Default for ReconMethod {
    fn default() -> Self {
        ReconMethod::Admm(ReconConfig::default())
    }
}

/// Output common to both solvers.
#[derive(Debug, Clone)]
pub struct Reconstruction {
    pub cube: SpectralCube,
    pub estimate: Stack,
    /// ADMM convergence flag; `None` for fixed-iteration HQS.
    pub converged: Option<bool>,
}

/// A method bound to the inverse it needs, for repeated solves against one bank.
#[derive(Debug, Clone)]
pub struct PreparedMethod {
    method: ReconMethod,
    sigma: SigmaInverse,
}

impl PreparedMethod {
    pub fn new(bank: &PsfBank, method: &ReconMethod) -> Result<Self> {
        let shift = match method {
            ReconMethod::Admm(cfg) => {
                cfg.validate()?;
                1.0
            }
            ReconMethod::Hqs(cfg) => {
                cfg.validate()?;
                cfg.nu
            }
        };
        Ok(Self {
            method: method.clone(),
            sigma: precompute_sigma_inverse(bank, shift)?,
        })
    }

    /// `bank` must be the bank passed to [`PreparedMethod::new`].
    pub fn solve(&self, y: &MeasurementSet, bank: &PsfBank) -> Result<Reconstruction> {
        match &self.method {
            ReconMethod::Admm(cfg) => {
                let r = admm_reconstruct(y, bank, &self.sigma, cfg)?;
                Ok(Reconstruction {
                    cube: r.cube,
                    estimate: r.estimate,
                    converged: Some(r.converged),
                })
            }
            ReconMethod::Hqs(cfg) => {
                let r = hqs_reconstruct(y, bank, &self.sigma, cfg)?;
                Ok(Reconstruction {
                    cube: r.cube,
                    estimate: r.estimate,
                    converged: None,
                })
            }
        }
    }
}

pub fn reconstruct(y: &MeasurementSet, bank: &PsfBank, method: &ReconMethod) -> Result<Reconstruction> {
    PreparedMethod::new(bank, method)?.solve(y, bank)
}
