//! Scenario configuration: one JSON document describing the lens, the
//! acquisition, the scene, the solver and the experiment.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use sieve_core::analysis::{ReconMethod, SettingCase};
use sieve_core::cube_io::PointSource;
use sieve_core::forward::{default_reference_band, scenario_geometries, NoiseSpec, PsfModel, Setting};
use sieve_core::optics::{euv_sieve, AcquisitionGeometry, DiffractiveLensSpec, EUV_LINES_M};

use crate::units;

/// File name of the snapshot a command writes into its output directory.
pub fn snapshot_name(command: &str) -> String {
    format!("resolved_{command}.json")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioConfig {
    pub lens: DiffractiveLensSpec,
    pub setting: Setting,
    /// FD detector plane; defaults to the middle band.
    pub reference_band: Option<usize>,
    /// Explicit frames; overrides `lens`, `setting` and `reference_band`.
    pub geometry: Option<Vec<AcquisitionGeometry>>,
    pub wavelengths_m: Vec<f64>,
    pub grid_size: usize,
    pub pixel_pitch_m: f64,
    pub psf_model: PsfModel,
    pub noise: NoiseConfig,
    pub recon: ReconMethod,
    pub scene: SceneConfig,
    pub inputs: Inputs,
    pub experiment: Option<Selector>,
    pub analysis: AnalysisConfig,
    /// Not recorded in the snapshot: the snapshot lives in the output directory.
    #[serde(skip_serializing)]
    pub out_dir: Option<PathBuf>,
    pub seed: u64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            lens: euv_sieve(),
            setting: Setting::Md,
            reference_band: None,
            geometry: None,
            wavelengths_m: EUV_LINES_M[1..].to_vec(),
            grid_size: 64,
            pixel_pitch_m: 2.5e-6,
            psf_model: PsfModel::Approx,
            noise: NoiseConfig::default(),
            recon: ReconMethod::default(),
            scene: SceneConfig::default(),
            inputs: Inputs::default(),
            experiment: None,
            analysis: AnalysisConfig::default(),
            out_dir: None,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseConfig {
    /// `None` simulates noiseless frames.
    pub snr_db: Option<f64>,
    pub per_frame: bool,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self {
            snr_db: Some(25.0),
            per_frame: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SceneConfig {
    /// Smooth phantom; `seed` defaults to the run seed, `keys` to the line
    /// index of each band.
    Phantom {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        seed: Option<u64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        keys: Option<Vec<u64>>,
    },
    /// Explicit point sources on the detector pitch unless `pitch_m` is given.
    Points {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        pitch_m: Option<f64>,
        points: Vec<PointSource>,
    },
    /// Two, four and sixteen points in the first three bands.
    Resolution {
        spacing_m: f64,
    },
    File {
        path: PathBuf,
    },
}

impl Default for SceneConfig {
    fn default() -> Self {
        SceneConfig::Phantom { seed: None, keys: None }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Inputs {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub measurements: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub truth: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub estimate: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Selector {
    Conditioning,
    Resolution,
    Misplacement,
    Settings,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AnalysisConfig {
    pub conditioning: ConditioningConfig,
    pub resolution: ResolutionConfig,
    pub misplacement: MisplacementConfig,
    pub settings: SettingsConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ConditioningConfig {
    /// Empty selects every band.
    pub bands: Vec<usize>,
    pub counts: Vec<usize>,
    pub spacings_m: Vec<f64>,
}

impl Default for ConditioningConfig {
    fn default() -> Self {
        Self {
            bands: Vec::new(),
            counts: vec![2, 4, 16],
            spacings_m: (1..=20).map(|i| i as f64 * 1e-6).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ResolutionConfig {
    pub spacing_m: f64,
    pub snr_db: Vec<f64>,
}

impl Default for ResolutionConfig {
    fn default() -> Self {
        Self {
            spacing_m: 5e-6,
            snr_db: vec![25.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MisplacementConfig {
    pub dmax_m: Vec<f64>,
    pub trials: usize,
    pub snr_db: f64,
}

impl Default for MisplacementConfig {
    fn default() -> Self {
        Self {
            dmax_m: vec![0.0, 1e-3, 2e-3, 3e-3],
            trials: 20,
            snr_db: 25.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SettingsConfig {
    pub cases: Vec<SettingCase>,
    pub snr_db: Vec<f64>,
    pub phantom_seeds: Vec<u64>,
}

impl Default for SettingsConfig {
    fn default() -> Self {
        Self {
            cases: (2..=4)
                .map(|bands| SettingCase {
                    setting: Setting::Md,
                    bands,
                })
                .collect(),
            snr_db: vec![25.0],
            phantom_seeds: (1..=8).collect(),
        }
    }
}

impl ScenarioConfig {
    /// Reads a config file, converting unit-suffixed keys and reporting the
    /// path of the offending field on error.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("cannot read config {}", path.display()))?;
        Self::parse(&text).with_context(|| format!("invalid config {}", path.display()))
    }

    pub fn parse(text: &str) -> Result<Self> {
        let raw: serde_json::Value = serde_json::from_str(text).context("not valid JSON")?;
        let mut value = units::normalize(raw).map_err(anyhow::Error::msg)?;
        let recon = value.as_object_mut().and_then(|m| m.remove("recon"));
        let mut cfg: Self = at_path("", value)?;
        if let Some(r) = recon {
            cfg.recon = parse_recon(r)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Checks that are not expressible in the schema.
    pub fn validate(&self) -> Result<()> {
        if self.grid_size < 2 {
            bail!("field `grid_size`: must be at least 2, got {}", self.grid_size);
        }
        if !(self.pixel_pitch_m.is_finite() && self.pixel_pitch_m > 0.0) {
            bail!("field `pixel_pitch_m`: must be positive, got {}", self.pixel_pitch_m);
        }
        if self.wavelengths_m.is_empty() {
            bail!("field `wavelengths_m`: at least one band is required");
        }
        if let Some(i) = self.wavelengths_m.iter().position(|w| !(w.is_finite() && *w > 0.0)) {
            bail!("field `wavelengths_m[{i}]`: must be positive");
        }
        if let Some(r) = self.reference_band {
            if r >= self.wavelengths_m.len() {
                bail!(
                    "field `reference_band`: {r} is out of range for {} bands",
                    self.wavelengths_m.len()
                );
            }
        }
        if let Some(snr) = self.noise.snr_db {
            if !snr.is_finite() {
                bail!("field `noise.snr_db`: must be finite; use null for noiseless frames");
            }
        }
        if let Some(g) = &self.geometry {
            if g.is_empty() {
                bail!("field `geometry`: at least one frame is required");
            }
        }
        self.lens.validate().context("field `lens`")?;
        match &self.recon {
            ReconMethod::Admm(c) => c.validate().context("field `recon.config`")?,
            ReconMethod::Hqs(c) => c.validate().context("field `recon.config`")?,
        }
        if self.analysis.misplacement.trials == 0 {
            bail!("field `analysis.misplacement.trials`: at least one trial is required");
        }
        Ok(())
    }

    pub fn bands(&self) -> usize {
        self.wavelengths_m.len()
    }

    /// Frames for the configured setting, or the explicit list.
    pub fn geometries(&self) -> Result<Vec<AcquisitionGeometry>> {
        if let Some(g) = &self.geometry {
            return Ok(g.clone());
        }
        let reference = self
            .reference_band
            .unwrap_or_else(|| default_reference_band(self.bands()));
        Ok(scenario_geometries(
            self.setting,
            &self.lens,
            &self.wavelengths_m,
            reference,
        )?)
    }

    pub fn noise_spec(&self) -> NoiseSpec {
        match self.noise.snr_db {
            Some(snr) => NoiseSpec {
                per_frame: self.noise.per_frame,
                ..NoiseSpec::new(snr, self.seed)
            },
            None => NoiseSpec::noiseless(),
        }
    }

    /// Phantom member per band: the emission-line index when the band is one
    /// of the standard lines, the band index otherwise.
    pub fn phantom_keys(&self) -> Vec<u64> {
        self.wavelengths_m
            .iter()
            .enumerate()
            .map(|(p, w)| EUV_LINES_M.iter().position(|l| l == w).unwrap_or(p) as u64)
            .collect()
    }

    pub fn snapshot(&self) -> Result<String> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        Ok(text)
    }
}

fn at_path<T: serde::de::DeserializeOwned>(prefix: &str, value: serde_json::Value) -> Result<T> {
    serde_path_to_error::deserialize(value).map_err(|e| {
        let inner = e.path().to_string();
        let path = match (prefix.is_empty(), inner.as_str()) {
            (true, _) => inner.clone(),
            (false, ".") => prefix.to_string(),
            (false, _) => format!("{prefix}.{inner}"),
        };
        anyhow::anyhow!("field `{path}`: {}", e.into_inner())
    })
}

/// The solver section is tagged by `method`; its `config` is decoded on its
/// own so errors name the offending field.
fn parse_recon(value: serde_json::Value) -> Result<ReconMethod> {
    let serde_json::Value::Object(mut map) = value else {
        bail!("field `recon`: expected an object with `method` and `config`");
    };
    let method = map.remove("method");
    let config = map.remove("config").unwrap_or_else(|| serde_json::json!({}));
    if let Some(k) = map.keys().next() {
        bail!("field `recon.{k}`: unknown field, expected `method` or `config`");
    }
    match method.as_ref().and_then(|m| m.as_str()) {
        Some("admm") => Ok(ReconMethod::Admm(at_path("recon.config", config)?)),
        Some("hqs") => Ok(ReconMethod::Hqs(at_path("recon.config", config)?)),
        _ => bail!("field `recon.method`: expected \"admm\" or \"hqs\""),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_is_the_default() {
        assert_eq!(ScenarioConfig::parse("{}").unwrap(), ScenarioConfig::default());
    }

    #[test]
    fn unknown_keys_name_their_path() {
        let err = ScenarioConfig::parse(r#"{"noise": {"snr": 3}}"#).unwrap_err();
        let msg = format!("{err:#}");
        assert!(msg.contains("noise"), "{msg}");
        assert!(msg.contains("snr"), "{msg}");
    }

    #[test]
    fn nested_type_errors_name_their_path() {
        let err = ScenarioConfig::parse(r#"{"recon": {"method": "admm", "config": {"mu": "big"}}}"#).unwrap_err();
        assert!(format!("{err:#}").contains("recon.config.mu"), "{err:#}");
    }

    #[test]
    fn units_are_converted() {
        let cfg = ScenarioConfig::parse(r#"{"pixel_pitch_um": 1, "wavelengths_nm": [33.42], "lens": {"outer_diameter_mm": 25, "smallest_hole_um": 5}}"#)
            .unwrap();
        assert_eq!(cfg.pixel_pitch_m, 1e-6);
        assert_eq!(cfg.wavelengths_m, vec![33.42e-9]);
        assert_eq!(cfg.lens.outer_diameter_m, 25e-3);
    }

    #[test]
    fn snapshot_round_trips() {
        let mut cfg = ScenarioConfig::parse(
            r#"{"setting": "fd", "scene": {"kind": "resolution", "spacing_um": 5}, "experiment": "settings",
                "recon": {"method": "hqs", "config": {"nu": 0.1}}, "noise": {"snr_db": null}, "seed": 9}"#,
        )
        .unwrap();
        let back = ScenarioConfig::parse(&cfg.snapshot().unwrap()).unwrap();
        cfg.out_dir = None;
        assert_eq!(back, cfg);
    }

    #[test]
    fn recon_config_may_be_omitted() {
        let cfg = ScenarioConfig::parse(r#"{"recon": {"method": "hqs"}}"#).unwrap();
        assert_eq!(cfg.recon, ReconMethod::Hqs(Default::default()));
        assert!(ScenarioConfig::parse(r#"{"recon": {"method": "cg"}}"#).is_err());
        assert!(ScenarioConfig::parse(r#"{"recon": {"method": "admm", "extra": 1}}"#).is_err());
    }

    #[test]
    fn semantic_checks() {
        assert!(ScenarioConfig::parse(r#"{"grid_size": 1}"#).is_err());
        assert!(ScenarioConfig::parse(r#"{"wavelengths_m": []}"#).is_err());
        assert!(ScenarioConfig::parse(r#"{"reference_band": 3}"#).is_err());
        assert!(ScenarioConfig::parse(r#"{"experiment": "bogus"}"#).is_err());
    }

    #[test]
    fn keys_follow_emission_lines() {
        let cfg = ScenarioConfig::default();
        assert_eq!(cfg.phantom_keys(), vec![1, 2, 3]);
    }
}
