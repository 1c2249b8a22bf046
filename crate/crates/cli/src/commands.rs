//! The five subcommands. Each writes a resolved-config snapshot first and
//! only deterministic content afterwards; wall-clock numbers go to
//! `timing.csv` when asked for.

use std::path::Path;
use std::time::Instant;

use anyhow::{anyhow, bail, Context, Result};
use serde::Serialize;
use sieve_core::analysis::{
    conditioning_sweep, misplacement_sensitivity, resolution_experiment, setting_comparison, ReconMethod,
};
use sieve_core::cube_io::{
    cube_quality, make_point_scene, phantom_cube, read_cube, read_measurements, resolution_layout, write_cube,
    write_measurements, write_pgm16, write_raw, PointSceneSpec, QualityReport, RawCube, Role, SpectralCube,
};
use sieve_core::fft::Image;
use sieve_core::forward::{add_noise, apply_forward, build_bank, PsfBank, Setting};
use sieve_core::recon::{admm_reconstruct, feasible, hqs_reconstruct, precompute_sigma_inverse};

use crate::config::{snapshot_name, ScenarioConfig, SceneConfig, Selector};
use crate::output::OutputDir;

/// Phase timings, written only with `--timing`.
#[derive(Debug, Default)]
pub struct Timer {
    enabled: bool,
    rows: Vec<PhaseRow>,
}

#[derive(Debug, Serialize)]
struct PhaseRow {
    phase: String,
    ms: f64,
}

impl Timer {
    pub fn new(enabled: bool) -> Self {
        Self {
            enabled,
            rows: Vec::new(),
        }
    }

    fn time<T>(&mut self, phase: &str, f: impl FnOnce() -> T) -> T {
        let start = Instant::now();
        let out = f();
        self.rows.push(PhaseRow {
            phase: phase.to_string(),
            ms: start.elapsed().as_secs_f64() * 1e3,
        });
        out
    }

    fn finish(&self, out: &OutputDir) -> Result<()> {
        if self.enabled {
            out.write_csv("timing.csv", &self.rows)?;
        }
        Ok(())
    }
}

pub struct Run<'a> {
    /// Subcommand name, used for the snapshot file.
    pub command: &'static str,
    pub cfg: &'a ScenarioConfig,
    pub out: &'a OutputDir,
    pub timer: Timer,
}

impl Run<'_> {
    fn start(&self) -> Result<()> {
        self.out.write_text(&snapshot_name(self.command), &self.cfg.snapshot()?)
    }

    fn bank(&mut self) -> Result<PsfBank> {
        let cfg = self.cfg;
        let geom = cfg.geometries()?;
        self.bank_for(&geom)
    }

    fn bank_for(&mut self, geom: &[sieve_core::optics::AcquisitionGeometry]) -> Result<PsfBank> {
        let cfg = self.cfg;
        let bank = self.timer.time("psf_bank", || {
            build_bank(
                geom,
                &cfg.wavelengths_m,
                cfg.grid_size,
                cfg.pixel_pitch_m,
                &cfg.psf_model,
            )
        })?;
        Ok(bank)
    }

    fn previews(&self, prefix: &str, planes: &[Image]) -> Result<()> {
        for (i, p) in planes.iter().enumerate() {
            write_pgm16(p, self.out.path(&format!("{prefix}{i}.pgm")))?;
        }
        Ok(())
    }
}

// ---------------------------------------------------------------- psf

#[derive(Serialize)]
struct PsfSummary {
    grid_size: usize,
    pixel_pitch_m: f64,
    frames: Vec<FrameSummary>,
}

#[derive(Serialize)]
struct FrameSummary {
    frame: usize,
    lens_label: String,
    outer_diameter_m: f64,
    smallest_hole_m: f64,
    measurement_distance_m: f64,
    bands: Vec<BandSummary>,
}

#[derive(Serialize)]
struct BandSummary {
    band: usize,
    wavelength_m: f64,
    focal_length_m: f64,
    bandwidth_m: f64,
    /// `1/d + 1/d_s − 1/f`, in 1/m.
    defocus_per_m: f64,
    max_pixel_pitch_m: f64,
    support_radius_px: usize,
    fwhm_px: f64,
    peak: f64,
}

pub fn psf(run: &mut Run) -> Result<()> {
    run.start()?;
    let bank = run.bank()?;
    let mut frames = Vec::new();
    let mut planes = Vec::new();
    let mut labels = Vec::new();
    for (k, g) in bank.geometry.iter().enumerate() {
        let mut bands = Vec::new();
        for (p, &w) in bank.wavelengths_m.iter().enumerate() {
            let grid = &bank.psfs[k][p];
            bands.push(BandSummary {
                band: p,
                wavelength_m: w,
                focal_length_m: g.lens.focal_length(w)?,
                bandwidth_m: g.lens.spectral_bandwidth(w)?,
                defocus_per_m: g.defocus(w)?,
                max_pixel_pitch_m: g.max_pixel_pitch(w),
                support_radius_px: grid.support_radius_px,
                fwhm_px: grid.fwhm_px(),
                peak: grid.peak(),
            });
            planes.push(grid.samples.clone());
            labels.push(w);
            write_pgm16(&grid.samples, run.out.path(&format!("psf_k{k}_p{p}.pgm")))?;
        }
        frames.push(FrameSummary {
            frame: k,
            lens_label: g.lens.label.clone(),
            outer_diameter_m: g.lens.outer_diameter_m,
            smallest_hole_m: g.lens.smallest_hole_m,
            measurement_distance_m: g.measurement_distance_m,
            bands,
        });
    }
    write_raw(
        &RawCube {
            role: Role::PsfBank,
            pixel_pitch_m: bank.pixel_pitch_m,
            labels,
            planes,
        },
        run.out.path("psf_bank.cube"),
    )?;
    run.out.write_json(
        "psf_summary.json",
        &PsfSummary {
            grid_size: bank.size(),
            pixel_pitch_m: bank.pixel_pitch_m,
            frames,
        },
    )?;
    run.timer.finish(run.out)
}

// ---------------------------------------------------------------- simulate

/// The scene selected by the config, checked against its grid and bands.
pub fn render_scene(cfg: &ScenarioConfig) -> Result<SpectralCube> {
    let (n, pitch, wl) = (cfg.grid_size, cfg.pixel_pitch_m, &cfg.wavelengths_m);
    let cube = match &cfg.scene {
        SceneConfig::Phantom { seed, keys } => {
            let keys = keys.clone().unwrap_or_else(|| cfg.phantom_keys());
            if keys.len() != wl.len() {
                bail!("field `scene.keys`: {} keys for {} bands", keys.len(), wl.len());
            }
            phantom_cube(n, seed.unwrap_or(cfg.seed), &keys, wl, pitch)?
        }
        SceneConfig::Points { pitch_m, points } => {
            let spec = PointSceneSpec {
                pitch_m: pitch_m.unwrap_or(pitch),
                points: points.clone(),
            };
            make_point_scene(&spec, wl, n)?
        }
        SceneConfig::Resolution { spacing_m } => make_point_scene(&resolution_layout(*spacing_m, pitch, n), wl, n)?,
        SceneConfig::File { path } => {
            let cube = read_cube(path).with_context(|| format!("cannot read cube {}", path.display()))?;
            if cube.size() != n || cube.pixel_pitch_m != pitch || &cube.wavelengths_m != wl {
                bail!(
                    "cube {} is {}x{} at {} m with bands {:?}; the config expects {n}x{n} at {pitch} m with bands {:?}",
                    path.display(),
                    cube.size(),
                    cube.size(),
                    cube.pixel_pitch_m,
                    cube.wavelengths_m,
                    wl
                );
            }
            cube
        }
    };
    Ok(cube)
}

#[derive(Serialize)]
struct SimulateSummary {
    snr_db: Option<f64>,
    seed: Option<u64>,
    frames: Vec<NoiseRow>,
}

#[derive(Serialize)]
struct NoiseRow {
    frame: usize,
    clean_variance: f64,
    noise_sigma: f64,
}

fn population_variance(a: &Image) -> f64 {
    let n = a.len() as f64;
    let mean = a.sum() / n;
    a.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n
}

pub fn simulate(run: &mut Run) -> Result<()> {
    run.start()?;
    let cfg = run.cfg;
    let truth = render_scene(cfg)?;
    let bank = run.bank()?;
    let clean = run.timer.time("forward", || apply_forward(&bank, &truth))?;
    let variances: Vec<f64> = clean.iter().map(population_variance).collect();
    let set = add_noise(clean, &bank.geometry, bank.pixel_pitch_m, &cfg.noise_spec())?;
    write_cube(&truth, run.out.path("truth.cube"))?;
    write_measurements(&set, run.out.path("measurements.cube"))?;
    run.previews("truth_p", &truth.bands)?;
    run.previews("frame_k", &set.frames)?;
    run.out.write_json(
        "simulate_summary.json",
        &SimulateSummary {
            snr_db: set.snr_db,
            seed: set.seed,
            frames: variances
                .iter()
                .zip(&set.noise_sigma)
                .enumerate()
                .map(|(frame, (&clean_variance, &noise_sigma))| NoiseRow {
                    frame,
                    clean_variance,
                    noise_sigma,
                })
                .collect(),
        },
    )?;
    run.timer.finish(run.out)
}

// ---------------------------------------------------------------- reconstruct

#[derive(Serialize)]
struct AdmmTraceCsv {
    iter: usize,
    misfit: f64,
    primal_u: f64,
    primal_v: f64,
    rel_primal: f64,
    rel_dual: f64,
    feasible: bool,
}

#[derive(Serialize)]
struct IterTiming {
    iter: usize,
    elapsed_ms: f64,
}

#[derive(Serialize)]
struct ReconSummary {
    method: &'static str,
    iterations: usize,
    /// ADMM only.
    converged: Option<bool>,
    epsilon: Option<f64>,
    final_misfit: f64,
}

#[derive(Serialize)]
struct MetricRow {
    band: String,
    wavelength_m: Option<f64>,
    psnr_db: f64,
    ssim: Option<f64>,
}

fn metric_rows(cube: &SpectralCube, q: &QualityReport) -> Vec<MetricRow> {
    let mut rows: Vec<MetricRow> = (0..cube.band_count())
        .map(|p| MetricRow {
            band: p.to_string(),
            wavelength_m: Some(cube.wavelengths_m[p]),
            psnr_db: q.band_psnr_db[p],
            ssim: q.band_ssim[p],
        })
        .collect();
    rows.push(MetricRow {
        band: "cube".into(),
        wavelength_m: None,
        psnr_db: q.cube_psnr_db,
        ssim: Some(q.cube_ssim),
    });
    rows
}

pub fn reconstruct(run: &mut Run) -> Result<()> {
    run.start()?;
    let cfg = run.cfg;
    let path = cfg
        .inputs
        .measurements
        .as_deref()
        .ok_or_else(|| anyhow!("no measurements: pass --measurements or set `inputs.measurements`"))?;
    let y = read_measurements(path).with_context(|| format!("cannot read measurements {}", path.display()))?;
    if y.size() != cfg.grid_size || y.pixel_pitch_m != cfg.pixel_pitch_m {
        bail!(
            "measurements are {}x{} at {} m; the config expects {}x{} at {} m",
            y.size(),
            y.size(),
            y.pixel_pitch_m,
            cfg.grid_size,
            cfg.grid_size,
            cfg.pixel_pitch_m
        );
    }
    let truth = match &cfg.inputs.truth {
        Some(p) => Some(read_cube(p).with_context(|| format!("cannot read ground truth {}", p.display()))?),
        None => None,
    };
    let bank = run.bank_for(&y.geometry)?;
    let (cube, estimate, summary) = match &cfg.recon {
        ReconMethod::Admm(c) => {
            let sigma = run
                .timer
                .time("sigma_inverse", || precompute_sigma_inverse(&bank, 1.0))?;
            let r = run.timer.time("solve", || admm_reconstruct(&y, &bank, &sigma, c))?;
            let rows: Vec<AdmmTraceCsv> = r
                .trace
                .iter()
                .map(|t| AdmmTraceCsv {
                    iter: t.iter,
                    misfit: t.misfit,
                    primal_u: t.primal_u,
                    primal_v: t.primal_v,
                    rel_primal: t.rel_primal,
                    rel_dual: t.rel_dual,
                    feasible: feasible(t.misfit, r.epsilon),
                })
                .collect();
            run.out.write_csv("trace.csv", &rows)?;
            if run.timer.enabled {
                let t: Vec<IterTiming> = r
                    .trace
                    .iter()
                    .map(|t| IterTiming {
                        iter: t.iter,
                        elapsed_ms: t.elapsed_ms,
                    })
                    .collect();
                run.out.write_csv("timing_iterations.csv", &t)?;
            }
            if !r.converged {
                log::warn!("ADMM stopped at the iteration cap before meeting its tolerances");
            }
            let summary = ReconSummary {
                method: "admm",
                iterations: r.trace.len(),
                converged: Some(r.converged),
                epsilon: Some(r.epsilon),
                final_misfit: r.trace.last().map_or(f64::NAN, |t| t.misfit),
            };
            (r.cube, r.estimate, summary)
        }
        ReconMethod::Hqs(c) => {
            let sigma = run
                .timer
                .time("sigma_inverse", || precompute_sigma_inverse(&bank, c.nu))?;
            let r = run.timer.time("solve", || hqs_reconstruct(&y, &bank, &sigma, c))?;
            run.out.write_csv("trace.csv", &r.trace)?;
            let summary = ReconSummary {
                method: "hqs",
                iterations: r.trace.len(),
                converged: None,
                epsilon: None,
                final_misfit: r.trace.last().map_or(f64::NAN, |t| t.misfit),
            };
            (r.cube, r.estimate, summary)
        }
    };
    write_cube(&cube, run.out.path("reconstruction.cube"))?;
    write_raw(
        &RawCube {
            role: Role::Cube,
            pixel_pitch_m: cube.pixel_pitch_m,
            labels: cube.wavelengths_m.clone(),
            planes: estimate,
        },
        run.out.path("estimate.cube"),
    )?;
    run.previews("recon_p", &cube.bands)?;
    run.out.write_json("recon_summary.json", &summary)?;
    if let Some(truth) = truth {
        let q = cube_quality(&truth, &cube)?;
        run.out.write_csv("metrics.csv", &metric_rows(&cube, &q))?;
    }
    run.timer.finish(run.out)
}

// ---------------------------------------------------------------- analyze

#[derive(Serialize)]
struct KneeRow {
    band: usize,
    count: usize,
    from_m: f64,
    to_m: f64,
    log_drop: f64,
}

#[derive(Serialize)]
struct PairRow {
    snr_db: f64,
    band: usize,
    a_row_px: f64,
    a_col_px: f64,
    b_row_px: f64,
    b_col_px: f64,
    peak_a: f64,
    peak_b: f64,
    midpoint: f64,
    resolved: bool,
}

#[derive(Serialize)]
struct ResolutionRow {
    snr_db: f64,
    spacing_m: f64,
    pairs: usize,
    resolved_pairs: usize,
    all_resolved: bool,
    converged: Option<bool>,
}

pub fn analyze(run: &mut Run, selector: Selector) -> Result<()> {
    run.start()?;
    let cfg = run.cfg;
    let a = &cfg.analysis;
    match selector {
        Selector::Conditioning => {
            let bank = run.bank()?;
            let bands: Vec<usize> = if a.conditioning.bands.is_empty() {
                (0..bank.bands()).collect()
            } else {
                a.conditioning.bands.clone()
            };
            let c = &a.conditioning;
            let report = run
                .timer
                .time("sweep", || conditioning_sweep(&bank, &bands, &c.counts, &c.spacings_m))?;
            run.out.write_csv("conditioning.csv", &report.rows)?;
            let mut knees = Vec::new();
            for &band in &bands {
                for &count in &c.counts {
                    if let Some(k) = report.knee(band, count) {
                        knees.push(KneeRow {
                            band,
                            count,
                            from_m: k.from_m,
                            to_m: k.to_m,
                            log_drop: k.log_drop,
                        });
                    }
                }
            }
            run.out.write_csv("conditioning_knees.csv", &knees)?;
        }
        Selector::Resolution => {
            let bank = run.bank()?;
            let layout = resolution_layout(a.resolution.spacing_m, cfg.pixel_pitch_m, cfg.grid_size);
            let mut pairs = Vec::new();
            let mut summary = Vec::new();
            for &snr in &a.resolution.snr_db {
                let noise = sieve_core::forward::NoiseSpec {
                    per_frame: cfg.noise.per_frame,
                    ..sieve_core::forward::NoiseSpec::new(snr, cfg.seed)
                };
                let out = run.timer.time("experiment", || {
                    resolution_experiment(&bank, &layout, &noise, &cfg.recon)
                })?;
                for p in &out.pairs {
                    pairs.push(PairRow {
                        snr_db: snr,
                        band: p.band,
                        a_row_px: p.a.0,
                        a_col_px: p.a.1,
                        b_row_px: p.b.0,
                        b_col_px: p.b.1,
                        peak_a: p.peak_a,
                        peak_b: p.peak_b,
                        midpoint: p.midpoint,
                        resolved: p.resolved,
                    });
                }
                summary.push(ResolutionRow {
                    snr_db: snr,
                    spacing_m: a.resolution.spacing_m,
                    pairs: out.pairs.len(),
                    resolved_pairs: out.pairs.iter().filter(|p| p.resolved).count(),
                    all_resolved: out.all_resolved(),
                    converged: out.converged,
                });
                run.previews(&format!("resolution_snr{snr}_p"), &out.cube.bands)?;
            }
            run.out.write_csv("resolution_pairs.csv", &pairs)?;
            run.out.write_csv("resolution.csv", &summary)?;
        }
        Selector::Misplacement => {
            if cfg.geometry.is_some() || cfg.setting != Setting::Md {
                bail!("the misplacement study needs the moving-detector setting without explicit geometry");
            }
            let scene = render_scene(cfg)?;
            let bank = run.bank()?;
            let m = &a.misplacement;
            let report = run.timer.time("study", || {
                misplacement_sensitivity(
                    &bank,
                    &cfg.psf_model,
                    &scene,
                    m.snr_db,
                    &m.dmax_m,
                    m.trials,
                    cfg.seed,
                    &cfg.recon,
                )
            })?;
            run.out.write_csv("misplacement.csv", &report.rows)?;
        }
        Selector::Settings => {
            let s = &a.settings;
            let rows = run.timer.time("study", || {
                setting_comparison(
                    &cfg.lens,
                    cfg.grid_size,
                    cfg.pixel_pitch_m,
                    &cfg.psf_model,
                    &s.cases,
                    &s.snr_db,
                    &s.phantom_seeds,
                    cfg.seed,
                    &cfg.recon,
                )
            })?;
            run.out.write_csv("settings.csv", &rows)?;
        }
    }
    run.timer.finish(run.out)
}

// ---------------------------------------------------------------- metrics

fn read_named(path: Option<&Path>, what: &str, flag: &str, field: &str) -> Result<SpectralCube> {
    let path = path.ok_or_else(|| anyhow!("no {what} cube: pass {flag} or set `{field}`"))?;
    read_cube(path).with_context(|| format!("cannot read {what} cube {}", path.display()))
}

pub fn metrics(run: &mut Run) -> Result<()> {
    run.start()?;
    let inputs = &run.cfg.inputs;
    let truth = read_named(inputs.truth.as_deref(), "reference", "--reference", "inputs.truth")?;
    let est = read_named(inputs.estimate.as_deref(), "estimate", "--estimate", "inputs.estimate")?;
    let q = cube_quality(&truth, &est)?;
    run.out.write_csv("metrics.csv", &metric_rows(&est, &q))?;
    run.out.write_json("metrics.json", &q)?;
    println!("PSNR {:.4} dB  SSIM {:.4}", q.cube_psnr_db, q.cube_ssim);
    run.timer.finish(run.out)
}
