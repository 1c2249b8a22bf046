//! `SIFTCUBE1` binary container.
//!
//! ```text
//! offset  size     field
//! 0       9        magic "SIFTCUBE1"
//! 9       1        role (0 cube, 1 measurements, 2 psf bank)
//! 10      4        plane count P (u32 LE)
//! 14      4        plane edge N (u32 LE)
//! 18      8        pixel pitch in metres (f64 LE)
//! 26      8P       per-plane label (f64 LE): wavelength for cubes and PSF
//!                  banks, measurement distance for measurement frames
//! 26+8P   8PN²     samples (f64 LE), plane-major then row-major
//! ```

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use ndarray::Array2;

use super::{check_square_stack, MeasurementSet, MeasurementSidecar, SpectralCube, Stack};
use crate::error::{shape, Error, Result};

pub const MAGIC: &[u8; 9] = b"SIFTCUBE1";
const HEADER_FIXED: usize = 26;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    Cube = 0,
    Measurements = 1,
    PsfBank = 2,
}

impl Role {
    fn from_byte(b: u8) -> Option<Self> {
        match b {
            0 => Some(Role::Cube),
            1 => Some(Role::Measurements),
            2 => Some(Role::PsfBank),
            _ => None,
        }
    }
}

/// Container contents before interpretation by role.
#[derive(Debug, Clone, PartialEq)]
pub struct RawCube {
    pub role: Role,
    pub pixel_pitch_m: f64,
    pub labels: Vec<f64>,
    pub planes: Stack,
}

pub fn write_raw(raw: &RawCube, path: impl AsRef<Path>) -> Result<()> {
    check_square_stack(&raw.planes)?;
    if raw.labels.len() != raw.planes.len() {
        return shape(format!("{} labels for {} planes", raw.labels.len(), raw.planes.len()));
    }
    let n = raw.planes[0].nrows();
    let mut buf = Vec::with_capacity(HEADER_FIXED + 8 * raw.labels.len() * (1 + n * n));
    buf.extend_from_slice(MAGIC);
    buf.push(raw.role as u8);
    buf.extend_from_slice(&(raw.planes.len() as u32).to_le_bytes());
    buf.extend_from_slice(&(n as u32).to_le_bytes());
    buf.extend_from_slice(&raw.pixel_pitch_m.to_le_bytes());
    for l in &raw.labels {
        buf.extend_from_slice(&l.to_le_bytes());
    }
    for plane in &raw.planes {
        for v in plane.iter() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    let mut f = fs::File::create(path)?;
    f.write_all(&buf)?;
    Ok(())
}

pub fn read_raw(path: impl AsRef<Path>) -> Result<RawCube> {
    let bytes = fs::read(path)?;
    parse(&bytes)
}

fn fmt_err<T>(offset: usize, message: impl Into<String>) -> Result<T> {
    Err(Error::Format {
        offset: offset as u64,
        message: message.into(),
    })
}

fn parse(bytes: &[u8]) -> Result<RawCube> {
    if bytes.len() < MAGIC.len() || &bytes[..MAGIC.len()] != MAGIC {
        return fmt_err(0, "bad magic, expected SIFTCUBE1");
    }
    if bytes.len() < HEADER_FIXED {
        return fmt_err(bytes.len(), "truncated header");
    }
    let Some(role) = Role::from_byte(bytes[9]) else {
        return fmt_err(9, format!("unknown role tag {}", bytes[9]));
    };
    let planes = u32::from_le_bytes(bytes[10..14].try_into().unwrap()) as usize;
    let n = u32::from_le_bytes(bytes[14..18].try_into().unwrap()) as usize;
    let pitch = f64::from_le_bytes(bytes[18..26].try_into().unwrap());
    if planes == 0 {
        return fmt_err(10, "plane count is zero");
    }
    if n == 0 {
        return fmt_err(14, "plane size is zero");
    }
    let labels_end = HEADER_FIXED + 8 * planes;
    let total = planes
        .checked_mul(n)
        .and_then(|v| v.checked_mul(n))
        .and_then(|v| v.checked_mul(8))
        .and_then(|v| v.checked_add(labels_end));
    let Some(total) = total else {
        return fmt_err(10, "header sizes overflow");
    };
    if bytes.len() < labels_end {
        return fmt_err(bytes.len(), "truncated label table");
    }
    if bytes.len() < total {
        return fmt_err(bytes.len(), format!("truncated payload, expected {total} bytes"));
    }
    if bytes.len() > total {
        return fmt_err(total, "trailing bytes after payload");
    }
    let read_f64 = |off: usize| f64::from_le_bytes(bytes[off..off + 8].try_into().unwrap());
    let labels = (0..planes).map(|i| read_f64(HEADER_FIXED + 8 * i)).collect();
    let plane_bytes = 8 * n * n;
    let planes = (0..planes)
        .map(|p| {
            let base = labels_end + p * plane_bytes;
            Array2::from_shape_fn((n, n), |(i, j)| read_f64(base + 8 * (i * n + j)))
        })
        .collect();
    Ok(RawCube {
        role,
        pixel_pitch_m: pitch,
        labels,
        planes,
    })
}

pub fn write_cube(cube: &SpectralCube, path: impl AsRef<Path>) -> Result<()> {
    cube.validate()?;
    write_raw(
        &RawCube {
            role: Role::Cube,
            pixel_pitch_m: cube.pixel_pitch_m,
            labels: cube.wavelengths_m.clone(),
            planes: cube.bands.clone(),
        },
        path,
    )
}

pub fn read_cube(path: impl AsRef<Path>) -> Result<SpectralCube> {
    let raw = read_raw(path)?;
    if raw.role != Role::Cube {
        return fmt_err(9, format!("expected a cube, found role {:?}", raw.role));
    }
    SpectralCube::new(raw.planes, raw.labels, raw.pixel_pitch_m)
}

/// Path of the JSON sidecar for a measurement container.
pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

/// Writes the frames and a `<path>.json` sidecar.
pub fn write_measurements(set: &MeasurementSet, path: impl AsRef<Path>) -> Result<()> {
    set.validate()?;
    let path = path.as_ref();
    write_raw(
        &RawCube {
            role: Role::Measurements,
            pixel_pitch_m: set.pixel_pitch_m,
            labels: set.geometry.iter().map(|g| g.measurement_distance_m).collect(),
            planes: set.frames.clone(),
        },
        path,
    )?;
    let side = MeasurementSidecar {
        geometry: set.geometry.clone(),
        noise_sigma: set.noise_sigma.clone(),
        snr_db: set.snr_db.filter(|s| s.is_finite()),
        seed: set.seed,
        pixel_pitch_m: set.pixel_pitch_m,
    };
    let mut text = serde_json::to_string_pretty(&side)?;
    text.push('\n');
    fs::write(sidecar_path(path), text)?;
    Ok(())
}

pub fn read_measurements(path: impl AsRef<Path>) -> Result<MeasurementSet> {
    let path = path.as_ref();
    let raw = read_raw(path)?;
    if raw.role != Role::Measurements {
        return fmt_err(9, format!("expected measurements, found role {:?}", raw.role));
    }
    let side: MeasurementSidecar = serde_json::from_str(&fs::read_to_string(sidecar_path(path))?)?;
    let set = MeasurementSet {
        frames: raw.planes,
        geometry: side.geometry,
        noise_sigma: side.noise_sigma,
        snr_db: side.snr_db,
        seed: side.seed,
        pixel_pitch_m: raw.pixel_pitch_m,
    };
    set.validate()?;
    Ok(set)
}
