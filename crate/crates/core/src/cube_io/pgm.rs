use std::fs;
use std::path::Path;

use ndarray::Array2;

use crate::error::Result;

/// Writes a 16-bit binary PGM with a per-image min-max stretch.
///
/// Previews are for looking at; metrics never read them back.
pub fn write_pgm16(image: &Array2<f64>, path: impl AsRef<Path>) -> Result<()> {
    let (rows, cols) = image.dim();
    let lo = image.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = image.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = hi - lo;
    let mut buf = format!("P5\n{cols} {rows}\n65535\n").into_bytes();
    buf.reserve(2 * rows * cols);
    for &v in image.iter() {
        let level = if span > 0.0 && span.is_finite() {
            (((v - lo) / span) * 65535.0).round().clamp(0.0, 65535.0) as u16
        } else {
            0
        };
        // PGM stores 16-bit samples most significant byte first
        buf.extend_from_slice(&level.to_be_bytes());
    }
    fs::write(path, buf)?;
    Ok(())
}
