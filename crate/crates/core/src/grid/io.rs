//! Grayscale image files and a lossless raw format for real-valued grids.
//!
//! Images are 8-bit: reading yields intensities in `[0, 255]`; writing either
//! clamps (`Intensity::Clamp`) or stretches the grid's `[min, max]` onto
//! `[0, 255]` (`Intensity::MinMax`). PGM is binary P5; the format is chosen
//! from the file extension.
//!
//! Raw grids (`.grid`) store exact `f64` values: the magic `GRDF`, rows and
//! cols as little-endian `u64`, then `rows * cols` little-endian `f64`.

use super::ImageGrid;
use crate::error::{Error, Result};
use std::fs;
use std::io::Write;
use std::path::Path;

const RAW_MAGIC: &[u8; 4] = b"GRDF";

/// How real values are mapped to 8-bit intensities on write.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Intensity {
    Clamp,
    MinMax,
}

/// Linear map actually applied when writing: `byte = (v - offset) * scale`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WrittenRange {
    pub min: f64,
    pub max: f64,
    pub offset: f64,
    pub scale: f64,
}

pub fn read_gray(path: impl AsRef<Path>) -> Result<ImageGrid> {
    let path = path.as_ref();
    let img = image::open(path).map_err(|e| Error::Format(format!("{}: {e}", path.display())))?.into_luma8();
    let (w, h) = img.dimensions();
    let data = img.into_raw().into_iter().map(f64::from).collect();
    ImageGrid::new(h as usize, w as usize, data)
}

pub fn write_gray(path: impl AsRef<Path>, g: &ImageGrid, mode: Intensity) -> Result<WrittenRange> {
    let path = path.as_ref();
    let (min, max) = g.min_max();
    let (offset, scale) = match mode {
        Intensity::Clamp => (0.0, 1.0),
        Intensity::MinMax if max > min => (min, 255.0 / (max - min)),
        Intensity::MinMax => (min, 0.0),
    };
    let bytes: Vec<u8> =
        g.as_slice().iter().map(|&v| ((v - offset) * scale).round().clamp(0.0, 255.0) as u8).collect();
    let ext = path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase);
    match ext.as_deref() {
        Some("pgm") => {
            let mut f = fs::File::create(path)?;
            write!(f, "P5\n{} {}\n255\n", g.cols(), g.rows())?;
            f.write_all(&bytes)?;
        }
        Some("png") => {
            let img = image::GrayImage::from_raw(g.cols() as u32, g.rows() as u32, bytes)
                .expect("buffer matches dimensions");
            img.save_with_format(path, image::ImageFormat::Png)
                .map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
        }
        other => {
            return Err(Error::Format(format!(
                "unsupported image extension {other:?} for {}",
                path.display()
            )))
        }
    }
    Ok(WrittenRange { min, max, offset, scale })
}

pub fn write_raw(path: impl AsRef<Path>, g: &ImageGrid) -> Result<()> {
    let mut buf = Vec::with_capacity(20 + 8 * g.len());
    buf.extend_from_slice(RAW_MAGIC);
    buf.extend_from_slice(&(g.rows() as u64).to_le_bytes());
    buf.extend_from_slice(&(g.cols() as u64).to_le_bytes());
    for v in g.as_slice() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    fs::write(path, buf)?;
    Ok(())
}

pub fn read_raw(path: impl AsRef<Path>) -> Result<ImageGrid> {
    let path = path.as_ref();
    let buf = fs::read(path)?;
    let bad = |why: &str| Error::Format(format!("{}: {why}", path.display()));
    if buf.len() < 20 || &buf[..4] != RAW_MAGIC {
        return Err(bad("not a raw grid file"));
    }
    let word = |i: usize| u64::from_le_bytes(buf[i..i + 8].try_into().unwrap()) as usize;
    let (rows, cols) = (word(4), word(12));
    if buf.len() != 20 + 8 * rows * cols {
        return Err(bad("truncated payload"));
    }
    let data = buf[20..].chunks_exact(8).map(|b| f64::from_le_bytes(b.try_into().unwrap())).collect();
    ImageGrid::new(rows, cols, data)
}
