//! Artifact writers: images with normalisation sidecars, traces and tables.

use std::path::{Path, PathBuf};

use latent_langevin::grid::io::{write_gray, write_raw, Intensity};
use latent_langevin::ImageGrid;
use serde::Serialize;

use crate::error::{CliError, IoContext, Result};

#[derive(Serialize)]
struct Sidecar<'a> {
    image: &'a str,
    mode: &'a str,
    min: f64,
    max: f64,
    /// `byte = (value - offset) * scale`, rounded and clamped to [0, 255].
    offset: f64,
    scale: f64,
}

/// Writes `<dir>/<stem>.png` with min-max contrast and `<stem>.png.json`
/// recording the map that was applied.
pub fn image(dir: &Path, stem: &str, g: &ImageGrid) -> Result<()> {
    image_with(dir, stem, g, Intensity::MinMax)
}

pub fn image_with(dir: &Path, stem: &str, g: &ImageGrid, mode: Intensity) -> Result<()> {
    let name = format!("{stem}.png");
    let path = dir.join(&name);
    let range = write_gray(&path, g, mode)?;
    let sidecar = Sidecar {
        image: &name,
        mode: match mode {
            Intensity::Clamp => "clamp",
            Intensity::MinMax => "minmax",
        },
        min: range.min,
        max: range.max,
        offset: range.offset,
        scale: range.scale,
    };
    let side = dir.join(format!("{name}.json"));
    std::fs::write(&side, serde_json::to_string_pretty(&sidecar)?).at(&side)?;
    Ok(())
}

pub fn raw(dir: &Path, stem: &str, g: &ImageGrid) -> Result<PathBuf> {
    let path = dir.join(format!("{stem}.grid"));
    write_raw(&path, g)?;
    Ok(path)
}

pub fn csv_writer(path: &Path) -> Result<csv::Writer<std::fs::File>> {
    csv::Writer::from_path(path).map_err(|e| csv_err(path, e))
}

pub fn csv_err(path: &Path, e: csv::Error) -> CliError {
    CliError::Io { path: path.to_path_buf(), source: std::io::Error::other(e) }
}

/// Writes a rectangular CSV: `header` then one row per record.
pub fn table<R: AsRef<[String]>>(path: &Path, header: &[&str], rows: &[R]) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(header).map_err(|e| csv_err(path, e))?;
    for r in rows {
        w.write_record(r.as_ref()).map_err(|e| csv_err(path, e))?;
    }
    w.flush().at(path)
}

/// Reads the named column of a CSV file as numbers.
pub fn read_column(path: &Path, column: &str) -> Result<Vec<f64>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    let headers = r.headers().map_err(|e| csv_err(path, e))?.clone();
    let idx = headers
        .iter()
        .position(|h| h == column)
        .ok_or_else(|| CliError::Parse { path: path.to_path_buf(), msg: format!("no column `{column}`") })?;
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        let v = rec[idx].parse::<f64>().map_err(|e| CliError::Parse {
            path: path.to_path_buf(),
            msg: format!("column `{column}`: {e}"),
        })?;
        out.push(v);
    }
    Ok(out)
}

pub fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).at(dir)
}
