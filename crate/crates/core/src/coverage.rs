//! Horizontal RSRP heatmaps (best GBS per cell) and their CSV/PGM exports.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use rayon::prelude::*;
use thiserror::Error;

use crate::geometry::{Scenario, Vec3};
use crate::radio::{best_gbs, RadioError, MAX_ALTITUDE, MIN_ALTITUDE};

#[derive(Debug, Error)]
pub enum CoverageError {
    #[error(transparent)]
    Radio(#[from] RadioError),
    #[error("invalid grid request: {0}")]
    InvalidRequest(String),
    #[error("grid i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("grid csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("malformed grid file: {0}")]
    Malformed(String),
}

/// Value stored for cells whose center is inside a building.
pub const SENTINEL: f64 = f64::NEG_INFINITY;

/// Pixel mapping range for PGM export.
pub const PGM_FLOOR_DBM: f64 = -120.0;
pub const PGM_CEIL_DBM: f64 = -60.0;

#[derive(Debug, Clone, PartialEq)]
pub struct CoverageGrid {
    pub altitude: f64,
    pub origin: [f64; 2],
    pub cell_size: f64,
    pub width: usize,
    pub height: usize,
    /// Row-major, row `j` covers `y` in `[origin.y + j*cell, origin.y + (j+1)*cell)`.
    pub values: Vec<f64>,
    pub best_gbs_ids: Vec<Option<u32>>,
}

impl CoverageGrid {
    pub fn cell_center(&self, col: usize, row: usize) -> Vec3 {
        Vec3::new(
            self.origin[0] + (col as f64 + 0.5) * self.cell_size,
            self.origin[1] + (row as f64 + 0.5) * self.cell_size,
            self.altitude,
        )
    }

    pub fn value(&self, col: usize, row: usize) -> f64 {
        self.values[row * self.width + col]
    }

    /// Mean over non-sentinel cells.
    pub fn mean_rsrp(&self) -> Option<f64> {
        let free: Vec<f64> = self.values.iter().copied().filter(|v| v.is_finite()).collect();
        (!free.is_empty()).then(|| free.iter().sum::<f64>() / free.len() as f64)
    }
}

pub fn compute_coverage_grid(
    scenario: &Scenario,
    altitude: f64,
    cell_size: f64,
) -> Result<CoverageGrid, CoverageError> {
    if !(MIN_ALTITUDE..=MAX_ALTITUDE).contains(&altitude) {
        return Err(RadioError::AltitudeOutOfRange(altitude).into());
    }
    if !(cell_size > 0.0) {
        return Err(CoverageError::InvalidRequest(format!("cell size {cell_size} must be positive")));
    }
    let width = (scenario.area[0] / cell_size).ceil() as usize;
    let height = (scenario.area[1] / cell_size).ceil() as usize;
    let mut grid = CoverageGrid {
        altitude,
        origin: [0.0, 0.0],
        cell_size,
        width,
        height,
        values: Vec::new(),
        best_gbs_ids: Vec::new(),
    };
    let rows: Vec<Vec<(f64, Option<u32>)>> = (0..height)
        .into_par_iter()
        .map(|row| {
            (0..width)
                .map(|col| {
                    let p = grid.cell_center(col, row);
                    if scenario.inside_any_building(p) {
                        Ok((SENTINEL, None))
                    } else {
                        best_gbs(scenario, p).map(|(id, v)| (v, Some(id)))
                    }
                })
                .collect::<Result<Vec<_>, RadioError>>()
        })
        .collect::<Result<_, _>>()?;
    for row in rows {
        for (v, id) in row {
            grid.values.push(v);
            grid.best_gbs_ids.push(id);
        }
    }
    Ok(grid)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExportFormat {
    Csv,
    Pgm,
}

pub fn export_grid(grid: &CoverageGrid, path: impl AsRef<Path>, format: ExportFormat) -> Result<(), CoverageError> {
    match format {
        ExportFormat::Csv => write_csv(grid, path),
        ExportFormat::Pgm => write_pgm(grid, path),
    }
}

const META_KEYS: [&str; 6] = ["altitude_m", "origin_x", "origin_y", "cell_size_m", "width", "height"];

fn write_csv(grid: &CoverageGrid, path: impl AsRef<Path>) -> Result<(), CoverageError> {
    let mut w = csv::WriterBuilder::new().flexible(true).from_path(path)?;
    let meta = [
        grid.altitude.to_string(),
        grid.origin[0].to_string(),
        grid.origin[1].to_string(),
        grid.cell_size.to_string(),
        grid.width.to_string(),
        grid.height.to_string(),
    ];
    w.write_record(META_KEYS.iter().zip(meta.iter()).map(|(k, v)| format!("{k}={v}")))?;
    for row in grid.values.chunks(grid.width.max(1)) {
        w.write_record(row.iter().map(|v| v.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

/// Reads the value matrix back from a CSV export. Best-GBS ids are not
/// stored in the file and come back as `None`.
pub fn read_grid_csv(path: impl AsRef<Path>) -> Result<CoverageGrid, CoverageError> {
    let mut r = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_path(path)?;
    let mut records = r.records();
    let header = records
        .next()
        .ok_or_else(|| CoverageError::Malformed("empty file".into()))??;
    let mut meta = [0.0; 6];
    for (slot, (field, key)) in meta.iter_mut().zip(header.iter().zip(META_KEYS)) {
        let v = field
            .strip_prefix(key)
            .and_then(|s| s.strip_prefix('='))
            .ok_or_else(|| CoverageError::Malformed(format!("expected {key}=..., got {field}")))?;
        *slot = v
            .parse()
            .map_err(|_| CoverageError::Malformed(format!("bad number in {field}")))?;
    }
    let (width, height) = (meta[4] as usize, meta[5] as usize);
    let mut values = Vec::with_capacity(width * height);
    for rec in records {
        let rec = rec?;
        for f in rec.iter() {
            values.push(
                f.parse::<f64>()
                    .map_err(|_| CoverageError::Malformed(format!("bad value {f}")))?,
            );
        }
    }
    if values.len() != width * height {
        return Err(CoverageError::Malformed(format!(
            "expected {} values, found {}",
            width * height,
            values.len()
        )));
    }
    Ok(CoverageGrid {
        altitude: meta[0],
        origin: [meta[1], meta[2]],
        cell_size: meta[3],
        width,
        height,
        best_gbs_ids: vec![None; values.len()],
        values,
    })
}

/// Maps dBm onto 0..=255 over [-120, -60] dBm, rounding half to even.
/// The sentinel maps to 0.
pub fn dbm_to_pixel(v: f64) -> u8 {
    if !v.is_finite() {
        return 0;
    }
    let scaled = (v - PGM_FLOOR_DBM) / (PGM_CEIL_DBM - PGM_FLOOR_DBM) * 255.0;
    scaled.clamp(0.0, 255.0).round_ties_even() as u8
}

/// Binary PGM (P5). Rows are written north-up, i.e. highest `y` first.
fn write_pgm(grid: &CoverageGrid, path: impl AsRef<Path>) -> Result<(), CoverageError> {
    let mut w = BufWriter::new(File::create(path)?);
    write!(w, "P5\n{} {}\n255\n", grid.width, grid.height)?;
    for row in (0..grid.height).rev() {
        let px: Vec<u8> = (0..grid.width).map(|c| dbm_to_pixel(grid.value(c, row))).collect();
        w.write_all(&px)?;
    }
    w.flush()?;
    Ok(())
}
