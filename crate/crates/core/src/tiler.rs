//! Overlapping tile planning, QC and extraction.

use std::path::Path;

use image::RgbImage;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imaging::{pool2x2, to_gray, variance_of_laplacian};
use crate::slide::SlidePyramid;
use crate::tissue::TissueMask;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TilingConfig {
    pub window: u32,
    pub stride: u32,
    pub out_size: u32,
    pub min_tissue_fraction: f64,
    pub min_laplacian_variance: f64,
}

impl Default for TilingConfig {
    fn default() -> Self {
        Self {
            window: 598,
            stride: 299,
            out_size: 299,
            min_tissue_fraction: 0.20,
            min_laplacian_variance: 200.0,
        }
    }
}

impl TilingConfig {
    pub fn validate(&self) -> Result<()> {
        if self.stride == 0 || self.stride > self.window {
            return Err(Error::invalid("stride must lie in 1..=window"));
        }
        if self.window != 2 * self.out_size {
            return Err(Error::invalid("out_size must be window / 2"));
        }
        Ok(())
    }

    /// Keep iff tissue fraction is strictly above the minimum and the
    /// Laplacian variance is not below its minimum.
    pub fn passes(&self, tissue_fraction: f64, laplacian_variance: f64) -> bool {
        tissue_fraction > self.min_tissue_fraction && laplacian_variance >= self.min_laplacian_variance
    }

    /// Grid cells along one axis of length `dim`.
    pub fn cells(&self, dim: u32) -> u32 {
        if dim < self.window {
            0
        } else {
            (dim - self.window) / self.stride + 1
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TileRecord {
    pub slide_id: String,
    pub x: u32,
    pub y: u32,
    pub window: u32,
    pub out_size: u32,
    pub tissue_fraction: f64,
    pub laplacian_variance: f64,
    #[serde(with = "bool_as_int")]
    pub qc_pass: bool,
}

mod bool_as_int {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &bool, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u8(u8::from(*v))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<bool, D::Error> {
        match u8::deserialize(d)? {
            0 => Ok(false),
            1 => Ok(true),
            other => Err(serde::de::Error::custom(format!("expected 0 or 1, got {other}"))),
        }
    }
}

impl TileRecord {
    pub fn file_name(&self) -> String {
        format!("{}_{}_{}.png", self.slide_id, self.x, self.y)
    }
}

/// Fraction of mask pixels set among those whose centres fall inside the
/// level-0 window `[x, x + window) x [y, y + window)`.
pub fn tissue_fraction(m: &TissueMask, x: u32, y: u32, window: u32) -> Result<f64> {
    let s = m.scale;
    let extent_w = m.width as f64 * s;
    let extent_h = m.height as f64 * s;
    if (x + window) as f64 > extent_w + 1e-9 || (y + window) as f64 > extent_h + 1e-9 {
        return Err(Error::RegionOutOfBounds {
            x: x as i64,
            y: y as i64,
            w: window,
            h: window,
            width: extent_w as u32,
            height: extent_h as u32,
        });
    }
    let range = |start: u32, len: usize| {
        let lo = ((start as f64 / s) - 0.5).ceil().max(0.0) as usize;
        let hi = ((((start + window) as f64) / s) - 0.5).ceil().max(0.0) as usize;
        (lo.min(len), hi.min(len))
    };
    let (x0, x1) = range(x, m.width);
    let (y0, y1) = range(y, m.height);
    let total = (x1 - x0) * (y1 - y0);
    if total == 0 {
        return Ok(0.0);
    }
    let mut set = 0usize;
    for yy in y0..y1 {
        set += m.grid[yy * m.width + x0..yy * m.width + x1].iter().filter(|&&b| b).count();
    }
    Ok(set as f64 / total as f64)
}

/// Every full-window grid cell of the slide with its QC measurements.
pub fn plan_tiles(p: &SlidePyramid, m: &TissueMask, cfg: &TilingConfig) -> Result<Vec<TileRecord>> {
    cfg.validate()?;
    if m.slide_id != p.slide_id {
        return Err(Error::invalid(format!(
            "mask of {} applied to slide {}",
            m.slide_id, p.slide_id
        )));
    }
    let expect_w = (p.width0 as f64 / m.scale).ceil() as usize;
    let expect_h = (p.height0 as f64 / m.scale).ceil() as usize;
    if (m.width, m.height) != (expect_w, expect_h) {
        return Err(Error::invalid(format!(
            "mask {}x{} does not match slide {}x{} at scale {}",
            m.width, m.height, p.width0, p.height0, m.scale
        )));
    }
    let (nx, ny) = (cfg.cells(p.width0), cfg.cells(p.height0));
    let mut out = Vec::with_capacity((nx * ny) as usize);
    for j in 0..ny {
        for i in 0..nx {
            let (x, y) = (i * cfg.stride, j * cfg.stride);
            let tf = tissue_fraction(m, x, y, cfg.window)?;
            let region = p.read_region(0, x, y, cfg.window, cfg.window)?;
            let gray = to_gray(&region);
            let var = variance_of_laplacian(gray.as_raw(), cfg.window as usize, cfg.window as usize)?;
            out.push(TileRecord {
                slide_id: p.slide_id.clone(),
                x,
                y,
                window: cfg.window,
                out_size: cfg.out_size,
                tissue_fraction: tf,
                laplacian_variance: var,
                qc_pass: cfg.passes(tf, var),
            });
        }
    }
    Ok(out)
}

/// Read the tile's level-0 window and 2x2 pool it to the output size.
pub fn extract_tile(p: &SlidePyramid, r: &TileRecord) -> Result<RgbImage> {
    let region = p.read_region(0, r.x, r.y, r.window, r.window)?;
    Ok(pool2x2(&region))
}

pub const TILES_CSV: &str = "tiles.csv";

pub fn write_tiles_csv(path: &Path, records: &[TileRecord]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in records {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

pub fn read_tiles_csv(path: &Path) -> Result<Vec<TileRecord>> {
    if !path.exists() {
        return Err(Error::MissingArtifact(path.to_path_buf()));
    }
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}

/// Deterministic store order: slide, then row, then column.
pub fn sort_records(records: &mut [TileRecord]) {
    records.sort_by(|a, b| a.slide_id.cmp(&b.slide_id).then(a.y.cmp(&b.y)).then(a.x.cmp(&b.x)));
}
