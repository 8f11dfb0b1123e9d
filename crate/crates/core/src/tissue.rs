//! Tissue masks: saturation/hue thresholding at low resolution, pen-mark
//! removal by low Laplacian response, then binary opening and closing with
//! a disk.

use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use image::RgbImage;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imaging::{abs_saturate, area_downsample, laplacian, luma};
use crate::slide::SlidePyramid;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SegmentationConfig {
    pub mask_downsample: f64,
    pub hue_threshold: f64,
    pub pen_abs_laplacian_threshold: u8,
    /// Flagged pixels count as pen only where an opening with a disk of
    /// this radius keeps them; isolated low-response texture pixels do not.
    pub pen_region_radius: usize,
    pub disk_radius: usize,
}

impl Default for SegmentationConfig {
    fn default() -> Self {
        Self {
            mask_downsample: 5.0,
            hue_threshold: 0.75,
            pen_abs_laplacian_threshold: 20,
            pen_region_radius: 2,
            disk_radius: 6,
        }
    }
}

impl SegmentationConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.mask_downsample >= 1.0) {
            return Err(Error::invalid("mask_downsample must be >= 1"));
        }
        if !(0.0..=1.0).contains(&self.hue_threshold) {
            return Err(Error::invalid("hue_threshold must lie in [0, 1]"));
        }
        Ok(())
    }
}

/// Low-resolution binary tissue mask.
#[derive(Debug, Clone, PartialEq)]
pub struct TissueMask {
    pub slide_id: String,
    pub width: usize,
    pub height: usize,
    /// Level-0 pixels per mask pixel.
    pub scale: f64,
    pub grid: Vec<bool>,
}

impl TissueMask {
    pub fn get(&self, x: usize, y: usize) -> bool {
        self.grid[y * self.width + x]
    }

    pub fn coverage(&self) -> f64 {
        self.grid.iter().filter(|&&b| b).count() as f64 / self.grid.len().max(1) as f64
    }

    /// Write as a 1-bit grayscale PNG.
    pub fn write_png(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut enc = png::Encoder::new(BufWriter::new(file), self.width as u32, self.height as u32);
        enc.set_color(png::ColorType::Grayscale);
        enc.set_depth(png::BitDepth::One);
        let mut writer = enc
            .write_header()
            .map_err(|e| Error::Config(format!("png header: {e}")))?;
        let row_bytes = self.width.div_ceil(8);
        let mut data = vec![0u8; row_bytes * self.height];
        for y in 0..self.height {
            for x in 0..self.width {
                if self.get(x, y) {
                    data[y * row_bytes + x / 8] |= 0x80 >> (x % 8);
                }
            }
        }
        writer
            .write_image_data(&data)
            .map_err(|e| Error::io(path, std::io::Error::other(e)))?;
        Ok(())
    }

    pub fn read_png(path: &Path, slide_id: &str, scale: f64) -> Result<Self> {
        let img = image::open(path)?.to_luma8();
        let (w, h) = img.dimensions();
        Ok(TissueMask {
            slide_id: slide_id.to_string(),
            width: w as usize,
            height: h as usize,
            scale,
            grid: img.pixels().map(|p| p.0[0] > 127).collect(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaskIndexRow {
    pub slide_id: String,
    pub scale: f64,
    pub file: String,
    pub width: usize,
    pub height: usize,
}

/// Hexcone RGB to HSV, each component in [0, 1]; hue wraps modulo 1 and is
/// 0 for grays.
pub fn rgb_to_hsv(rgb: [u8; 3]) -> (f64, f64, f64) {
    let [r, g, b] = rgb.map(|c| c as f64 / 255.0);
    let max = r.max(g).max(b);
    let min = r.min(g).min(b);
    let delta = max - min;
    let v = max;
    let s = if max > 0.0 { delta / max } else { 0.0 };
    let h = if delta == 0.0 {
        0.0
    } else if max == r {
        ((g - b) / delta).rem_euclid(6.0) / 6.0
    } else if max == g {
        ((b - r) / delta + 2.0) / 6.0
    } else {
        ((r - g) / delta + 4.0) / 6.0
    };
    (h.rem_euclid(1.0), s, v)
}

/// Otsu threshold over a 256-bin histogram, classes `<= t` and `> t`.
///
/// Only thresholds leaving both classes non-empty compete; ties go to the
/// smallest `t`. With a single occupied bin the threshold is that bin, so
/// nothing lies above it.
pub fn otsu_threshold(hist: &[u64; 256]) -> Result<u8> {
    let n: u64 = hist.iter().sum();
    if n == 0 {
        return Err(Error::invalid("Otsu threshold of an empty histogram"));
    }
    let total: u128 = hist.iter().enumerate().map(|(i, &c)| i as u128 * c as u128).sum();
    let mut n0: u64 = 0;
    let mut s0: u128 = 0;
    let mut best: Option<(u8, f64)> = None;
    let mut last_occupied = 0u8;
    for t in 0..256usize {
        n0 += hist[t];
        s0 += t as u128 * hist[t] as u128;
        if hist[t] > 0 {
            last_occupied = t as u8;
        }
        let n1 = n - n0;
        if n0 == 0 || n1 == 0 {
            continue;
        }
        let score = between_class_score(n, total, n0, s0);
        if best.is_none_or(|(_, b)| score > b) {
            best = Some((t as u8, score));
        }
    }
    Ok(best.map(|(t, _)| t).unwrap_or(last_occupied))
}

/// `(N*S0 - N0*S)^2 / (N0*N1)`, proportional to the between-class variance.
fn between_class_score(n: u64, total: u128, n0: u64, s0: u128) -> f64 {
    let diff = n as i128 * s0 as i128 - n0 as i128 * total as i128;
    let d = diff as f64;
    d * d / (n0 as f64 * (n - n0) as f64)
}

/// Pixels whose saturated |Laplacian| of the luma image is below
/// `threshold`. Border pixels are never flagged.
pub fn pen_mark_mask(rgb: &RgbImage, threshold: u8) -> Vec<bool> {
    let (w, h) = (rgb.width() as usize, rgb.height() as usize);
    let gray: Vec<u8> = rgb.pixels().map(|p| luma(p.0)).collect();
    let lap = laplacian(&gray, w, h);
    let mut out = vec![false; w * h];
    if w < 3 || h < 3 {
        return out;
    }
    for y in 1..h - 1 {
        for x in 1..w - 1 {
            let i = y * w + x;
            out[i] = abs_saturate(lap[i]) < threshold;
        }
    }
    out
}

/// Pen-mark regions: flagged pixels surviving an opening with a
/// `pen_region_radius` disk.
pub fn pen_regions(small: &RgbImage, cfg: &SegmentationConfig) -> Vec<bool> {
    let (w, h) = (small.width() as usize, small.height() as usize);
    let flags = pen_mark_mask(small, cfg.pen_abs_laplacian_threshold);
    if cfg.pen_region_radius == 0 {
        return flags;
    }
    let se = disk(cfg.pen_region_radius);
    dilate(&erode(&flags, w, h, &se), w, h, &se)
}

/// Offsets of the discrete disk `dx^2 + dy^2 <= r^2`.
pub fn disk(radius: usize) -> Vec<(isize, isize)> {
    let r = radius as isize;
    let mut out = Vec::new();
    for dy in -r..=r {
        for dx in -r..=r {
            if dx * dx + dy * dy <= r * r {
                out.push((dx, dy));
            }
        }
    }
    out
}

/// Erosion; pixels outside the grid count as set.
pub fn erode(grid: &[bool], w: usize, h: usize, se: &[(isize, isize)]) -> Vec<bool> {
    let mut out = vec![false; w * h];
    for y in 0..h {
        for x in 0..w {
            out[y * w + x] = se.iter().all(|&(dx, dy)| {
                let (xx, yy) = (x as isize + dx, y as isize + dy);
                xx < 0 || yy < 0 || xx >= w as isize || yy >= h as isize || grid[yy as usize * w + xx as usize]
            });
        }
    }
    out
}

/// Dilation; pixels outside the grid count as unset.
pub fn dilate(grid: &[bool], w: usize, h: usize, se: &[(isize, isize)]) -> Vec<bool> {
    let mut out = vec![false; w * h];
    for y in 0..h {
        for x in 0..w {
            out[y * w + x] = se.iter().any(|&(dx, dy)| {
                let (xx, yy) = (x as isize - dx, y as isize - dy);
                xx >= 0 && yy >= 0 && xx < w as isize && yy < h as isize && grid[yy as usize * w + xx as usize]
            });
        }
    }
    out
}

/// Binary opening followed by closing with a disk of `radius`.
pub fn morphological_smooth(grid: &[bool], w: usize, h: usize, radius: usize) -> Vec<bool> {
    let se = disk(radius);
    let opened = dilate(&erode(grid, w, h, &se), w, h, &se);
    erode(&dilate(&opened, w, h, &se), w, h, &se)
}

pub fn compute_tissue_mask(p: &SlidePyramid, cfg: &SegmentationConfig) -> Result<TissueMask> {
    cfg.validate()?;
    let small = area_downsample(p.base(), cfg.mask_downsample)?;
    let (w, h) = (small.width() as usize, small.height() as usize);
    let hsv: Vec<(f64, f64, f64)> = small.pixels().map(|px| rgb_to_hsv(px.0)).collect();
    let sat_bin = |s: f64| (s * 255.0 + 0.5).floor().min(255.0) as usize;
    let mut hist = [0u64; 256];
    for &(_, s, _) in &hsv {
        hist[sat_bin(s)] += 1;
    }
    let t = otsu_threshold(&hist)? as usize;
    let pen = pen_regions(&small, cfg);
    let raw: Vec<bool> = hsv
        .iter()
        .zip(&pen)
        .map(|(&(hue, s, _), &is_pen)| sat_bin(s) > t && hue > cfg.hue_threshold && !is_pen)
        .collect();
    let grid = morphological_smooth(&raw, w, h, cfg.disk_radius);
    Ok(TissueMask {
        slide_id: p.slide_id.clone(),
        width: w,
        height: h,
        scale: cfg.mask_downsample,
        grid,
    })
}
