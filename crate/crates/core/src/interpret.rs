//! Grad-CAM heatmaps and pooled feature export.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use image::{GrayImage, Luma, Rgb, RgbImage};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::nnet::NetState;
use crate::train::augment::{to_input, Dihedral};
use crate::train::TileSample;

pub const OVERLAY_ALPHA: f64 = 0.4;
pub const FEATURES_CSV: &str = "features.csv";

#[derive(Debug, Clone, PartialEq)]
pub struct CamHeatmap {
    pub slide_id: String,
    pub x: u32,
    pub y: u32,
    pub size: usize,
    /// Row-major `size x size`, in [0, 1].
    pub values: Vec<f64>,
    pub raw_max: f64,
}

/// `ReLU(sum_k alpha_k A_k)` with `alpha_k` the spatial mean of the
/// gradient of map `k`. Both inputs are `F x (h*w)`.
pub fn cam_coarse(activations: &[f64], gradients: &[f64], plane: usize) -> Vec<f64> {
    let mut out = vec![0.0; plane];
    for (a, g) in activations.chunks(plane).zip(gradients.chunks(plane)) {
        let alpha = g.iter().sum::<f64>() / plane as f64;
        for (o, v) in out.iter_mut().zip(a) {
            *o += alpha * v;
        }
    }
    for o in &mut out {
        if *o < 0.0 {
            *o = 0.0;
        }
    }
    out
}

/// Bilinear resize with corner alignment: output corners coincide with
/// input corners, so `out[(i*(n-1)/(h-1), j*(n-1)/(w-1))]` reproduces the
/// input sample exactly where that position is integral.
pub fn upsample_bilinear(src: &[f64], h: usize, w: usize, n: usize) -> Vec<f64> {
    let scale = |dim: usize| if n > 1 && dim > 1 { (dim - 1) as f64 / (n - 1) as f64 } else { 0.0 };
    let (sy, sx) = (scale(h), scale(w));
    let mut out = vec![0.0; n * n];
    for i in 0..n {
        let fy = i as f64 * sy;
        let y0 = (fy.floor() as usize).min(h - 1);
        let y1 = (y0 + 1).min(h - 1);
        let ty = fy - y0 as f64;
        for j in 0..n {
            let fx = j as f64 * sx;
            let x0 = (fx.floor() as usize).min(w - 1);
            let x1 = (x0 + 1).min(w - 1);
            let tx = fx - x0 as f64;
            let top = src[y0 * w + x0] * (1.0 - tx) + src[y0 * w + x1] * tx;
            let bot = src[y1 * w + x0] * (1.0 - tx) + src[y1 * w + x1] * tx;
            out[i * n + j] = top * (1.0 - ty) + bot * ty;
        }
    }
    out
}

/// Grad-CAM of the cancer logit for one tile, in inference mode.
pub fn grad_cam(state: &NetState, tile: &TileSample) -> Result<CamHeatmap> {
    let cfg = state.config();
    if tile.size != cfg.input_size || tile.covariates.len() != cfg.covariate_dim {
        return Err(Error::invalid(format!(
            "tile {}px with {} covariates does not fit the checkpoint ({}px, {})",
            tile.size,
            tile.covariates.len(),
            cfg.input_size,
            cfg.covariate_dim
        )));
    }
    let x = to_input(&tile.pixels, tile.size, Dihedral::IDENTITY);
    let trace = state.net.forward_sample(&state.params, &x, &tile.covariates, None)?;
    let grad = state.net.final_map_gradient(&state.params, &trace, 1.0);
    let (map, (h, w)) = trace.final_map();
    let coarse = cam_coarse(map, &grad, h * w);
    let mut values = upsample_bilinear(&coarse, h, w, tile.size);
    let raw_max = values.iter().copied().fold(0.0, f64::max);
    if raw_max > 0.0 {
        for v in &mut values {
            *v = (*v / raw_max).min(1.0);
        }
    }
    Ok(CamHeatmap {
        slide_id: tile.slide_id.clone(),
        x: tile.x,
        y: tile.y,
        size: tile.size,
        values,
        raw_max,
    })
}

fn hot(v: f64) -> [f64; 3] {
    [(3.0 * v).clamp(0.0, 1.0), (3.0 * v - 1.0).clamp(0.0, 1.0), (3.0 * v - 2.0).clamp(0.0, 1.0)]
}

impl CamHeatmap {
    pub fn to_gray(&self) -> GrayImage {
        let n = self.size as u32;
        GrayImage::from_fn(n, n, |x, y| Luma([(self.values[(y * n + x) as usize] * 255.0).round() as u8]))
    }

    /// Heatmap in a black-red-yellow-white ramp blended over the tile.
    pub fn overlay(&self, tile: &RgbImage) -> Result<RgbImage> {
        let n = self.size as u32;
        if tile.dimensions() != (n, n) {
            return Err(Error::invalid("overlay tile size differs from heatmap"));
        }
        Ok(RgbImage::from_fn(n, n, |x, y| {
            let c = hot(self.values[(y * n + x) as usize]);
            let p = tile.get_pixel(x, y).0;
            Rgb(std::array::from_fn(|k| {
                ((1.0 - OVERLAY_ALPHA) * p[k] as f64 + OVERLAY_ALPHA * 255.0 * c[k]).round() as u8
            }))
        }))
    }

    pub fn file_stem(&self) -> String {
        format!("{}_{}_{}", self.slide_id, self.x, self.y)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureRow {
    pub slide_id: String,
    pub x: u32,
    pub y: u32,
    pub features: Vec<f64>,
}

/// Post-pooling, pre-dropout feature vector of every tile.
pub fn export_features(state: &NetState, tiles: &[TileSample]) -> Result<Vec<FeatureRow>> {
    tiles
        .par_iter()
        .map(|t| {
            let x = to_input(&t.pixels, t.size, Dihedral::IDENTITY);
            let tr = state.net.forward_sample(&state.params, &x, &t.covariates, None)?;
            Ok(FeatureRow {
                slide_id: t.slide_id.clone(),
                x: t.x,
                y: t.y,
                features: tr.features,
            })
        })
        .collect()
}

pub fn write_features_csv(path: &Path, rows: &[FeatureRow]) -> Result<()> {
    let f = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(f);
    let dim = rows.first().map_or(0, |r| r.features.len());
    let mut header = String::from("slide_id,x,y");
    for k in 0..dim {
        header.push_str(&format!(",f{k}"));
    }
    let io = |e| Error::io(path, e);
    writeln!(w, "{header}").map_err(io)?;
    for r in rows {
        let mut line = format!("{},{},{}", r.slide_id, r.x, r.y);
        for v in &r.features {
            line.push_str(&format!(",{v}"));
        }
        writeln!(w, "{line}").map_err(io)?;
    }
    w.flush().map_err(io)
}
