//! Raster primitives shared by segmentation, tiling and the synthetic
//! generator: grayscale conversion, the 4-neighbour Laplacian, area-average
//! pooling and resizing.

use image::{GrayImage, RgbImage};

use crate::error::{Error, Result};

/// Luma grayscale with weights (0.299, 0.587, 0.114), rounded half-up.
pub fn to_gray(rgb: &RgbImage) -> GrayImage {
    let (w, h) = rgb.dimensions();
    let mut out = GrayImage::new(w, h);
    for (src, dst) in rgb.pixels().zip(out.pixels_mut()) {
        dst.0[0] = luma(src.0);
    }
    out
}

#[inline]
pub fn luma(p: [u8; 3]) -> u8 {
    let v = 0.299 * p[0] as f64 + 0.587 * p[1] as f64 + 0.114 * p[2] as f64;
    (v + 0.5).floor().min(255.0) as u8
}

/// Signed response of the kernel `[[0,1,0],[1,-4,1],[0,1,0]]` with zero
/// padding, row-major `w * h`.
pub fn laplacian(gray: &[u8], w: usize, h: usize) -> Vec<i32> {
    debug_assert_eq!(gray.len(), w * h);
    let px = |x: isize, y: isize| -> i32 {
        if x < 0 || y < 0 || x >= w as isize || y >= h as isize {
            0
        } else {
            gray[y as usize * w + x as usize] as i32
        }
    };
    let mut out = vec![0i32; w * h];
    for y in 0..h {
        let yi = y as isize;
        for x in 0..w {
            let xi = x as isize;
            // interior fast path
            let v = if x > 0 && y > 0 && x + 1 < w && y + 1 < h {
                let c = y * w + x;
                gray[c - 1] as i32 + gray[c + 1] as i32 + gray[c - w] as i32 + gray[c + w] as i32
                    - 4 * gray[c] as i32
            } else {
                px(xi - 1, yi) + px(xi + 1, yi) + px(xi, yi - 1) + px(xi, yi + 1) - 4 * px(xi, yi)
            };
            out[y * w + x] = v;
        }
    }
    out
}

/// `|response|` clamped into `[0, 255]`, mirroring a 16-bit signed response
/// converted back to 8 bits.
#[inline]
pub fn abs_saturate(v: i32) -> u8 {
    v.clamp(i16::MIN as i32, i16::MAX as i32).unsigned_abs().min(255) as u8
}

/// Population variance of the Laplacian over interior pixels.
pub fn variance_of_laplacian(gray: &[u8], w: usize, h: usize) -> Result<f64> {
    if w < 3 || h < 3 || gray.len() != w * h {
        return Err(Error::invalid(format!(
            "variance of Laplacian needs at least 3x3 pixels, got {w}x{h}"
        )));
    }
    let mut sum = 0.0f64;
    let mut sum_sq = 0.0f64;
    let n = ((w - 2) * (h - 2)) as f64;
    for y in 1..h - 1 {
        let row = y * w;
        for x in 1..w - 1 {
            let c = row + x;
            let v = (gray[c - 1] as i32 + gray[c + 1] as i32 + gray[c - w] as i32 + gray[c + w] as i32
                - 4 * gray[c] as i32) as f64;
            sum += v;
            sum_sq += v * v;
        }
    }
    let mean = sum / n;
    Ok((sum_sq / n - mean * mean).max(0.0))
}

/// 2x2 area-average pooling, rounding half up. Odd trailing rows/columns
/// average the pixels that exist.
pub fn pool2x2(src: &RgbImage) -> RgbImage {
    let (w, h) = src.dimensions();
    let (ow, oh) = (w.div_ceil(2), h.div_ceil(2));
    let mut out = RgbImage::new(ow, oh);
    let raw = src.as_raw();
    let stride = w as usize * 3;
    for oy in 0..oh {
        let y0 = (oy * 2) as usize;
        let y1 = ((oy * 2 + 1).min(h - 1)) as usize;
        let ny = if y1 != y0 { 2 } else { 1 };
        for ox in 0..ow {
            let x0 = (ox * 2) as usize;
            let x1 = ((ox * 2 + 1).min(w - 1)) as usize;
            let nx = if x1 != x0 { 2 } else { 1 };
            let n = (nx * ny) as u32;
            let mut px = [0u8; 3];
            for (c, p) in px.iter_mut().enumerate() {
                let mut s = raw[y0 * stride + x0 * 3 + c] as u32;
                if nx == 2 {
                    s += raw[y0 * stride + x1 * 3 + c] as u32;
                }
                if ny == 2 {
                    s += raw[y1 * stride + x0 * 3 + c] as u32;
                    if nx == 2 {
                        s += raw[y1 * stride + x1 * 3 + c] as u32;
                    }
                }
                *p = ((s + n / 2) / n) as u8;
            }
            out.put_pixel(ox, oy, image::Rgb(px));
        }
    }
    out
}

/// Area-weighted box downsample by a real factor `scale >= 1`. Output is
/// `ceil(w/scale) x ceil(h/scale)`; each output pixel averages the source
/// area it covers, clipped at the raster edge.
pub fn area_downsample(src: &RgbImage, scale: f64) -> Result<RgbImage> {
    if !(scale >= 1.0) || !scale.is_finite() {
        return Err(Error::invalid(format!("downsample factor {scale} must be >= 1")));
    }
    let (w, h) = src.dimensions();
    if w == 0 || h == 0 {
        return Err(Error::invalid("empty raster"));
    }
    let ow = ((w as f64) / scale).ceil() as u32;
    let oh = ((h as f64) / scale).ceil() as u32;
    let xs = coverage(w, ow, scale);
    let ys = coverage(h, oh, scale);
    let mut out = RgbImage::new(ow, oh);
    let raw = src.as_raw();
    let stride = w as usize * 3;
    // Horizontal pass into f64 rows, then vertical pass.
    let mut horiz = vec![0.0f64; h as usize * ow as usize * 3];
    for y in 0..h as usize {
        for (ox, cov) in xs.iter().enumerate() {
            let mut acc = [0.0f64; 3];
            for &(x, wt) in cov {
                let o = y * stride + x * 3;
                for c in 0..3 {
                    acc[c] += wt * raw[o + c] as f64;
                }
            }
            let o = (y * ow as usize + ox) * 3;
            horiz[o..o + 3].copy_from_slice(&acc);
        }
    }
    for (oy, cov_y) in ys.iter().enumerate() {
        let wy: f64 = cov_y.iter().map(|&(_, wt)| wt).sum();
        for ox in 0..ow as usize {
            let wx: f64 = xs[ox].iter().map(|&(_, wt)| wt).sum();
            let mut acc = [0.0f64; 3];
            for &(y, wt) in cov_y {
                let o = (y * ow as usize + ox) * 3;
                for c in 0..3 {
                    acc[c] += wt * horiz[o + c];
                }
            }
            let area = wx * wy;
            let px = acc.map(|v| (v / area + 0.5).floor().clamp(0.0, 255.0) as u8);
            out.put_pixel(ox as u32, oy as u32, image::Rgb(px));
        }
    }
    Ok(out)
}

/// For each output cell, the source indices it overlaps and the overlap
/// length.
fn coverage(len: u32, out_len: u32, scale: f64) -> Vec<Vec<(usize, f64)>> {
    (0..out_len)
        .map(|o| {
            let start = o as f64 * scale;
            let end = ((o + 1) as f64 * scale).min(len as f64);
            let mut cells = Vec::new();
            let mut i = start.floor() as usize;
            while (i as f64) < end && i < len as usize {
                let lo = start.max(i as f64);
                let hi = end.min((i + 1) as f64);
                if hi > lo {
                    cells.push((i, hi - lo));
                }
                i += 1;
            }
            cells
        })
        .collect()
}
