//! Brute-force reference implementations. Deliberately naive: pair
//! counting, counting-based order statistics, full enumeration, direct
//! convolution loops.

use image::RgbImage;

pub fn auc_pairs(scores: &[f64], labels: &[u8]) -> f64 {
    let mut wins = 0.0;
    let mut pairs = 0.0;
    for (i, &si) in scores.iter().enumerate() {
        if labels[i] != 1 {
            continue;
        }
        for (j, &sj) in scores.iter().enumerate() {
            if labels[j] != 0 {
                continue;
            }
            pairs += 1.0;
            if si > sj {
                wins += 1.0;
            } else if si == sj {
                wins += 0.5;
            }
        }
    }
    wins / pairs
}

/// (threshold, fpr, tpr) for every distinct score and for -inf, ordered
/// by decreasing threshold; positive means `score > t`.
pub fn roc_points(scores: &[f64], labels: &[u8]) -> Vec<(f64, f64, f64)> {
    let mut ts: Vec<f64> = Vec::new();
    for &s in scores {
        if !ts.contains(&s) {
            ts.push(s);
        }
    }
    // selection sort, descending
    for i in 0..ts.len() {
        let mut m = i;
        for j in i + 1..ts.len() {
            if ts[j] > ts[m] {
                m = j;
            }
        }
        ts.swap(i, m);
    }
    ts.push(f64::NEG_INFINITY);
    let p = labels.iter().filter(|&&l| l == 1).count() as f64;
    let n = labels.len() as f64 - p;
    ts.iter()
        .map(|&t| {
            let tp = scores.iter().zip(labels).filter(|(&s, &l)| l == 1 && s > t).count() as f64;
            let fp = scores.iter().zip(labels).filter(|(&s, &l)| l == 0 && s > t).count() as f64;
            (t, fp / n, tp / p)
        })
        .collect()
}

pub fn trapezoid(points: &[(f64, f64, f64)]) -> f64 {
    let mut a = 0.0;
    for k in 1..points.len() {
        let (_, f0, t0) = points[k - 1];
        let (_, f1, t1) = points[k];
        a += (f1 - f0) * (t0 + t1) / 2.0;
    }
    a
}

/// Best sensitivity over all thresholds meeting the specificity target,
/// smallest such threshold on ties. Returns (sensitivity, specificity,
/// threshold).
pub fn sens_at_spec(scores: &[f64], labels: &[u8], target: f64) -> Option<(f64, f64, f64)> {
    let n_neg = labels.iter().filter(|&&l| l == 0).count();
    let mut best: Option<(f64, f64, f64)> = None;
    for (t, fpr, tpr) in roc_points(scores, labels) {
        let tn = scores.iter().zip(labels).filter(|(&s, &l)| l == 0 && s <= t).count();
        if (tn as f64) < target * n_neg as f64 - 1e-9 {
            continue;
        }
        let better = match best {
            None => true,
            Some((bs, _, bt)) => tpr > bs || (tpr == bs && t < bt),
        };
        if better {
            best = Some((tpr, 1.0 - fpr, t));
        }
    }
    best
}

/// k-th smallest value (0-based) by counting, without sorting.
pub fn order_stat(values: &[f64], k: usize) -> f64 {
    for &v in values {
        let below = values.iter().filter(|&&u| u < v).count();
        let at_or_below = values.iter().filter(|&&u| u <= v).count();
        if below <= k && k < at_or_below {
            return v;
        }
    }
    unreachable!("k out of range")
}

pub fn percentile(values: &[f64], q: f64) -> f64 {
    let pos = (values.len() - 1) as f64 * q / 100.0;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let a = order_stat(values, lo);
    if hi == lo {
        return a;
    }
    a + (pos - lo as f64) * (order_stat(values, hi) - a)
}

pub fn median(values: &[f64]) -> f64 {
    let n = values.len();
    if n % 2 == 1 {
        order_stat(values, n / 2)
    } else {
        0.5 * (order_stat(values, n / 2 - 1) + order_stat(values, n / 2))
    }
}

/// Pearson statistic over the table after dropping empty rows/columns.
pub fn chi_square_stat(table: &[Vec<f64>]) -> (f64, usize) {
    let keep_r: Vec<usize> = (0..table.len()).filter(|&i| table[i].iter().sum::<f64>() > 0.0).collect();
    let keep_c: Vec<usize> = (0..table[0].len()).filter(|&j| table.iter().map(|r| r[j]).sum::<f64>() > 0.0).collect();
    if keep_r.len() < 2 || keep_c.len() < 2 {
        return (0.0, 0);
    }
    let total: f64 = keep_r.iter().map(|&i| keep_c.iter().map(|&j| table[i][j]).sum::<f64>()).sum();
    let mut stat = 0.0;
    for &i in &keep_r {
        for &j in &keep_c {
            let ri: f64 = keep_c.iter().map(|&jj| table[i][jj]).sum();
            let cj: f64 = keep_r.iter().map(|&ii| table[ii][j]).sum();
            let e = ri * cj / total;
            stat += (table[i][j] - e) * (table[i][j] - e) / e;
        }
    }
    (stat, (keep_r.len() - 1) * (keep_c.len() - 1))
}

fn ln_gamma_half_integer(a: f64) -> f64 {
    // a is a positive multiple of 1/2
    let mut x = a;
    let mut acc = 0.0;
    while x > 1.0 {
        x -= 1.0;
        acc += x.ln();
    }
    if (x - 0.5).abs() < 1e-12 {
        acc + 0.5 * std::f64::consts::PI.ln()
    } else {
        acc
    }
}

/// Upper tail of the chi-square distribution: 1 - P(df/2, x/2) with the
/// lower regularised gamma summed as a power series.
pub fn chi_square_sf(x: f64, df: usize) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    let a = df as f64 / 2.0;
    let z = x / 2.0;
    let mut term = 1.0 / a;
    let mut sum = term;
    let mut n = 1.0;
    while term > sum * 1e-17 {
        term *= z / (a + n);
        sum += term;
        n += 1.0;
    }
    let lower = (a * z.ln() - z - ln_gamma_half_integer(a) + sum.ln()).exp();
    (1.0 - lower).clamp(0.0, 1.0)
}

pub fn midranks(values: &[f64]) -> Vec<f64> {
    values
        .iter()
        .map(|&v| {
            let less = values.iter().filter(|&&u| u < v).count() as f64;
            let equal = values.iter().filter(|&&u| u == v).count() as f64;
            less + (equal + 1.0) / 2.0
        })
        .collect()
}

/// Exact two-sided Mann-Whitney p-value by enumerating every assignment
/// of the pooled mid-ranks to the first group (bitmask walk).
pub fn mann_whitney_exact(a: &[f64], b: &[f64]) -> (f64, f64) {
    let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    let ranks = midranks(&pooled);
    let (n1, n2) = (a.len(), b.len());
    let base = (n1 * (n1 + 1)) as f64 / 2.0;
    let u_obs = ranks[..n1].iter().sum::<f64>() - base;
    let mu = (n1 * n2) as f64 / 2.0;
    let n = n1 + n2;
    let (mut hit, mut total) = (0u64, 0u64);
    for mask in 0u32..(1u32 << n) {
        if mask.count_ones() as usize != n1 {
            continue;
        }
        let r: f64 = (0..n).filter(|&i| mask >> i & 1 == 1).map(|i| ranks[i]).sum();
        total += 1;
        if ((r - base) - mu).abs() >= (u_obs - mu).abs() - 1e-9 {
            hit += 1;
        }
    }
    (u_obs, hit as f64 / total as f64)
}

/// Exhaustive Otsu with exact integer comparisons of
/// `(N*S0 - N0*S)^2 / (N0*N1)`; ties keep the smallest threshold.
pub fn otsu(hist: &[u64; 256]) -> u8 {
    let n: u64 = hist.iter().sum();
    let s: u128 = (0..256).map(|i| i as u128 * hist[i] as u128).sum();
    let mut best: Option<(usize, u128, u128)> = None; // (t, numerator, denominator)
    for t in 0..256 {
        let n0: u64 = hist[..=t].iter().sum();
        let n1 = n - n0;
        if n0 == 0 || n1 == 0 {
            continue;
        }
        let s0: u128 = (0..=t).map(|i| i as u128 * hist[i] as u128).sum();
        let d = (n as i128 * s0 as i128 - n0 as i128 * s as i128).unsigned_abs();
        let num = d * d;
        let den = n0 as u128 * n1 as u128;
        let better = match best {
            None => true,
            Some((_, bn, bd)) => num * bd > bn * den,
        };
        if better {
            best = Some((t, num, den));
        }
    }
    match best {
        Some((t, _, _)) => t as u8,
        None => (0..256).rev().find(|&i| hist[i] > 0).unwrap() as u8,
    }
}

/// Direct 3x3 convolution with zero padding.
pub fn laplacian(gray: &[u8], w: usize, h: usize) -> Vec<i32> {
    const K: [[i32; 3]; 3] = [[0, 1, 0], [1, -4, 1], [0, 1, 0]];
    let mut out = vec![0; w * h];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0;
            for (ky, row) in K.iter().enumerate() {
                for (kx, &k) in row.iter().enumerate() {
                    let yy = y as isize + ky as isize - 1;
                    let xx = x as isize + kx as isize - 1;
                    if yy >= 0 && xx >= 0 && (yy as usize) < h && (xx as usize) < w {
                        acc += k * gray[yy as usize * w + xx as usize] as i32;
                    }
                }
            }
            out[y * w + x] = acc;
        }
    }
    out
}

/// Population variance of the interior Laplacian as an exact fraction,
/// rounded once.
pub fn laplacian_variance(gray: &[u8], w: usize, h: usize) -> f64 {
    let lap = laplacian(gray, w, h);
    let mut s: i128 = 0;
    let mut ss: i128 = 0;
    let mut n: i128 = 0;
    for y in 1..h - 1 {
        for x in 1..w - 1 {
            let v = lap[y * w + x] as i128;
            s += v;
            ss += v * v;
            n += 1;
        }
    }
    (n * ss - s * s) as f64 / (n * n) as f64
}

pub fn pen_mask(gray: &[u8], w: usize, h: usize, threshold: u8) -> Vec<bool> {
    let lap = laplacian(gray, w, h);
    let mut out = vec![false; w * h];
    for y in 1..h.saturating_sub(1) {
        for x in 1..w.saturating_sub(1) {
            out[y * w + x] = lap[y * w + x].abs().min(255) < threshold as i32;
        }
    }
    out
}

pub fn pool2x2(src: &RgbImage) -> RgbImage {
    let (w, h) = src.dimensions();
    let mut out = RgbImage::new(w.div_ceil(2), h.div_ceil(2));
    for oy in 0..out.height() {
        for ox in 0..out.width() {
            for c in 0..3 {
                let mut s = 0u32;
                let mut n = 0u32;
                for y in oy * 2..(oy * 2 + 2).min(h) {
                    for x in ox * 2..(ox * 2 + 2).min(w) {
                        s += src.get_pixel(x, y).0[c] as u32;
                        n += 1;
                    }
                }
                out.get_pixel_mut(ox, oy).0[c] = ((s + n / 2) / n) as u8;
            }
        }
    }
    out
}

/// `ReLU(sum_k mean(G_k) * A_k)` by explicit triple loop.
pub fn grad_cam_coarse(acts: &[f64], grads: &[f64], k: usize, plane: usize) -> Vec<f64> {
    let mut out = vec![0.0; plane];
    for (i, o) in out.iter_mut().enumerate() {
        let mut acc = 0.0;
        for ch in 0..k {
            let mut alpha = 0.0;
            for j in 0..plane {
                alpha += grads[ch * plane + j];
            }
            alpha /= plane as f64;
            acc += alpha * acts[ch * plane + i];
        }
        *o = if acc > 0.0 { acc } else { 0.0 };
    }
    out
}
