//! Seeded synthetic cohort standing in for scanner output.
//!
//! Each slide is an elongated tissue core on a white background. Stroma is
//! pink with dark nuclei dots; glands are lumen rings lined with epithelium
//! nuclei. Slides of cancer-adjacent patients get `1 + 0.15 * s` times the
//! nuclei density and `1 + 0.10 * s` times the high-frequency noise
//! amplitude, where `s` is the signal strength.

use std::f64::consts::PI;
use std::path::Path;

use image::RgbImage;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};

use serde::{Deserialize, Serialize};

use crate::cohort::{write_cohort_csv, CohortRow, Diagnosis, PatientRecord};
use crate::error::{Error, Result};
use crate::rng::{self, stream, StreamRng};
use crate::slide::pyramid::{build_pyramid, SlidePyramid, DEFAULT_MPP};

pub const DENSITY_GAIN: f64 = 0.15;
pub const NOISE_GAIN: f64 = 0.10;

const BACKGROUND: [f64; 3] = [244.0, 243.0, 245.0];
const STROMA: [f64; 3] = [232.0, 164.0, 205.0];
const EPITHELIUM: [f64; 3] = [212.0, 136.0, 192.0];
const LUMEN: [f64; 3] = [242.0, 226.0, 238.0];
const NUCLEUS: [f64; 3] = [108.0, 46.0, 142.0];
const PEN: [f64; 3] = [86.0, 24.0, 146.0];
const MOTTLE_CELL: usize = 6;
const MOTTLE_AMP: f64 = 30.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticCohortSpec {
    pub seed: u64,
    pub n_patients: usize,
    pub cores_per_patient: usize,
    /// Fraction of cancer-adjacent patients, in (0, 1).
    pub class_balance: f64,
    pub signal_strength: f64,
    pub pen_mark_prob: f64,
    pub blur_region_prob: f64,
    pub width: u32,
    pub height: u32,
    pub mpp: f64,
    pub age_range: (f64, f64),
    /// PSA drawn log-uniformly in this range.
    pub psa_range: (f64, f64),
    /// Standard deviation of benign high-frequency noise, in 8-bit levels.
    pub base_noise: f64,
    /// Stroma pixels per nucleus at density multiplier 1.
    pub stroma_area_per_nucleus: f64,
}

impl Default for SyntheticCohortSpec {
    fn default() -> Self {
        Self {
            seed: 1,
            n_patients: 60,
            cores_per_patient: 10,
            class_balance: 0.5,
            signal_strength: 1.0,
            pen_mark_prob: 0.1,
            blur_region_prob: 0.1,
            width: 1196,
            height: 897,
            mpp: DEFAULT_MPP,
            age_range: (50.0, 75.0),
            psa_range: (1.0, 30.0),
            base_noise: 8.0,
            stroma_area_per_nucleus: 60.0,
        }
    }
}

impl SyntheticCohortSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.class_balance > 0.0 && self.class_balance < 1.0) {
            return Err(Error::invalid(format!(
                "class_balance must lie in (0, 1), got {}",
                self.class_balance
            )));
        }
        if self.n_patients < 2 {
            return Err(Error::invalid("need at least two patients"));
        }
        if self.cores_per_patient == 0 {
            return Err(Error::invalid("cores_per_patient must be positive"));
        }
        if !(self.signal_strength >= 0.0) {
            return Err(Error::invalid("signal_strength must be >= 0"));
        }
        for (name, p) in [("pen_mark_prob", self.pen_mark_prob), ("blur_region_prob", self.blur_region_prob)] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::invalid(format!("{name} must lie in [0, 1]")));
            }
        }
        if self.width < 16 || self.height < 16 {
            return Err(Error::invalid("slides must be at least 16x16"));
        }
        if !(self.age_range.0 > 0.0 && self.age_range.1 < 120.0 && self.age_range.0 < self.age_range.1) {
            return Err(Error::invalid("age_range must lie within (0, 120)"));
        }
        if !(self.psa_range.0 > 0.0 && self.psa_range.0 < self.psa_range.1) {
            return Err(Error::invalid("psa_range must be positive and increasing"));
        }
        Ok(())
    }
}

/// Per-slide rendering plan.
#[derive(Debug, Clone, PartialEq)]
pub struct SlidePlan {
    pub slide_id: String,
    pub patient_index: usize,
    pub cancer: bool,
    /// Global slide index; selects the slide's random stream.
    pub index: usize,
}

/// Cohort metadata; slides are rendered on demand.
#[derive(Debug, Clone)]
pub struct SyntheticCohort {
    pub spec: SyntheticCohortSpec,
    pub patients: Vec<PatientRecord>,
    pub slides: Vec<SlidePlan>,
}

/// Generate the full cohort in memory.
pub fn generate_synthetic_cohort(spec: &SyntheticCohortSpec) -> Result<(Vec<SlidePyramid>, Vec<PatientRecord>)> {
    let cohort = SyntheticCohort::new(spec.clone())?;
    let slides = (0..cohort.slides.len())
        .map(|i| cohort.render_slide(i))
        .collect::<Result<Vec<_>>>()?;
    Ok((slides, cohort.patients))
}

impl SyntheticCohort {
    pub fn new(spec: SyntheticCohortSpec) -> Result<Self> {
        spec.validate()?;
        let mut rng = rng::stream(spec.seed, stream::COHORT);
        let n_cancer = ((spec.n_patients as f64 * spec.class_balance).round() as usize).clamp(1, spec.n_patients - 1);
        let mut labels: Vec<bool> = (0..spec.n_patients).map(|i| i < n_cancer).collect();
        labels.shuffle(&mut rng);

        let mut patients = Vec::with_capacity(spec.n_patients);
        let mut slides = Vec::new();
        for (pi, &cancer) in labels.iter().enumerate() {
            let patient_id = format!("P{:04}", pi + 1);
            let age = rng.random_range(spec.age_range.0..spec.age_range.1);
            let age = (age * 10.0).round() / 10.0;
            let (lo, hi) = (spec.psa_range.0.ln(), spec.psa_range.1.ln());
            let psa = (rng.random_range(lo..hi).exp() * 100.0).round() / 100.0;
            let (isup, mean_len, max_len) = if cancer {
                let isup = weighted_isup(&mut rng);
                let mean_len: f64 = rng.random_range(0.5..8.0);
                let max_len = mean_len + rng.random_range(0.0..6.0);
                (isup, round1(mean_len), round1(max_len))
            } else {
                (0, 0.0, 0.0)
            };
            let slide_ids: Vec<String> = (0..spec.cores_per_patient)
                .map(|c| format!("{patient_id}_C{:02}", c + 1))
                .collect();
            for sid in &slide_ids {
                slides.push(SlidePlan {
                    slide_id: sid.clone(),
                    patient_index: pi,
                    cancer,
                    index: slides.len(),
                });
            }
            let rec = PatientRecord {
                patient_id,
                age_years: age,
                psa_ng_ml: psa,
                diagnosis: if cancer { Diagnosis::Cancer } else { Diagnosis::Benign },
                isup,
                mean_cancer_length_mm: mean_len,
                max_cancer_length_mm: max_len,
                slide_ids,
            };
            rec.validate()?;
            patients.push(rec);
        }
        Ok(Self { spec, patients, slides })
    }

    pub fn render_slide(&self, slide_index: usize) -> Result<SlidePyramid> {
        let plan = self
            .slides
            .get(slide_index)
            .ok_or_else(|| Error::invalid(format!("slide index {slide_index} out of range")))?;
        let mut rng = rng::stream_indexed(self.spec.seed, stream::COHORT, 1 + plan.index as u64);
        let base = render_core(&self.spec, plan.cancer, &mut rng);
        build_pyramid(plan.slide_id.clone(), base, self.spec.mpp)
    }

    /// Ground-truth rows, with each slide path relative to the cohort root.
    pub fn rows(&self) -> Vec<CohortRow> {
        self.slides
            .iter()
            .map(|s| {
                let p = &self.patients[s.patient_index];
                CohortRow {
                    patient_id: p.patient_id.clone(),
                    slide_id: s.slide_id.clone(),
                    path: format!("slides/{}", s.slide_id),
                    diagnosis: p.label(),
                    isup: p.isup,
                    age_years: p.age_years,
                    psa_ng_ml: p.psa_ng_ml,
                    mean_cancer_length_mm: p.mean_cancer_length_mm,
                    max_cancer_length_mm: p.max_cancer_length_mm,
                }
            })
            .collect()
    }

    /// Render every slide into `root/slides/<id>/` and write `root/cohort.csv`.
    pub fn write(&self, root: &Path) -> Result<()> {
        for i in 0..self.slides.len() {
            let pyramid = self.render_slide(i)?;
            pyramid.write(&root.join("slides").join(&pyramid.slide_id))?;
        }
        write_cohort_csv(&root.join(COHORT_CSV), &self.rows())
    }
}

pub const COHORT_CSV: &str = "cohort.csv";

fn round1(v: f64) -> f64 {
    (v * 10.0).round() / 10.0
}

fn weighted_isup(rng: &mut StreamRng) -> u8 {
    const W: [f64; 5] = [0.45, 0.25, 0.12, 0.10, 0.08];
    let mut u: f64 = rng.random();
    for (i, w) in W.iter().enumerate() {
        if u < *w {
            return i as u8 + 1;
        }
        u -= w;
    }
    5
}

/// Float canvas with a tissue-membership layer.
struct Canvas {
    w: usize,
    h: usize,
    rgb: Vec<[f64; 3]>,
    tissue: Vec<bool>,
    lumen: Vec<bool>,
}

impl Canvas {
    fn idx(&self, x: i64, y: i64) -> Option<usize> {
        (x >= 0 && y >= 0 && (x as usize) < self.w && (y as usize) < self.h).then(|| y as usize * self.w + x as usize)
    }

    fn disc(&mut self, cx: f64, cy: f64, r: f64, mut paint: impl FnMut(&mut Self, usize)) {
        let (x0, x1) = ((cx - r).floor() as i64, (cx + r).ceil() as i64);
        let (y0, y1) = ((cy - r).floor() as i64, (cy + r).ceil() as i64);
        for y in y0..=y1 {
            for x in x0..=x1 {
                let (dx, dy) = (x as f64 - cx, y as f64 - cy);
                if dx * dx + dy * dy <= r * r {
                    if let Some(i) = self.idx(x, y) {
                        paint(self, i);
                    }
                }
            }
        }
    }
}

fn render_core(spec: &SyntheticCohortSpec, cancer: bool, rng: &mut StreamRng) -> RgbImage {
    let (w, h) = (spec.width as usize, spec.height as usize);
    let (wf, hf) = (w as f64, h as f64);
    let density = if cancer { 1.0 + DENSITY_GAIN * spec.signal_strength } else { 1.0 };
    let noise_sd = spec.base_noise * if cancer { 1.0 + NOISE_GAIN * spec.signal_strength } else { 1.0 };

    let mut cv = Canvas {
        w,
        h,
        rgb: vec![BACKGROUND; w * h],
        tissue: vec![false; w * h],
        lumen: vec![false; w * h],
    };

    // Core outline: a wobbling capsule along the long axis.
    let x_start = wf * rng.random_range(0.03..0.08);
    let x_end = wf * rng.random_range(0.92..0.97);
    let y_mid = hf * rng.random_range(0.45..0.55);
    let half = hf * rng.random_range(0.28..0.36);
    let wobble = hf * rng.random_range(0.0..0.04);
    let period = wf * rng.random_range(0.6..1.4);
    let phase = rng.random_range(0.0..2.0 * PI);
    let centre = |x: f64| y_mid + wobble * (2.0 * PI * x / period + phase).sin();

    // Low-frequency stain variation.
    let waves: Vec<(f64, f64, f64, f64)> = (0..3)
        .map(|_| {
            (
                rng.random_range(2.0..6.0) / wf,
                rng.random_range(1.0..4.0) / hf,
                rng.random_range(0.0..2.0 * PI),
                rng.random_range(3.0..7.0),
            )
        })
        .collect();

    // Mid-frequency mottling on a coarse lattice, bilinearly interpolated.
    let cell = MOTTLE_CELL;
    let (gw, gh) = (w / cell + 2, h / cell + 2);
    let lattice: Vec<f64> = (0..gw * gh).map(|_| rng.random_range(-MOTTLE_AMP..MOTTLE_AMP)).collect();
    let mottle = |x: usize, y: usize| -> f64 {
        let (gx, gy) = (x / cell, y / cell);
        let (fx, fy) = ((x % cell) as f64 / cell as f64, (y % cell) as f64 / cell as f64);
        let at = |i: usize, j: usize| lattice[j * gw + i];
        let top = at(gx, gy) * (1.0 - fx) + at(gx + 1, gy) * fx;
        let bot = at(gx, gy + 1) * (1.0 - fx) + at(gx + 1, gy + 1) * fx;
        top * (1.0 - fy) + bot * fy
    };

    for y in 0..h {
        for x in 0..w {
            let (xf, yf) = (x as f64, y as f64);
            let cy = centre(xf);
            let inside = if xf < x_start || xf > x_end {
                false
            } else if xf < x_start + half {
                let dx = xf - (x_start + half);
                dx * dx + (yf - cy) * (yf - cy) <= half * half
            } else if xf > x_end - half {
                let dx = xf - (x_end - half);
                dx * dx + (yf - cy) * (yf - cy) <= half * half
            } else {
                (yf - cy).abs() <= half
            };
            if inside {
                let i = y * w + x;
                cv.tissue[i] = true;
                let shade: f64 = waves
                    .iter()
                    .map(|&(fx, fy, ph, amp)| amp * (2.0 * PI * (fx * xf + fy * yf) + ph).sin())
                    .sum::<f64>()
                    + mottle(x, y);
                cv.rgb[i] = [STROMA[0] + shade, STROMA[1] + shade, STROMA[2] + 0.5 * shade];
            }
        }
    }

    let tissue_px = cv.tissue.iter().filter(|&&t| t).count() as f64;
    let random_tissue_point = |rng: &mut StreamRng, cv: &Canvas| -> Option<(f64, f64)> {
        for _ in 0..64 {
            let x = rng.random_range(0.0..wf);
            let y = rng.random_range(0.0..hf);
            if cv.tissue[y as usize * w + x as usize] {
                return Some((x, y));
            }
        }
        None
    };

    // Glands: epithelium ring, lumen, ring nuclei.
    let n_glands = (tissue_px / 14_000.0).round() as usize;
    for _ in 0..n_glands {
        let Some((gx, gy)) = random_tissue_point(rng, &cv) else { continue };
        let r_lumen = rng.random_range(9.0..24.0);
        let ring = rng.random_range(6.0..10.0);
        cv.disc(gx, gy, r_lumen + ring, |c, i| {
            if c.tissue[i] {
                c.rgb[i] = EPITHELIUM;
            }
        });
        cv.disc(gx, gy, r_lumen, |c, i| {
            if c.tissue[i] {
                c.rgb[i] = LUMEN;
                c.lumen[i] = true;
            }
        });
        let circumference = 2.0 * PI * (r_lumen + ring * 0.5);
        let n_dots = poisson_round(rng, density * circumference / 7.0);
        for _ in 0..n_dots {
            let a = rng.random_range(0.0..2.0 * PI);
            let rr = r_lumen + ring * rng.random_range(0.25..0.75);
            draw_nucleus(&mut cv, rng, gx + rr * a.cos(), gy + rr * a.sin());
        }
    }

    // Stroma nuclei.
    let n_nuclei = poisson_round(rng, density * tissue_px / spec.stroma_area_per_nucleus);
    for _ in 0..n_nuclei {
        if let Some((x, y)) = random_tissue_point(rng, &cv) {
            if !cv.lumen[y as usize * w + x as usize] {
                draw_nucleus(&mut cv, rng, x, y);
            }
        }
    }

    // High-frequency noise: luminance on tissue, faint on background.
    let tissue_noise = Normal::new(0.0, noise_sd.max(1e-12)).expect("finite sd");
    let bg_noise = Normal::new(0.0, 1.2).expect("finite sd");
    for i in 0..w * h {
        let n = if cv.tissue[i] {
            tissue_noise.sample(rng)
        } else {
            bg_noise.sample(rng)
        };
        for c in cv.rgb[i].iter_mut() {
            *c += n;
        }
    }

    if rng.random::<f64>() < spec.blur_region_prob {
        let bw = (wf * rng.random_range(0.3..0.5)) as usize;
        let bh = (hf * rng.random_range(0.5..0.9)) as usize;
        let bx = rng.random_range(0..=(w - bw.min(w)));
        let by = rng.random_range(0..=(h - bh.min(h)));
        for _ in 0..3 {
            box_blur(&mut cv.rgb, w, h, (bx, by, bw, bh), 3);
        }
    }

    if rng.random::<f64>() < spec.pen_mark_prob {
        draw_pen_arc(&mut cv, rng);
    }

    let mut img = RgbImage::new(w as u32, h as u32);
    for (px, v) in img.pixels_mut().zip(&cv.rgb) {
        px.0 = v.map(|c| (c + 0.5).floor().clamp(0.0, 255.0) as u8);
    }
    img
}

fn poisson_round(rng: &mut StreamRng, mean: f64) -> usize {
    // Integer part plus a Bernoulli on the fraction keeps expected counts
    // exact without a Poisson sampler.
    let base = mean.floor();
    base as usize + usize::from(rng.random::<f64>() < mean - base)
}

fn draw_nucleus(cv: &mut Canvas, rng: &mut StreamRng, x: f64, y: f64) {
    let r = rng.random_range(1.8..3.2);
    let tone = rng.random_range(-12.0..12.0);
    cv.disc(x, y, r, |c, i| {
        if c.tissue[i] {
            c.rgb[i] = [NUCLEUS[0] + tone, NUCLEUS[1] + tone, NUCLEUS[2] + tone];
        }
    });
}

/// A thick arc of constant ink, as a pathologist circling a region.
fn draw_pen_arc(cv: &mut Canvas, rng: &mut StreamRng) {
    let (wf, hf) = (cv.w as f64, cv.h as f64);
    let cx = wf * rng.random_range(0.25..0.75);
    let cy = hf * rng.random_range(0.35..0.65);
    let rx = wf * rng.random_range(0.12..0.25);
    let ry = hf * rng.random_range(0.2..0.35);
    let a0 = rng.random_range(0.0..2.0 * PI);
    let sweep = rng.random_range(PI..1.8 * PI);
    let thickness = rng.random_range(30.0..45.0);
    let steps = ((rx + ry) * sweep / 2.0) as usize;
    for s in 0..=steps {
        let a = a0 + sweep * s as f64 / steps as f64;
        cv.disc(cx + rx * a.cos(), cy + ry * a.sin(), thickness, |c, i| c.rgb[i] = PEN);
    }
}

fn box_blur(rgb: &mut [[f64; 3]], w: usize, h: usize, rect: (usize, usize, usize, usize), radius: usize) {
    let (bx, by, bw, bh) = rect;
    let (x1, y1) = ((bx + bw).min(w), (by + bh).min(h));
    let src = rgb.to_vec();
    for y in by..y1 {
        for x in bx..x1 {
            let mut acc = [0.0; 3];
            let mut n = 0.0;
            for yy in y.saturating_sub(radius)..=(y + radius).min(h - 1) {
                for xx in x.saturating_sub(radius)..=(x + radius).min(w - 1) {
                    let p = src[yy * w + xx];
                    for c in 0..3 {
                        acc[c] += p[c];
                    }
                    n += 1.0;
                }
            }
            rgb[y * w + x] = acc.map(|v| v / n);
        }
    }
}
