//! Tile -> slide -> patient score aggregation.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_SLIDE_PERCENTILE: f64 = 75.0;
/// Score assigned to a slide without QC-passing tiles when not running
/// strict.
pub const NEUTRAL_SCORE: f64 = 0.5;

pub fn ensemble_mean(per_model: &[f64], expected_models: usize) -> Result<f64> {
    if per_model.len() != expected_models || expected_models == 0 {
        return Err(Error::invalid(format!(
            "expected {expected_models} model scores, got {}",
            per_model.len()
        )));
    }
    Ok(per_model.iter().sum::<f64>() / per_model.len() as f64)
}

/// Linear-interpolation percentile at rank position `(n - 1) * q / 100`.
pub fn percentile(values: &[f64], q: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::invalid("percentile of an empty list"));
    }
    if !(0.0..=100.0).contains(&q) {
        return Err(Error::invalid(format!("percentile {q} outside [0, 100]")));
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    Ok(percentile_sorted(&v, q))
}

pub(crate) fn percentile_sorted(sorted: &[f64], q: f64) -> f64 {
    let pos = (sorted.len() - 1) as f64 * q / 100.0;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    if hi == lo {
        sorted[lo]
    } else {
        sorted[lo] + frac * (sorted[hi] - sorted[lo])
    }
}

/// Median; mean of the two middle values for even counts.
pub fn median(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::invalid("median of an empty list"));
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Ok(if n % 2 == 1 { v[n / 2] } else { 0.5 * (v[n / 2 - 1] + v[n / 2]) })
}

pub fn slide_score(slide_id: &str, tile_scores: &[f64], q: f64) -> Result<f64> {
    if tile_scores.is_empty() {
        return Err(Error::EmptySlide(slide_id.to_string()));
    }
    percentile(tile_scores, q)
}

pub fn patient_score(patient_id: &str, slide_scores: &[f64]) -> Result<f64> {
    if slide_scores.is_empty() {
        return Err(Error::EmptyPatient(patient_id.to_string()));
    }
    median(slide_scores)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreLevel {
    Tile,
    Slide,
    Patient,
}

/// One row of a tile, slide or patient score table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRow {
    pub patient_id: String,
    pub slide_id: Option<String>,
    pub x: Option<u32>,
    pub y: Option<u32>,
    pub score: f64,
    pub label: u8,
    pub isup: u8,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoreTable {
    pub level: ScoreLevel,
    pub rows: Vec<ScoreRow>,
}

impl ScoreTable {
    pub fn scores(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.score).collect()
    }

    pub fn labels(&self) -> Vec<u8> {
        self.rows.iter().map(|r| r.label).collect()
    }

    pub fn validate(&self) -> Result<()> {
        let mut seen = std::collections::HashSet::new();
        for r in &self.rows {
            if !(0.0..=1.0).contains(&r.score) {
                return Err(Error::invalid(format!("score {} outside [0, 1]", r.score)));
            }
            let key = (r.patient_id.clone(), r.slide_id.clone(), r.x, r.y);
            if !seen.insert(key) {
                return Err(Error::invalid(format!("duplicate {:?} key for {}", self.level, r.patient_id)));
            }
        }
        Ok(())
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        for r in &self.rows {
            w.serialize(r)?;
        }
        w.flush().map_err(|e| Error::io(path, e))?;
        Ok(())
    }

    pub fn read_csv(path: &Path, level: ScoreLevel) -> Result<Self> {
        if !path.exists() {
            return Err(Error::MissingArtifact(path.to_path_buf()));
        }
        let mut r = csv::Reader::from_path(path)?;
        let rows = r.deserialize().collect::<std::result::Result<Vec<ScoreRow>, _>>()?;
        let t = ScoreTable { level, rows };
        t.validate()?;
        Ok(t)
    }
}

/// Identity of a slide expected to be scored, with or without tiles.
#[derive(Debug, Clone, PartialEq)]
pub struct SlideKey {
    pub patient_id: String,
    pub slide_id: String,
    pub label: u8,
    pub isup: u8,
}

/// Aggregate tile rows into slide rows at percentile `q`. Slides without
/// tiles fail with `EmptySlide` when `strict`, else score
/// [`NEUTRAL_SCORE`] with a warning.
pub fn tiles_to_slides(tiles: &ScoreTable, slides: &[SlideKey], q: f64, strict: bool) -> Result<ScoreTable> {
    let mut by_slide: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
    for r in &tiles.rows {
        let sid = r
            .slide_id
            .as_deref()
            .ok_or_else(|| Error::invalid("tile row without slide_id"))?;
        by_slide.entry(sid).or_default().push(r.score);
    }
    let mut rows = Vec::with_capacity(slides.len());
    for s in slides {
        let scores = by_slide.get(s.slide_id.as_str()).map(Vec::as_slice).unwrap_or(&[]);
        let score = match slide_score(&s.slide_id, scores, q) {
            Ok(v) => v,
            Err(Error::EmptySlide(id)) if !strict => {
                log::warn!("slide {id} has no QC-passing tiles; scoring {NEUTRAL_SCORE}");
                NEUTRAL_SCORE
            }
            Err(e) => return Err(e),
        };
        rows.push(ScoreRow {
            patient_id: s.patient_id.clone(),
            slide_id: Some(s.slide_id.clone()),
            x: None,
            y: None,
            score,
            label: s.label,
            isup: s.isup,
        });
    }
    Ok(ScoreTable { level: ScoreLevel::Slide, rows })
}

/// Median of slide scores per patient, in first-seen patient order.
pub fn slides_to_patients(slides: &ScoreTable) -> Result<ScoreTable> {
    let mut order: Vec<&str> = Vec::new();
    let mut by_patient: BTreeMap<&str, (Vec<f64>, u8, u8)> = BTreeMap::new();
    for r in &slides.rows {
        let e = by_patient.entry(&r.patient_id).or_insert_with(|| {
            order.push(&r.patient_id);
            (Vec::new(), r.label, r.isup)
        });
        e.0.push(r.score);
    }
    let rows = order
        .into_iter()
        .map(|pid| {
            let (scores, label, isup) = &by_patient[pid];
            Ok(ScoreRow {
                patient_id: pid.to_string(),
                slide_id: None,
                x: None,
                y: None,
                score: patient_score(pid, scores)?,
                label: *label,
                isup: *isup,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ScoreTable { level: ScoreLevel::Patient, rows })
}
