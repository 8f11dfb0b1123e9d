use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Diagnosis {
    Benign,
    Cancer,
}

impl Diagnosis {
    pub fn label(self) -> u8 {
        match self {
            Diagnosis::Benign => 0,
            Diagnosis::Cancer => 1,
        }
    }

    pub fn from_label(v: u8) -> Result<Self> {
        match v {
            0 => Ok(Diagnosis::Benign),
            1 => Ok(Diagnosis::Cancer),
            other => Err(Error::invalid(format!("diagnosis must be 0 or 1, got {other}"))),
        }
    }
}

/// One man in the cohort. Only benign cores are imaged; `diagnosis` says
/// whether cancer was found in any of his other cores.
#[derive(Debug, Clone, PartialEq)]
pub struct PatientRecord {
    pub patient_id: String,
    pub age_years: f64,
    pub psa_ng_ml: f64,
    pub diagnosis: Diagnosis,
    /// ISUP grade group, 0 for benign.
    pub isup: u8,
    pub mean_cancer_length_mm: f64,
    pub max_cancer_length_mm: f64,
    pub slide_ids: Vec<String>,
}

impl PatientRecord {
    pub fn validate(&self) -> Result<()> {
        let id = &self.patient_id;
        if !(self.psa_ng_ml > 0.0) {
            return Err(Error::invalid(format!("{id}: PSA must be positive")));
        }
        if !(self.age_years > 0.0 && self.age_years < 120.0) {
            return Err(Error::invalid(format!("{id}: age outside (0, 120)")));
        }
        if self.isup > 5 {
            return Err(Error::invalid(format!("{id}: ISUP {} > 5", self.isup)));
        }
        if self.diagnosis == Diagnosis::Benign
            && (self.isup != 0 || self.mean_cancer_length_mm != 0.0 || self.max_cancer_length_mm != 0.0)
        {
            return Err(Error::invalid(format!("{id}: benign patient with cancer grade or length")));
        }
        if self.diagnosis == Diagnosis::Cancer && self.isup == 0 {
            return Err(Error::invalid(format!("{id}: cancer patient without ISUP grade")));
        }
        Ok(())
    }

    pub fn label(&self) -> u8 {
        self.diagnosis.label()
    }
}

/// One row of the cohort ground-truth CSV (one row per slide).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CohortRow {
    pub patient_id: String,
    pub slide_id: String,
    pub path: String,
    pub diagnosis: u8,
    pub isup: u8,
    pub age_years: f64,
    pub psa_ng_ml: f64,
    pub mean_cancer_length_mm: f64,
    pub max_cancer_length_mm: f64,
}

pub fn write_cohort_csv(path: &Path, rows: &[CohortRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

pub fn read_cohort_csv(path: &Path) -> Result<Vec<CohortRow>> {
    if !path.exists() {
        return Err(Error::MissingArtifact(path.to_path_buf()));
    }
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}

/// Collapse per-slide rows into patient records, keeping first-seen order.
pub fn patients_from_rows(rows: &[CohortRow]) -> Result<Vec<PatientRecord>> {
    let mut out: Vec<PatientRecord> = Vec::new();
    let mut index = std::collections::HashMap::new();
    for row in rows {
        match index.get(&row.patient_id) {
            Some(&i) => {
                let p: &mut PatientRecord = &mut out[i];
                if p.age_years != row.age_years || p.psa_ng_ml != row.psa_ng_ml || p.label() != row.diagnosis {
                    return Err(Error::invalid(format!(
                        "{}: inconsistent patient fields across slides",
                        row.patient_id
                    )));
                }
                p.slide_ids.push(row.slide_id.clone());
            }
            None => {
                let rec = PatientRecord {
                    patient_id: row.patient_id.clone(),
                    age_years: row.age_years,
                    psa_ng_ml: row.psa_ng_ml,
                    diagnosis: Diagnosis::from_label(row.diagnosis)?,
                    isup: row.isup,
                    mean_cancer_length_mm: row.mean_cancer_length_mm,
                    max_cancer_length_mm: row.max_cancer_length_mm,
                    slide_ids: vec![row.slide_id.clone()],
                };
                rec.validate()?;
                index.insert(row.patient_id.clone(), out.len());
                out.push(rec);
            }
        }
    }
    Ok(out)
}
