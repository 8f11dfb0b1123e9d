use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::aggregate::ScoreTable;
use crate::error::{Error, Result};
use crate::metrics::bootstrap::{bootstrap_ci, CiEstimate};
use crate::metrics::roc::{auc, roc_curve, sensitivity_at_specificity, RocCurve};
use crate::metrics::stratum::{sensitivity_by_stratum, StratumTable};

pub const METRICS_JSON: &str = "metrics_report.json";
pub const REPORT_MD: &str = "report.md";

/// Scores to evaluate. The patient table is required; `baseline` holds
/// logistic-baseline probabilities aligned with the patient rows.
#[derive(Debug, Clone)]
pub struct EvaluationInput<'a> {
    pub tile: Option<&'a ScoreTable>,
    pub slide: Option<&'a ScoreTable>,
    pub patient: &'a ScoreTable,
    pub baseline: Option<&'a [f64]>,
    pub targets: &'a [f64],
    pub n_boot: usize,
    pub seed: u64,
    pub config_hash: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelMetrics {
    pub level: String,
    pub n: usize,
    pub n_pos: usize,
    pub n_neg: usize,
    pub auc: CiEstimate,
    /// Highest TPR reached at FPR <= 0, 0.05, ..., 1.
    pub roc_summary: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityEstimate {
    pub target_specificity: f64,
    pub threshold: f64,
    pub sensitivity: CiEstimate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub config_hash: String,
    pub seed: u64,
    pub n_boot: usize,
    pub levels: Vec<LevelMetrics>,
    pub sensitivity: Vec<SensitivityEstimate>,
    pub by_isup: StratumTable,
    pub baseline: Option<LevelMetrics>,
}

fn roc_summary(roc: &RocCurve) -> Vec<(f64, f64)> {
    (0..=20)
        .map(|k| {
            let f = k as f64 / 20.0;
            let t = roc
                .fpr
                .iter()
                .zip(&roc.tpr)
                .filter(|(x, _)| **x <= f + 1e-12)
                .map(|(_, y)| *y)
                .fold(0.0, f64::max);
            (f, t)
        })
        .collect()
}

fn level_metrics(level: &str, scores: &[f64], labels: &[u8], n_boot: usize, seed: u64) -> Result<LevelMetrics> {
    let roc = roc_curve(scores, labels)?;
    let ci = bootstrap_ci(
        scores.len(),
        |ix| {
            let s: Vec<f64> = ix.iter().map(|&i| scores[i]).collect();
            let l: Vec<u8> = ix.iter().map(|&i| labels[i]).collect();
            auc(&s, &l)
        },
        n_boot,
        seed,
    )?;
    Ok(LevelMetrics {
        level: level.to_string(),
        n: scores.len(),
        n_pos: roc.n_pos,
        n_neg: roc.n_neg,
        auc: ci,
        roc_summary: roc_summary(&roc),
    })
}

pub fn evaluate(input: &EvaluationInput) -> Result<MetricsReport> {
    let mut levels = Vec::new();
    for (name, table) in [("tile", input.tile), ("slide", input.slide), ("patient", Some(input.patient))] {
        if let Some(t) = table {
            t.validate()?;
            levels.push(level_metrics(name, &t.scores(), &t.labels(), input.n_boot, input.seed)?);
        }
    }
    let scores = input.patient.scores();
    let labels = input.patient.labels();
    let isup: Vec<u8> = input.patient.rows.iter().map(|r| r.isup).collect();
    let mut sensitivity = Vec::new();
    for &t in input.targets {
        let op = sensitivity_at_specificity(&scores, &labels, t)?;
        let ci = bootstrap_ci(
            scores.len(),
            |ix| {
                let s: Vec<f64> = ix.iter().map(|&i| scores[i]).collect();
                let l: Vec<u8> = ix.iter().map(|&i| labels[i]).collect();
                sensitivity_at_specificity(&s, &l, t).map(|o| o.sensitivity)
            },
            input.n_boot,
            input.seed,
        )?;
        sensitivity.push(SensitivityEstimate {
            target_specificity: t,
            threshold: op.threshold,
            sensitivity: ci,
        });
    }
    let by_isup = sensitivity_by_stratum(&scores, &labels, &isup, input.targets)?;
    let baseline = match input.baseline {
        Some(b) => {
            if b.len() != scores.len() {
                return Err(Error::invalid("baseline scores do not align with patients"));
            }
            Some(level_metrics("baseline", b, &labels, input.n_boot, input.seed)?)
        }
        None => None,
    };
    Ok(MetricsReport {
        config_hash: input.config_hash.clone(),
        seed: input.seed,
        n_boot: input.n_boot,
        levels,
        sensitivity,
        by_isup,
        baseline,
    })
}

impl MetricsReport {
    pub fn patient_auc(&self) -> Option<f64> {
        self.levels.iter().find(|l| l.level == "patient").map(|l| l.auc.point)
    }

    pub fn to_markdown(&self) -> String {
        let mut s = String::from("# Evaluation report\n\n");
        let _ = writeln!(s, "config hash `{}`, seed {}, {} bootstrap resamples\n", self.config_hash, self.seed, self.n_boot);
        s.push_str("## ROC summary\n\n| Level | N | Positive | Negative | AUC | 95% CI |\n|---|---|---|---|---|---|\n");
        for l in self.levels.iter().chain(self.baseline.iter()) {
            let _ = writeln!(
                s,
                "| {} | {} | {} | {} | {:.3} | {:.3}-{:.3} |",
                l.level, l.n, l.n_pos, l.n_neg, l.auc.point, l.auc.lower, l.auc.upper
            );
        }
        s.push_str("\n## Patient-level sensitivity at fixed specificity\n\n| Specificity | Sensitivity | 95% CI | Threshold |\n|---|---|---|---|\n");
        for e in &self.sensitivity {
            let _ = writeln!(
                s,
                "| {:.2} | {:.3} | {:.3}-{:.3} | {:.4} |",
                e.target_specificity, e.sensitivity.point, e.sensitivity.lower, e.sensitivity.upper, e.threshold
            );
        }
        s.push_str("\n## Sensitivity by ISUP according to different specificity levels\n\n");
        s.push_str(&self.by_isup.to_markdown());
        s
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        let json = dir.join(METRICS_JSON);
        std::fs::write(&json, serde_json::to_string_pretty(self)?).map_err(|e| Error::io(&json, e))?;
        let md = dir.join(REPORT_MD);
        std::fs::write(&md, self.to_markdown()).map_err(|e| Error::io(&md, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(Error::MissingArtifact(path.to_path_buf()));
        }
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}
