use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::roc::{roc_curve, operating_point};

pub const DEFAULT_SPEC_TARGETS: [f64; 4] = [0.99, 0.98, 0.95, 0.90];
pub const ISUP_GRADES: [u8; 5] = [1, 2, 3, 4, 5];

/// Sensitivity per ISUP grade at fixed specificity targets. Thresholds are
/// set on all negatives; cells with no positives of that grade are `None`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StratumTable {
    pub targets: Vec<f64>,
    pub thresholds: Vec<f64>,
    pub overall: Vec<f64>,
    pub positives_per_grade: Vec<usize>,
    /// `cells[target][grade - 1]`
    pub cells: Vec<Vec<Option<f64>>>,
}

pub fn sensitivity_by_stratum(scores: &[f64], labels: &[u8], isup: &[u8], targets: &[f64]) -> Result<StratumTable> {
    if isup.len() != scores.len() {
        return Err(Error::invalid("isup grades and scores differ in length"));
    }
    if labels.iter().zip(isup).any(|(&l, &g)| l == 1 && !(1..=5).contains(&g)) {
        return Err(Error::invalid("every positive needs an ISUP grade in 1..=5"));
    }
    let roc = roc_curve(scores, labels)?;
    let mut positives_per_grade = vec![0usize; ISUP_GRADES.len()];
    for (&l, &g) in labels.iter().zip(isup) {
        if l == 1 {
            positives_per_grade[g as usize - 1] += 1;
        }
    }
    let mut thresholds = Vec::new();
    let mut overall = Vec::new();
    let mut cells = Vec::new();
    for &t in targets {
        if !(t > 0.0 && t <= 1.0) {
            return Err(Error::invalid(format!("target specificity {t} outside (0, 1]")));
        }
        let op = operating_point(&roc, t)?;
        let mut hits = vec![0usize; ISUP_GRADES.len()];
        for ((&s, &l), &g) in scores.iter().zip(labels).zip(isup) {
            if l == 1 && s > op.threshold {
                hits[g as usize - 1] += 1;
            }
        }
        cells.push(
            hits.iter()
                .zip(&positives_per_grade)
                .map(|(&h, &n)| (n > 0).then(|| h as f64 / n as f64))
                .collect(),
        );
        thresholds.push(op.threshold);
        overall.push(op.sensitivity);
    }
    Ok(StratumTable {
        targets: targets.to_vec(),
        thresholds,
        overall,
        positives_per_grade,
        cells,
    })
}

impl StratumTable {
    /// Specificity rows by ISUP 1-5 columns, two decimals, `N/A` for empty
    /// grades.
    pub fn to_markdown(&self) -> String {
        let mut s = String::from("| Specificity | ISUP 1 | ISUP 2 | ISUP 3 | ISUP 4 | ISUP 5 |\n");
        s.push_str("|---|---|---|---|---|---|\n");
        for (t, row) in self.targets.iter().zip(&self.cells) {
            s.push_str(&format!("| {t:.2} |"));
            for c in row {
                match c {
                    Some(v) => s.push_str(&format!(" {v:.2} |")),
                    None => s.push_str(" N/A |"),
                }
            }
            s.push('\n');
        }
        s
    }
}
