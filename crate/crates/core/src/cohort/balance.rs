use std::collections::BTreeMap;

use serde::Serialize;

use crate::aggregate::{median, percentile};
use crate::cohort::covariates::{psa_bin, PSA_LABELS};
use crate::cohort::record::{Diagnosis, PatientRecord};
use crate::cohort::split::{Partition, SplitAssignment};
use crate::cohort::stats::{chi_square, mann_whitney};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BalanceTest {
    ChiSquare,
    MannWhitney,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CategoryRow {
    pub category: String,
    pub development: usize,
    pub test: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VariableSummary {
    pub variable: String,
    pub test: BalanceTest,
    pub statistic: f64,
    pub p_value: f64,
    /// Counts per category (categorical variables).
    pub categories: Vec<CategoryRow>,
    /// (median, q1, q3) per group (continuous variables).
    pub development_summary: Option<(f64, f64, f64)>,
    pub test_summary: Option<(f64, f64, f64)>,
}

/// Development (train + validation) versus held-out test comparison.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BalanceReport {
    pub seed: u64,
    pub n_development: usize,
    pub n_test: usize,
    pub variables: Vec<VariableSummary>,
}

fn categorical(
    name: &str,
    dev: &[&PatientRecord],
    test: &[&PatientRecord],
    levels: &[String],
    key: impl Fn(&PatientRecord) -> usize,
) -> Result<VariableSummary> {
    let mut table = vec![vec![0.0; 2]; levels.len()];
    for p in dev {
        table[key(p)][0] += 1.0;
    }
    for p in test {
        table[key(p)][1] += 1.0;
    }
    let chi = chi_square(&table)?;
    Ok(VariableSummary {
        variable: name.to_string(),
        test: BalanceTest::ChiSquare,
        statistic: chi.statistic,
        p_value: chi.p_value,
        categories: levels
            .iter()
            .zip(&table)
            .map(|(l, r)| CategoryRow {
                category: l.clone(),
                development: r[0] as usize,
                test: r[1] as usize,
            })
            .collect(),
        development_summary: None,
        test_summary: None,
    })
}

fn summary(v: &[f64]) -> Option<(f64, f64, f64)> {
    Some((median(v).ok()?, percentile(v, 25.0).ok()?, percentile(v, 75.0).ok()?))
}

fn continuous(name: &str, dev: Vec<f64>, test: Vec<f64>) -> Result<Option<VariableSummary>> {
    if dev.is_empty() || test.is_empty() {
        return Ok(None);
    }
    let mw = mann_whitney(&dev, &test)?;
    Ok(Some(VariableSummary {
        variable: name.to_string(),
        test: BalanceTest::MannWhitney,
        statistic: mw.u,
        p_value: mw.p_value,
        categories: vec![],
        development_summary: summary(&dev),
        test_summary: summary(&test),
    }))
}

pub fn balance_report(split: &SplitAssignment, patients: &[PatientRecord]) -> Result<BalanceReport> {
    let mut dev = Vec::new();
    let mut test = Vec::new();
    for p in patients {
        match split.partition_of(&p.patient_id) {
            Some(Partition::Test) => test.push(p),
            Some(_) => dev.push(p),
            None => return Err(Error::invalid(format!("{} is not in the split", p.patient_id))),
        }
    }
    if dev.is_empty() || test.is_empty() {
        return Err(Error::invalid("balance report needs non-empty development and test groups"));
    }
    let mut vars = Vec::new();
    vars.push(categorical(
        "diagnosis",
        &dev,
        &test,
        &["benign".to_string(), "cancer".to_string()],
        |p| p.label() as usize,
    )?);
    vars.push(categorical(
        "psa_ng_ml",
        &dev,
        &test,
        &PSA_LABELS.map(String::from),
        |p| psa_bin(p.psa_ng_ml),
    )?);
    if let Some(v) = continuous(
        "age_years",
        dev.iter().map(|p| p.age_years).collect(),
        test.iter().map(|p| p.age_years).collect(),
    )? {
        vars.push(v);
    }
    let dev_c: Vec<&PatientRecord> = dev.iter().copied().filter(|p| p.diagnosis == Diagnosis::Cancer).collect();
    let test_c: Vec<&PatientRecord> = test.iter().copied().filter(|p| p.diagnosis == Diagnosis::Cancer).collect();
    if !dev_c.is_empty() && !test_c.is_empty() {
        vars.push(categorical(
            "isup",
            &dev_c,
            &test_c,
            &(1..=5).map(|g| format!("ISUP {g}")).collect::<Vec<_>>(),
            |p| p.isup.clamp(1, 5) as usize - 1,
        )?);
        for (name, f) in [
            ("mean_cancer_length_mm", (|p: &PatientRecord| p.mean_cancer_length_mm) as fn(&PatientRecord) -> f64),
            ("max_cancer_length_mm", |p: &PatientRecord| p.max_cancer_length_mm),
        ] {
            if let Some(v) = continuous(name, dev_c.iter().map(|p| f(p)).collect(), test_c.iter().map(|p| f(p)).collect())? {
                vars.push(v);
            }
        }
    }
    Ok(BalanceReport {
        seed: split.seed,
        n_development: dev.len(),
        n_test: test.len(),
        variables: vars,
    })
}

impl BalanceReport {
    pub fn to_markdown(&self) -> String {
        let pct = |c: usize, n: usize| if n == 0 { 0.0 } else { 100.0 * c as f64 / n as f64 };
        let mut s = String::new();
        s.push_str(&format!(
            "| | Training set (training + validation), N={} | Held-out test set, N={} | p-value |\n",
            self.n_development, self.n_test
        ));
        s.push_str("|---|---|---|---|\n");
        for v in &self.variables {
            let mark = match v.test {
                BalanceTest::ChiSquare => 1,
                BalanceTest::MannWhitney => 2,
            };
            match (v.development_summary, v.test_summary) {
                (Some(d), Some(t)) => s.push_str(&format!(
                    "| {}, median (IQR) | {:.1} ({:.1}-{:.1}) | {:.1} ({:.1}-{:.1}) | {:.3}<sup>{mark}</sup> |\n",
                    v.variable, d.0, d.1, d.2, t.0, t.1, t.2, v.p_value
                )),
                _ => {
                    let nd: usize = v.categories.iter().map(|c| c.development).sum();
                    let nt: usize = v.categories.iter().map(|c| c.test).sum();
                    s.push_str(&format!("| {} | | | {:.3}<sup>{mark}</sup> |\n", v.variable, v.p_value));
                    for c in &v.categories {
                        s.push_str(&format!(
                            "| &nbsp;&nbsp;{} | {} ({:.1}%) | {} ({:.1}%) | |\n",
                            c.category,
                            c.development,
                            pct(c.development, nd),
                            c.test,
                            pct(c.test, nt)
                        ));
                    }
                }
            }
        }
        s.push_str("\n1. Chisq test, 2. Mann-Whitney U test\n");
        s
    }

    pub fn p_values(&self) -> BTreeMap<String, f64> {
        self.variables.iter().map(|v| (v.variable.clone(), v.p_value)).collect()
    }
}
