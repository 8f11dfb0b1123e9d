//! Patient-level stratified splitting.
//!
//! Strata are the cross of diagnosis, ISUP grade, age bin, PSA bin and (for
//! cancer patients) the tertile of maximum cancer length. Each stratum is
//! shuffled and receives `floor(n * f)` patients per partition; the
//! fractional leftovers are then handed out across strata so that no
//! stratum gives a partition more than one extra patient and the cohort
//! totals track the requested fractions.

use std::collections::BTreeMap;
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::aggregate::percentile;
use crate::cohort::covariates::{age_bin, psa_bin};
use crate::cohort::record::{Diagnosis, PatientRecord};
use crate::error::{Error, Result};
use crate::rng::{self, stream, StreamRng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Partition {
    Train,
    Tuning,
    InnerValidation,
    Validation,
    Test,
}

impl Partition {
    pub fn as_str(self) -> &'static str {
        match self {
            Partition::Train => "train",
            Partition::Tuning => "tuning",
            Partition::InnerValidation => "inner_validation",
            Partition::Validation => "validation",
            Partition::Test => "test",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Ok(match s {
            "train" => Partition::Train,
            "tuning" => Partition::Tuning,
            "inner_validation" => Partition::InnerValidation,
            "validation" => Partition::Validation,
            "test" => Partition::Test,
            other => return Err(Error::invalid(format!("unknown split {other:?}"))),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitFractions {
    pub train: f64,
    pub validation: f64,
    pub test: f64,
}

impl Default for SplitFractions {
    /// Proportions of the 973 / 238 / 297 reference split.
    fn default() -> Self {
        Self {
            train: 973.0 / 1508.0,
            validation: 238.0 / 1508.0,
            test: 297.0 / 1508.0,
        }
    }
}

/// Inner split of a cross-validation round's training portion.
pub const INNER_FRACTIONS: [f64; 3] = [0.70, 0.15, 0.15];

pub const STRATA_DEFINITION: &str = "diagnosis x isup x age_bin x psa_bin x max_cancer_length_tertile";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct StratumKey {
    pub diagnosis: Diagnosis,
    pub isup: u8,
    pub age_bin: usize,
    pub psa_bin: usize,
    /// 0 for benign, 1..=3 for cancer.
    pub length_tertile: u8,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SplitAssignment {
    pub seed: u64,
    pub strata: String,
    /// Cross-validation round this assignment belongs to, if any.
    pub fold: Option<usize>,
    pub assignments: BTreeMap<String, Partition>,
}

impl SplitAssignment {
    pub fn partition_of(&self, patient_id: &str) -> Option<Partition> {
        self.assignments.get(patient_id).copied()
    }

    pub fn members(&self, part: Partition) -> Vec<&str> {
        self.assignments
            .iter()
            .filter(|(_, &p)| p == part)
            .map(|(id, _)| id.as_str())
            .collect()
    }

    pub fn count(&self, part: Partition) -> usize {
        self.assignments.values().filter(|&&p| p == part).count()
    }
}

/// Stratum of every patient, in input order.
pub fn strata_keys(patients: &[PatientRecord]) -> Vec<StratumKey> {
    let lengths: Vec<f64> = patients
        .iter()
        .filter(|p| p.diagnosis == Diagnosis::Cancer)
        .map(|p| p.max_cancer_length_mm)
        .collect();
    let cuts = if lengths.is_empty() {
        None
    } else {
        let q1 = percentile(&lengths, 100.0 / 3.0).expect("non-empty");
        let q2 = percentile(&lengths, 200.0 / 3.0).expect("non-empty");
        Some((q1, q2))
    };
    patients
        .iter()
        .map(|p| {
            let length_tertile = match (p.diagnosis, cuts) {
                (Diagnosis::Cancer, Some((q1, q2))) => {
                    if p.max_cancer_length_mm <= q1 {
                        1
                    } else if p.max_cancer_length_mm <= q2 {
                        2
                    } else {
                        3
                    }
                }
                _ => 0,
            };
            StratumKey {
                diagnosis: p.diagnosis,
                isup: p.isup,
                age_bin: age_bin(p.age_years),
                psa_bin: psa_bin(p.psa_ng_ml),
                length_tertile,
            }
        })
        .collect()
}

fn check_fractions(fr: &[f64]) -> Result<()> {
    if fr.iter().any(|f| !(*f >= 0.0) || !f.is_finite()) {
        return Err(Error::invalid("split fractions must be non-negative"));
    }
    let total: f64 = fr.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::invalid(format!("split fractions sum to {total}, expected 1")));
    }
    Ok(())
}

/// Largest-remainder apportionment of `n` units over `fractions`; ties go
/// to the earlier partition.
pub fn largest_remainder(n: usize, fractions: &[f64]) -> Vec<usize> {
    let quotas: Vec<f64> = fractions.iter().map(|f| f * n as f64).collect();
    let mut counts: Vec<usize> = quotas.iter().map(|q| q.floor() as usize).collect();
    let assigned: usize = counts.iter().sum();
    let mut order: Vec<usize> = (0..fractions.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = quotas[a] - quotas[a].floor();
        let rb = quotas[b] - quotas[b].floor();
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    for &i in order.iter().take(n.saturating_sub(assigned)) {
        counts[i] += 1;
    }
    counts
}

/// Per-group allocation: floors within each group, then leftovers spread
/// across groups in a seeded order. Every count is the floor or ceiling of
/// the group's proportional quota. Leftovers are tracked per coarse class
/// (`classes[g]`) so each class stays near proportional on its own.
pub fn apportion_groups(sizes: &[usize], classes: &[usize], fractions: &[f64], rng: &mut StreamRng) -> Vec<Vec<usize>> {
    let k = fractions.len();
    let mut alloc: Vec<Vec<usize>> = sizes
        .iter()
        .map(|&n| fractions.iter().map(|f| (f * n as f64 + 1e-9).floor() as usize).collect())
        .collect();
    let mut order: Vec<usize> = (0..sizes.len()).collect();
    order.shuffle(rng);
    // Fractional mass seen so far minus extras granted, per class and partition.
    let n_classes = classes.iter().max().map_or(1, |m| m + 1);
    let mut owed = vec![vec![0.0f64; k]; n_classes];
    for &g in &order {
        let n = sizes[g];
        let owed = &mut owed[classes[g]];
        let frac: Vec<f64> = (0..k)
            .map(|i| (fractions[i] * n as f64 - alloc[g][i] as f64).max(0.0))
            .collect();
        for i in 0..k {
            owed[i] += frac[i];
        }
        let extra = n - alloc[g].iter().sum::<usize>();
        let mut cand: Vec<usize> = (0..k).filter(|&i| frac[i] > 1e-9).collect();
        cand.sort_by(|&a, &b| owed[b].total_cmp(&owed[a]).then(a.cmp(&b)));
        for &i in cand.iter().take(extra) {
            alloc[g][i] += 1;
            owed[i] -= 1.0;
        }
    }
    alloc
}

fn assign_by_strata(
    patients: &[PatientRecord],
    fractions: &[f64],
    parts: &[Partition],
    rng: &mut StreamRng,
) -> BTreeMap<String, Partition> {
    let keys = strata_keys(patients);
    let mut groups: BTreeMap<StratumKey, Vec<usize>> = BTreeMap::new();
    for (i, k) in keys.into_iter().enumerate() {
        groups.entry(k).or_default().push(i);
    }
    let mut members: Vec<Vec<usize>> = groups.into_values().collect();
    for m in members.iter_mut() {
        m.shuffle(rng);
    }
    let sizes: Vec<usize> = members.iter().map(Vec::len).collect();
    let classes: Vec<usize> = members.iter().map(|m| patients[m[0]].diagnosis.label() as usize).collect();
    let alloc = apportion_groups(&sizes, &classes, fractions, rng);
    let mut out = BTreeMap::new();
    for (m, counts) in members.iter().zip(&alloc) {
        let mut it = m.iter();
        for (part, &c) in parts.iter().zip(counts) {
            for &pi in it.by_ref().take(c) {
                out.insert(patients[pi].patient_id.clone(), *part);
            }
        }
    }
    out
}

/// Train / validation / test split balanced on the clinical strata.
pub fn stratified_split(patients: &[PatientRecord], fractions: SplitFractions, seed: u64) -> Result<SplitAssignment> {
    let fr = [fractions.train, fractions.validation, fractions.test];
    check_fractions(&fr)?;
    if patients.is_empty() {
        return Err(Error::invalid("cannot split an empty cohort"));
    }
    let mut rng = rng::stream(seed, stream::SPLIT);
    let assignments = assign_by_strata(
        patients,
        &fr,
        &[Partition::Train, Partition::Validation, Partition::Test],
        &mut rng,
    );
    Ok(SplitAssignment {
        seed,
        strata: STRATA_DEFINITION.to_string(),
        fold: None,
        assignments,
    })
}

/// Split a set into training / tuning / inner-validation (70/15/15).
pub fn inner_split(patients: &[PatientRecord], seed: u64, round: u64) -> Result<SplitAssignment> {
    let mut rng = rng::stream_indexed(seed, stream::SPLIT, 1000 + round);
    let assignments = assign_by_strata(
        patients,
        &INNER_FRACTIONS,
        &[Partition::Train, Partition::Tuning, Partition::InnerValidation],
        &mut rng,
    );
    Ok(SplitAssignment {
        seed,
        strata: STRATA_DEFINITION.to_string(),
        fold: Some(round as usize),
        assignments,
    })
}

/// Fold index (0-based) of every patient.
pub fn fold_ids(patients: &[PatientRecord], k: usize, seed: u64) -> Result<BTreeMap<String, usize>> {
    if k < 2 {
        return Err(Error::invalid(format!("k-fold needs k >= 2, got {k}")));
    }
    if k > patients.len() {
        return Err(Error::invalid(format!("k = {k} exceeds {} patients", patients.len())));
    }
    let fractions = vec![1.0 / k as f64; k];
    let mut rng = rng::stream_indexed(seed, stream::SPLIT, 1);
    let keys = strata_keys(patients);
    let mut groups: BTreeMap<StratumKey, Vec<usize>> = BTreeMap::new();
    for (i, key) in keys.into_iter().enumerate() {
        groups.entry(key).or_default().push(i);
    }
    let mut members: Vec<Vec<usize>> = groups.into_values().collect();
    for m in members.iter_mut() {
        m.shuffle(&mut rng);
    }
    let sizes: Vec<usize> = members.iter().map(Vec::len).collect();
    let classes: Vec<usize> = members.iter().map(|m| patients[m[0]].diagnosis.label() as usize).collect();
    let alloc = apportion_groups(&sizes, &classes, &fractions, &mut rng);
    let mut out = BTreeMap::new();
    for (m, counts) in members.iter().zip(&alloc) {
        let mut it = m.iter();
        for (fold, &c) in counts.iter().enumerate() {
            for &pi in it.by_ref().take(c) {
                out.insert(patients[pi].patient_id.clone(), fold);
            }
        }
    }
    Ok(out)
}

/// `k` cross-validation rounds. In round `r`, fold `r` is held out as
/// `Validation`; the rest is split 70/15/15 into `Train`, `Tuning` and
/// `InnerValidation`.
pub fn kfold(patients: &[PatientRecord], k: usize, seed: u64) -> Result<Vec<SplitAssignment>> {
    let folds = fold_ids(patients, k, seed)?;
    (0..k)
        .map(|r| {
            let rest: Vec<PatientRecord> = patients
                .iter()
                .filter(|p| folds[&p.patient_id] != r)
                .cloned()
                .collect();
            let mut a = inner_split(&rest, seed, r as u64)?;
            for p in patients.iter().filter(|p| folds[&p.patient_id] == r) {
                a.assignments.insert(p.patient_id.clone(), Partition::Validation);
            }
            Ok(a)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitRow {
    pub patient_id: String,
    pub split: String,
    pub fold: Option<usize>,
}

pub fn write_splits_csv(path: &Path, split: &SplitAssignment, folds: &BTreeMap<String, usize>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for (id, part) in &split.assignments {
        w.serialize(SplitRow {
            patient_id: id.clone(),
            split: part.as_str().to_string(),
            fold: folds.get(id).copied(),
        })?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

pub fn read_splits_csv(path: &Path) -> Result<(BTreeMap<String, Partition>, BTreeMap<String, usize>)> {
    if !path.exists() {
        return Err(Error::MissingArtifact(path.to_path_buf()));
    }
    let mut r = csv::Reader::from_path(path)?;
    let mut parts = BTreeMap::new();
    let mut folds = BTreeMap::new();
    for row in r.deserialize::<SplitRow>() {
        let row = row?;
        parts.insert(row.patient_id.clone(), Partition::parse(&row.split)?);
        if let Some(f) = row.fold {
            folds.insert(row.patient_id, f);
        }
    }
    Ok((parts, folds))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    pub(crate) fn random_cohort(n: usize, seed: u64) -> Vec<PatientRecord> {
        let mut rng = rng::stream(seed, "test-cohort");
        (0..n)
            .map(|i| {
                let cancer = rng.random::<f64>() < 0.5;
                let len: f64 = if cancer { rng.random_range(0.5..12.0) } else { 0.0 };
                PatientRecord {
                    patient_id: format!("P{i:04}"),
                    age_years: rng.random_range(50.0..75.0),
                    psa_ng_ml: rng.random_range(1.0..25.0),
                    diagnosis: if cancer { Diagnosis::Cancer } else { Diagnosis::Benign },
                    isup: if cancer { rng.random_range(1..=5) } else { 0 },
                    mean_cancer_length_mm: len / 2.0,
                    max_cancer_length_mm: len,
                    slide_ids: vec![],
                }
            })
            .collect()
    }

    fn single_stratum(n: usize) -> Vec<PatientRecord> {
        (0..n)
            .map(|i| PatientRecord {
                patient_id: format!("P{i:04}"),
                age_years: 62.0,
                psa_ng_ml: 4.0,
                diagnosis: Diagnosis::Benign,
                isup: 0,
                mean_cancer_length_mm: 0.0,
                max_cancer_length_mm: 0.0,
                slide_ids: vec![],
            })
            .collect()
    }

    #[test]
    fn one_stratum_exact_proportions() {
        let p = single_stratum(100);
        let fr = SplitFractions { train: 0.8, validation: 0.1, test: 0.1 };
        let s = stratified_split(&p, fr, 3).unwrap();
        assert_eq!(s.count(Partition::Train), 80);
        assert_eq!(s.count(Partition::Validation), 10);
        assert_eq!(s.count(Partition::Test), 10);
    }

    #[test]
    fn fractions_must_sum_to_one() {
        let p = single_stratum(10);
        let fr = SplitFractions { train: 0.8, validation: 0.1, test: 0.2 };
        assert!(matches!(stratified_split(&p, fr, 1), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn per_stratum_counts_within_one_of_quota() {
        for seed in 0..40 {
            let p = random_cohort(30 + seed as usize * 7, seed);
            let fr = SplitFractions::default();
            let s = stratified_split(&p, fr, seed).unwrap();
            let keys = strata_keys(&p);
            let mut by: BTreeMap<StratumKey, Vec<Partition>> = BTreeMap::new();
            for (rec, k) in p.iter().zip(keys) {
                by.entry(k).or_default().push(s.partition_of(&rec.patient_id).unwrap());
            }
            for (_, parts) in by {
                let n = parts.len() as f64;
                for (part, f) in [(Partition::Train, fr.train), (Partition::Validation, fr.validation), (Partition::Test, fr.test)] {
                    let c = parts.iter().filter(|&&q| q == part).count() as f64;
                    assert!((c - f * n).abs() < 1.0 + 1e-9, "seed {seed}: {c} vs {}", f * n);
                }
            }
            // Totals stay close to the cohort-level quota too.
            let n = p.len() as f64;
            assert!((s.count(Partition::Test) as f64 - fr.test * n).abs() <= 2.0);
        }
    }

    #[test]
    fn same_seed_same_assignment() {
        let p = random_cohort(80, 9);
        let a = stratified_split(&p, SplitFractions::default(), 5).unwrap();
        let b = stratified_split(&p, SplitFractions::default(), 5).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.assignments.len(), 80);
    }

    #[test]
    fn kfold_partitions_cohort() {
        let p = single_stratum(10);
        let folds = fold_ids(&p, 5, 1).unwrap();
        let mut sizes = [0usize; 5];
        for f in folds.values() {
            sizes[*f] += 1;
        }
        assert_eq!(sizes, [2; 5]);

        let p = random_cohort(57, 4);
        let rounds = kfold(&p, 5, 4).unwrap();
        let mut held: Vec<&str> = rounds.iter().flat_map(|r| r.members(Partition::Validation)).collect();
        held.sort();
        let before = held.len();
        held.dedup();
        assert_eq!(before, held.len(), "held-out folds overlap");
        assert_eq!(held.len(), 57);
        for r in &rounds {
            assert_eq!(r.assignments.len(), 57);
            assert!(r.count(Partition::Tuning) > 0);
        }
    }

    #[test]
    fn kfold_rejects_bad_k() {
        let p = single_stratum(3);
        assert!(kfold(&p, 4, 0).is_err());
        assert!(kfold(&p, 1, 0).is_err());
    }
}
