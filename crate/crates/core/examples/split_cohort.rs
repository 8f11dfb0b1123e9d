//! Stratified patient split of a synthetic cohort, its balance table and
//! the cross-validation folds of the training partition.
//!
//! cargo run --release --example split_cohort

use prostate_wsi::cohort::split::{fold_ids, inner_split};
use prostate_wsi::cohort::{balance_report, stratified_split, Partition, SplitFractions};
use prostate_wsi::slide::{SyntheticCohort, SyntheticCohortSpec};

fn main() -> prostate_wsi::Result<()> {
    let cohort = SyntheticCohort::new(SyntheticCohortSpec {
        n_patients: 120,
        ..Default::default()
    })?;
    let split = stratified_split(&cohort.patients, SplitFractions::default(), 7)?;
    for part in [Partition::Train, Partition::Validation, Partition::Test] {
        println!("{:<10} {}", part.as_str(), split.count(part));
    }
    println!();
    println!("{}", balance_report(&split, &cohort.patients)?.to_markdown());

    let train: Vec<_> = cohort
        .patients
        .iter()
        .filter(|p| split.partition_of(&p.patient_id) == Some(Partition::Train))
        .cloned()
        .collect();
    let folds = fold_ids(&train, 5, 7)?;
    for k in 0..5 {
        let n = folds.values().filter(|&&f| f == k).count();
        println!("fold {k}: {n} patients");
    }
    let inner = inner_split(&train, 7, 0)?;
    println!(
        "round 0 inner split: train {} tuning {} inner-validation {}",
        inner.count(Partition::Train),
        inner.count(Partition::Tuning),
        inner.count(Partition::InnerValidation)
    );
    Ok(())
}
