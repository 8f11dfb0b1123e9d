//! Cohort manifests, covariate encoding, patient-level splits and split
//! balance statistics.

pub mod balance;
pub mod covariates;
pub mod record;
pub mod split;
pub mod stats;

pub use balance::{balance_report, BalanceReport};
pub use covariates::{encode_covariates, CovariateVector, COVARIATE_DIM};
pub use record::{patients_from_rows, read_cohort_csv, write_cohort_csv, CohortRow, Diagnosis, PatientRecord};
pub use split::{kfold, stratified_split, Partition, SplitAssignment, SplitFractions};
