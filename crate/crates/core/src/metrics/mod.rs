//! Evaluation statistics and the metrics report.

pub mod bootstrap;
pub mod logistic;
pub mod report;
pub mod roc;
pub mod stratum;

pub use bootstrap::{bootstrap_ci, CiEstimate, DEFAULT_N_BOOT};
pub use logistic::{fit_logistic_baseline, logistic_loss_and_grad, LogisticModel};
pub use report::{evaluate, EvaluationInput, MetricsReport};
pub use roc::{auc, operating_point, roc_curve, sensitivity_at_specificity, OperatingPoint, RocCurve};
pub use stratum::{sensitivity_by_stratum, StratumTable, DEFAULT_SPEC_TARGETS, ISUP_GRADES};
