//! Weakly supervised training: balanced sampling, augmentation, the
//! partial-epoch schedule, ensembles and cross-validation.

pub mod augment;
pub mod config;
pub mod cv;
pub mod data;
pub mod model;
pub mod schedule;

pub use augment::{augment, Dihedral};
pub use config::TrainConfig;
pub use cv::{cross_validate, select_best, slide_auc, CvFold, CvPoint, CvResult};
pub use data::{sample_balanced_batch, ClassIndex, FoldData, TileSample};
pub use model::{predict_ensemble, predict_tiles, train_ensemble, train_model};
pub use schedule::{run_schedule, EpochRecord, EpochRunner, StopReason, TrainLog};
