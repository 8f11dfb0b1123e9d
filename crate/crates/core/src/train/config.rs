use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nnet::OptimizerKind;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub batch_size: usize,
    /// Optimizer steps per partial epoch.
    pub partial_epoch_iters: usize,
    pub max_partial_epochs: usize,
    pub patience: usize,
    pub min_delta: f64,
    pub initial_lr: f64,
    pub lr_factor: f64,
    pub ensemble_size: usize,
    pub lr_grid: Vec<f64>,
    pub percentile_grid: Vec<f64>,
    pub cv_folds: usize,
    pub augment: bool,
    pub optimizer: OptimizerKind,
    /// Cap on tuning tiles scored per partial epoch (class-balanced,
    /// fixed once per run); 0 scores every tuning tile.
    pub tuning_max_tiles: usize,
    /// Negative control: permute patient labels across the development
    /// set before training. Evaluation still uses the true labels.
    pub shuffle_labels: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 170,
            partial_epoch_iters: 300,
            max_partial_epochs: 400,
            patience: 35,
            min_delta: 1e-4,
            initial_lr: 1e-5,
            lr_factor: 0.5,
            ensemble_size: 10,
            lr_grid: vec![1e-5, 1e-6, 1e-7],
            percentile_grid: vec![50.0, 60.0, 70.0, 75.0, 80.0, 90.0],
            cv_folds: 5,
            augment: true,
            optimizer: OptimizerKind::Adam,
            tuning_max_tiles: 0,
            shuffle_labels: false,
        }
    }
}

impl TrainConfig {
    /// Budget that trains the desk network on a single workstation in
    /// minutes: short partial epochs, a larger step size for the
    /// randomly initialised network, three members.
    pub fn desk() -> Self {
        Self {
            batch_size: 16,
            partial_epoch_iters: 10,
            max_partial_epochs: 30,
            patience: 6,
            initial_lr: 1e-3,
            ensemble_size: 3,
            lr_grid: vec![1e-3],
            percentile_grid: vec![75.0],
            tuning_max_tiles: 96,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.batch_size % 2 != 0 {
            return Err(Error::invalid(format!("batch_size must be even and positive, got {}", self.batch_size)));
        }
        for (name, v) in [
            ("partial_epoch_iters", self.partial_epoch_iters),
            ("max_partial_epochs", self.max_partial_epochs),
            ("patience", self.patience),
            ("ensemble_size", self.ensemble_size),
        ] {
            if v == 0 {
                return Err(Error::invalid(format!("{name} must be positive")));
            }
        }
        if self.cv_folds < 2 {
            return Err(Error::invalid("cv_folds must be at least 2"));
        }
        if !(self.initial_lr > 0.0 && self.initial_lr.is_finite()) {
            return Err(Error::invalid("initial_lr must be positive"));
        }
        if !(self.lr_factor > 0.0 && self.lr_factor < 1.0) {
            return Err(Error::invalid("lr_factor must lie in (0, 1)"));
        }
        if !(self.min_delta >= 0.0) {
            return Err(Error::invalid("min_delta must be non-negative"));
        }
        if self.lr_grid.is_empty() || self.lr_grid.iter().any(|l| !(*l > 0.0)) {
            return Err(Error::invalid("lr_grid must be non-empty and positive"));
        }
        if self.percentile_grid.is_empty() || self.percentile_grid.iter().any(|q| !(0.0..=100.0).contains(q)) {
            return Err(Error::invalid("percentile_grid must be non-empty within [0, 100]"));
        }
        Ok(())
    }
}
