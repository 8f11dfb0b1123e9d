//! Partial-epoch loop with plateau learning-rate halving and early stop.

use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::train::config::TrainConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    EarlyStop,
    MaxEpochs,
}

impl StopReason {
    pub fn as_str(self) -> &'static str {
        match self {
            StopReason::EarlyStop => "early_stop",
            StopReason::MaxEpochs => "max_epochs",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub partial_epoch: usize,
    pub train_loss: f64,
    pub tune_loss: f64,
    pub lr: f64,
    pub improved: u8,
    /// `lr_halved`, `early_stop`, `max_epochs` or empty.
    pub event: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub initial_tune_loss: f64,
    pub epochs: Vec<EpochRecord>,
    pub stop_reason: StopReason,
    /// 0 means the initial parameters were never beaten.
    pub best_epoch: usize,
    pub best_tune_loss: f64,
    pub wall_time_secs: f64,
}

impl TrainLog {
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(|e| Error::invalid(format!("{}: {e}", path.display())))?;
        w.serialize(EpochRecord {
            partial_epoch: 0,
            train_loss: f64::NAN,
            tune_loss: self.initial_tune_loss,
            lr: self.epochs.first().map_or(f64::NAN, |e| e.lr),
            improved: 0,
            event: "initial".into(),
        })?;
        for e in &self.epochs {
            w.serialize(e)?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn lr_sequence(&self) -> Vec<f64> {
        self.epochs.iter().map(|e| e.lr).collect()
    }
}

/// What the schedule drives: one partial epoch of optimisation at a given
/// learning rate, returning (train loss, tuning loss).
pub trait EpochRunner {
    fn initial_tune_loss(&mut self) -> Result<f64>;
    fn run_epoch(&mut self, epoch: usize, lr: f64) -> Result<(f64, f64)>;
    /// Called whenever the tuning loss reaches a new minimum.
    fn keep_best(&mut self, epoch: usize);
}

/// Runs partial epochs until early stop or `max_partial_epochs`.
///
/// An epoch improves when its tuning loss is below the best so far minus
/// `min_delta`. After `patience` epochs without improvement the learning
/// rate is multiplied by `lr_factor` and the counter resets; a second full
/// window without improvement stops training. Any new minimum, however
/// small, is kept as the best checkpoint.
pub fn run_schedule(cfg: &TrainConfig, runner: &mut impl EpochRunner) -> Result<TrainLog> {
    let start = Instant::now();
    let initial = runner.initial_tune_loss()?;
    let mut best = initial;
    let mut best_epoch = 0;
    let mut lr = cfg.initial_lr;
    let mut wait = 0;
    let mut halved = false;
    let mut epochs = Vec::new();
    let mut stop = StopReason::MaxEpochs;
    for epoch in 1..=cfg.max_partial_epochs {
        let (train_loss, tune_loss) = runner.run_epoch(epoch, lr)?;
        if !tune_loss.is_finite() {
            return Err(Error::Numerical(format!("tuning loss not finite at partial epoch {epoch}")));
        }
        let improved = tune_loss < best - cfg.min_delta;
        if tune_loss < best {
            best = tune_loss;
            best_epoch = epoch;
            runner.keep_best(epoch);
        }
        let mut event = String::new();
        if improved {
            wait = 0;
            halved = false;
        } else {
            wait += 1;
        }
        let mut rec = EpochRecord {
            partial_epoch: epoch,
            train_loss,
            tune_loss,
            lr,
            improved: improved as u8,
            event: String::new(),
        };
        if wait >= cfg.patience {
            if halved {
                stop = StopReason::EarlyStop;
                event = "early_stop".into();
            } else {
                lr *= cfg.lr_factor;
                halved = true;
                wait = 0;
                event = "lr_halved".into();
            }
        }
        let done = stop == StopReason::EarlyStop;
        if !done && epoch == cfg.max_partial_epochs {
            event = "max_epochs".into();
        }
        rec.event = event;
        epochs.push(rec);
        if done {
            break;
        }
    }
    Ok(TrainLog {
        initial_tune_loss: initial,
        epochs,
        stop_reason: stop,
        best_epoch,
        best_tune_loss: best,
        wall_time_secs: start.elapsed().as_secs_f64(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Stub<F: FnMut(usize) -> f64> {
        loss: F,
        best: Vec<usize>,
    }

    impl<F: FnMut(usize) -> f64> EpochRunner for Stub<F> {
        fn initial_tune_loss(&mut self) -> Result<f64> {
            Ok((self.loss)(0))
        }
        fn run_epoch(&mut self, epoch: usize, _lr: f64) -> Result<(f64, f64)> {
            let l = (self.loss)(epoch);
            Ok((l, l))
        }
        fn keep_best(&mut self, epoch: usize) {
            self.best.push(epoch);
        }
    }

    #[test]
    fn frozen_loss_stops_at_seventy() {
        let cfg = TrainConfig::default();
        let mut s = Stub { loss: |_| 0.69, best: vec![] };
        let log = run_schedule(&cfg, &mut s).unwrap();
        assert_eq!(log.epochs.len(), 70);
        assert_eq!(log.stop_reason, StopReason::EarlyStop);
        assert_eq!(log.epochs[34].event, "lr_halved");
        assert_eq!(log.epochs[34].lr, 1e-5);
        assert_eq!(log.epochs[35].lr, 5e-6);
        assert_eq!(log.epochs[69].event, "early_stop");
        assert_eq!(log.best_epoch, 0);
    }

    #[test]
    fn always_improving_hits_max_epochs() {
        let cfg = TrainConfig {
            max_partial_epochs: 3,
            ..TrainConfig::default()
        };
        let mut s = Stub { loss: |e| 1.0 - 0.1 * e as f64, best: vec![] };
        let log = run_schedule(&cfg, &mut s).unwrap();
        assert_eq!(log.epochs.len(), 3);
        assert_eq!(log.stop_reason, StopReason::MaxEpochs);
        assert_eq!(log.epochs[2].event, "max_epochs");
        assert_eq!(s.best, vec![1, 2, 3]);
    }

    #[test]
    fn never_exceeds_max_epochs() {
        let cfg = TrainConfig::default();
        // Improves every 30 epochs: never two full plateaus in a row.
        let mut s = Stub { loss: |e| 10.0 - (e / 30) as f64, best: vec![] };
        let log = run_schedule(&cfg, &mut s).unwrap();
        assert_eq!(log.epochs.len(), 400);
        assert_eq!(log.stop_reason, StopReason::MaxEpochs);
    }

    #[test]
    fn sub_delta_minimum_is_kept_without_counting() {
        let cfg = TrainConfig {
            patience: 2,
            max_partial_epochs: 10,
            ..TrainConfig::default()
        };
        let mut s = Stub { loss: |e| 1.0 - 1e-6 * e as f64, best: vec![] };
        let log = run_schedule(&cfg, &mut s).unwrap();
        assert_eq!(log.stop_reason, StopReason::EarlyStop);
        assert_eq!(log.epochs.len(), 4);
        assert_eq!(log.best_epoch, 4);
        assert!(log.epochs.iter().all(|e| log.best_tune_loss <= e.tune_loss));
    }
}
