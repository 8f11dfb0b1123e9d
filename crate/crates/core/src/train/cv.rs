//! Grid search over learning rate and tile-to-slide percentile by
//! cross-validated slide-level AUC.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::aggregate::percentile;
use crate::error::{Error, Result};
use crate::metrics::auc;
use crate::nnet::NetConfig;
use crate::train::config::TrainConfig;
use crate::train::data::{FoldData, TileSample};
use crate::train::model::{predict_tiles, train_model};

/// One cross-validation round: fit on `fit`, score `validation`.
#[derive(Debug, Clone, Default)]
pub struct CvFold {
    pub fit: FoldData,
    pub validation: Vec<TileSample>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvPoint {
    pub lr: f64,
    pub percentile: f64,
    pub fold_aucs: Vec<f64>,
    pub mean_auc: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvResult {
    pub lr: f64,
    pub percentile: f64,
    pub points: Vec<CvPoint>,
}

/// Highest mean AUC; ties go to the larger lr, then the smaller percentile.
pub fn select_best(points: &[CvPoint]) -> Result<&CvPoint> {
    points
        .iter()
        .max_by(|a, b| {
            a.mean_auc
                .total_cmp(&b.mean_auc)
                .then(a.lr.total_cmp(&b.lr))
                .then(b.percentile.total_cmp(&a.percentile))
        })
        .ok_or_else(|| Error::invalid("empty hyperparameter grid"))
}

fn in_fold(fold: usize, e: Error) -> Error {
    match e {
        Error::Numerical(m) => Error::Numerical(format!("fold {fold}: {m}")),
        Error::DegenerateBootstrap { .. } | Error::UndefinedMetric(_) | Error::InvalidInput(_) => {
            Error::InvalidInput(format!("fold {fold}: {e}"))
        }
        other => other,
    }
}

/// Slide-level AUC of tile scores aggregated at percentile `q`.
pub fn slide_auc(tiles: &[TileSample], scores: &[f64], q: f64) -> Result<f64> {
    let mut by_slide: BTreeMap<&str, (u8, Vec<f64>)> = BTreeMap::new();
    for (t, &s) in tiles.iter().zip(scores) {
        by_slide.entry(&t.slide_id).or_insert((t.label, Vec::new())).1.push(s);
    }
    let mut s = Vec::new();
    let mut l = Vec::new();
    for (label, v) in by_slide.values() {
        s.push(percentile(v, q)?);
        l.push(*label);
    }
    auc(&s, &l)
}

pub fn cross_validate(
    folds: &[CvFold],
    lr_grid: &[f64],
    percentile_grid: &[f64],
    cfg: &TrainConfig,
    net_cfg: &NetConfig,
    seed: u64,
) -> Result<CvResult> {
    if lr_grid.is_empty() || percentile_grid.is_empty() {
        return Err(Error::invalid("hyperparameter grids must be non-empty"));
    }
    if lr_grid.len() == 1 && percentile_grid.len() == 1 {
        return Ok(CvResult {
            lr: lr_grid[0],
            percentile: percentile_grid[0],
            points: Vec::new(),
        });
    }
    if folds.is_empty() {
        return Err(Error::invalid("cross-validation needs at least one fold"));
    }
    let mut points = Vec::new();
    for &lr in lr_grid {
        let run_cfg = TrainConfig {
            initial_lr: lr,
            ..cfg.clone()
        };
        let mut per_fold: Vec<Vec<f64>> = Vec::new();
        for (f, fold) in folds.iter().enumerate() {
            let (state, _) = train_model(&fold.fit, &run_cfg, net_cfg, seed + f as u64).map_err(|e| in_fold(f, e))?;
            let scores = predict_tiles(&state, &fold.validation).map_err(|e| in_fold(f, e))?;
            per_fold.push(
                percentile_grid
                    .iter()
                    .map(|&q| slide_auc(&fold.validation, &scores, q))
                    .collect::<Result<Vec<_>>>()
                    .map_err(|e| in_fold(f, e))?,
            );
        }
        for (qi, &q) in percentile_grid.iter().enumerate() {
            let fold_aucs: Vec<f64> = per_fold.iter().map(|v| v[qi]).collect();
            let mean_auc = fold_aucs.iter().sum::<f64>() / fold_aucs.len() as f64;
            points.push(CvPoint {
                lr,
                percentile: q,
                fold_aucs,
                mean_auc,
            });
        }
    }
    let best = select_best(&points)?;
    Ok(CvResult {
        lr: best.lr,
        percentile: best.percentile,
        points,
    })
}
