//! Train a two-member ensemble of the tiny network on 8x8 tiles whose
//! brightness depends on the patient label, then score held-out patients.
//!
//! cargo run --release --example train_tiny

use std::sync::Arc;

use prostate_wsi::metrics::auc;
use prostate_wsi::nnet::NetConfig;
use prostate_wsi::rng;
use prostate_wsi::train::{predict_ensemble, train_ensemble, FoldData, TileSample, TrainConfig};
use rand::Rng;

fn tiles(first_patient: usize, n_patients: usize, per_patient: usize, seed: u64) -> Vec<TileSample> {
    let mut r = rng::stream(seed, "example");
    let mut out = Vec::new();
    for p in first_patient..first_patient + n_patients {
        let label = (p % 2) as u8;
        for t in 0..per_patient {
            let mean: i32 = if label == 1 { 140 } else { 110 };
            let px: Vec<u8> = (0..8 * 8 * 3).map(|_| (mean + r.random_range(-40..40)).clamp(0, 255) as u8).collect();
            let mut cov = vec![0.0; 9];
            cov[1] = 1.0;
            cov[5] = 1.0;
            out.push(TileSample {
                patient_id: format!("P{p:03}"),
                slide_id: format!("P{p:03}_C01"),
                x: t as u32,
                y: 0,
                label,
                isup: label,
                covariates: cov,
                pixels: Arc::new(px),
                size: 8,
            });
        }
    }
    out
}

fn main() -> prostate_wsi::Result<()> {
    let data = FoldData {
        train: tiles(0, 16, 8, 1),
        tuning: tiles(16, 6, 8, 2),
    };
    let test = tiles(22, 8, 8, 3);
    let cfg = TrainConfig {
        batch_size: 16,
        partial_epoch_iters: 8,
        max_partial_epochs: 25,
        patience: 4,
        initial_lr: 3e-3,
        ensemble_size: 2,
        ..TrainConfig::default()
    };
    let members = train_ensemble(&data, &cfg, &NetConfig::tiny(), 11)?;
    for (i, (_, log)) in members.iter().enumerate() {
        println!(
            "member {i}: {} partial epochs ({}), tuning loss {:.4} -> {:.4} at epoch {}",
            log.epochs.len(),
            log.stop_reason.as_str(),
            log.initial_tune_loss,
            log.best_tune_loss,
            log.best_epoch
        );
    }
    let states: Vec<_> = members.into_iter().map(|(s, _)| s).collect();
    let scores = predict_ensemble(&states, &test)?;
    let labels: Vec<u8> = test.iter().map(|t| t.label).collect();
    println!("held-out tile AUC {:.3}", auc(&scores, &labels)?);
    Ok(())
}
