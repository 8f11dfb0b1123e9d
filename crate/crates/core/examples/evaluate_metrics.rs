//! ROC analysis of simulated patient scores: AUC with a bootstrap interval,
//! sensitivity at fixed specificities and the per-ISUP table.
//!
//! cargo run --release --example evaluate_metrics

use prostate_wsi::metrics::{auc, bootstrap_ci, roc_curve, sensitivity_at_specificity, sensitivity_by_stratum};
use prostate_wsi::metrics::DEFAULT_SPEC_TARGETS;
use prostate_wsi::rng;
use rand_distr::{Distribution, Normal};

fn main() -> prostate_wsi::Result<()> {
    let mut r = rng::stream(5, "example");
    let noise = Normal::new(0.0, 1.0).unwrap();
    let n = 200;
    let mut labels = Vec::with_capacity(n);
    let mut isup = Vec::with_capacity(n);
    let mut scores = Vec::with_capacity(n);
    for i in 0..n {
        let y = u8::from(i % 2 == 0);
        let g = if y == 1 { (i / 2 % 5) as u8 + 1 } else { 0 };
        labels.push(y);
        isup.push(g);
        scores.push(0.3 * g as f64 + noise.sample(&mut r));
    }

    let roc = roc_curve(&scores, &labels)?;
    println!("AUC {:.4} (trapezoid {:.4}, {} ROC points)", auc(&scores, &labels)?, roc.trapezoid_area(), roc.len());
    let ci = bootstrap_ci(
        n,
        |idx| {
            let s: Vec<f64> = idx.iter().map(|&i| scores[i]).collect();
            let l: Vec<u8> = idx.iter().map(|&i| labels[i]).collect();
            auc(&s, &l)
        },
        2000,
        5,
    )?;
    println!("95% CI {:.4}-{:.4} from {} resamples", ci.lower, ci.upper, ci.n_boot);
    for t in DEFAULT_SPEC_TARGETS {
        let op = sensitivity_at_specificity(&scores, &labels, t)?;
        println!("spec >= {t:.2}: sensitivity {:.3} at threshold {:.3}", op.sensitivity, op.threshold);
    }
    println!();
    println!("{}", sensitivity_by_stratum(&scores, &labels, &isup, &DEFAULT_SPEC_TARGETS)?.to_markdown());
    Ok(())
}
