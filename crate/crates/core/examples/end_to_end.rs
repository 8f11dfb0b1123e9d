//! Every pipeline stage on a small synthetic cohort with a short training
//! budget, as the CLI would run them.
//!
//! cargo run --release --example end_to_end -- [out_dir]

use prostate_wsi::config::PipelineConfig;
use prostate_wsi::pipeline::{RunContext, Stage};

fn main() -> prostate_wsi::Result<()> {
    let out = std::env::args().nth(1).unwrap_or_else(|| "e2e_out".into());
    let cfg = PipelineConfig::default().with_overrides(&[
        "synth.n_patients=16".into(),
        "synth.cores_per_patient=3".into(),
        "train.max_partial_epochs=4".into(),
        "train.partial_epoch_iters=4".into(),
        "train.ensemble_size=2".into(),
        "train.batch_size=16".into(),
        "train.initial_lr=1e-3".into(),
        "train.lr_grid=[1e-3]".into(),
        "train.percentile_grid=[75.0]".into(),
        "network.input_mean=0.5".into(),
        "network.zero_init_last=true".into(),
        "train.tuning_max_tiles=32".into(),
        "metrics.n_boot=200".into(),
    ])?;
    let ctx = RunContext::new(cfg, out);
    for stage in Stage::ALL {
        let t = std::time::Instant::now();
        let summary = stage.run(&ctx)?;
        println!("{:<16} {:>6.1}s  {summary}", stage.as_str(), t.elapsed().as_secs_f64());
    }
    println!("report: {}", ctx.path("report.md").display());
    Ok(())
}
