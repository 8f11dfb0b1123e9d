use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use prostate_wsi::config::PipelineConfig;
use prostate_wsi::pipeline::{RunContext, Stage};
use prostate_wsi::Error;

#[derive(Parser)]
#[command(name = "prostate-wsi", version, about = "Whole-slide image pipeline for benign prostate biopsies")]
struct Cli {
    /// TOML configuration; omitted keys take their defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output (and artifact) directory.
    #[arg(long, global = true, default_value = "run")]
    out: PathBuf,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (0 = all cores).
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    /// Also extract tiles that fail QC.
    #[arg(long, global = true)]
    keep_failed_qc: bool,
    /// Fail on slides without QC-passing tiles instead of scoring them 0.5.
    #[arg(long, global = true)]
    strict: bool,
    /// Let `report` combine artifacts produced under different configs.
    #[arg(long, global = true)]
    force: bool,
    /// Override any config key, e.g. `--set train.batch_size=16`.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic cohort of slides and clinical records.
    Synth {
        #[arg(long)]
        patients: Option<usize>,
        #[arg(long)]
        cores: Option<usize>,
        #[arg(long)]
        signal: Option<f64>,
    },
    /// Tissue masks.
    Mask,
    /// Tile planning, QC and extraction.
    Tile,
    /// Stratified patient split and balance table.
    Split,
    /// Cross-validation and ensemble training.
    Train(TrainFlags),
    /// Ensemble predictions on the test patients.
    Predict,
    /// Metrics, bootstrap intervals and report tables.
    Evaluate,
    /// Grad-CAM heatmaps of the top-scoring test tiles.
    Explain,
    /// Pooled feature vectors of every tile.
    ExportFeatures,
    /// Combined report after checking artifact provenance.
    Report,
}

#[derive(Args)]
struct TrainFlags {
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    partial_epoch_iters: Option<usize>,
    #[arg(long)]
    max_partial_epochs: Option<usize>,
    #[arg(long)]
    patience: Option<usize>,
    #[arg(long)]
    min_delta: Option<f64>,
    #[arg(long)]
    initial_lr: Option<f64>,
    #[arg(long)]
    lr_factor: Option<f64>,
    #[arg(long)]
    ensemble_size: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    lr_grid: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    percentile_grid: Option<Vec<f64>>,
}

fn flag_overrides(cmd: &Command) -> Vec<String> {
    let mut v = Vec::new();
    let mut push = |k: &str, val: Option<String>| {
        if let Some(val) = val {
            v.push(format!("{k}={val}"));
        }
    };
    let list = |l: &Option<Vec<f64>>| l.as_ref().map(|x| format!("[{}]", x.iter().map(|f| format!("{f:?}")).collect::<Vec<_>>().join(",")));
    match cmd {
        Command::Synth { patients, cores, signal } => {
            push("synth.n_patients", patients.map(|x| x.to_string()));
            push("synth.cores_per_patient", cores.map(|x| x.to_string()));
            push("synth.signal_strength", signal.map(|x| format!("{x:?}")));
        }
        Command::Train(t) => {
            push("train.batch_size", t.batch_size.map(|x| x.to_string()));
            push("train.partial_epoch_iters", t.partial_epoch_iters.map(|x| x.to_string()));
            push("train.max_partial_epochs", t.max_partial_epochs.map(|x| x.to_string()));
            push("train.patience", t.patience.map(|x| x.to_string()));
            push("train.min_delta", t.min_delta.map(|x| format!("{x:?}")));
            push("train.initial_lr", t.initial_lr.map(|x| format!("{x:?}")));
            push("train.lr_factor", t.lr_factor.map(|x| format!("{x:?}")));
            push("train.ensemble_size", t.ensemble_size.map(|x| x.to_string()));
            push("train.lr_grid", list(&t.lr_grid));
            push("train.percentile_grid", list(&t.percentile_grid));
        }
        _ => {}
    }
    v
}

fn stage(cmd: &Command) -> Stage {
    match cmd {
        Command::Synth { .. } => Stage::Synth,
        Command::Mask => Stage::Mask,
        Command::Tile => Stage::Tile,
        Command::Split => Stage::Split,
        Command::Train(_) => Stage::Train,
        Command::Predict => Stage::Predict,
        Command::Evaluate => Stage::Evaluate,
        Command::Explain => Stage::Explain,
        Command::ExportFeatures => Stage::ExportFeatures,
        Command::Report => Stage::Report,
    }
}

fn context(cli: &Cli) -> Result<RunContext, Error> {
    let base = match &cli.config {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    let mut overrides = cli.overrides.clone();
    overrides.extend(flag_overrides(&cli.command));
    if let Some(s) = cli.seed {
        overrides.push(format!("seed={s}"));
    }
    let cfg = base.with_overrides(&overrides)?;
    std::fs::create_dir_all(&cli.out).map_err(|e| Error::io(&cli.out, e))?;
    Ok(RunContext {
        cfg,
        out: cli.out.clone(),
        keep_failed_qc: cli.keep_failed_qc,
        strict: cli.strict,
        force: cli.force,
    })
}

fn error_kind(e: &Error) -> &'static str {
    match e {
        Error::MissingArtifact(_) => "missing_artifact",
        Error::HashMismatch(_) => "hash_mismatch",
        Error::Numerical(_) | Error::DegenerateBootstrap { .. } => "numerical",
        Error::Config(_) => "usage",
        _ => "data",
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            if code == 1 {
                eprintln!("status=error command=none code=1 kind=usage");
            }
            return ExitCode::from(code);
        }
    };
    if cli.threads > 0 {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(cli.threads).build_global();
    }
    let st = stage(&cli.command);
    let start = Instant::now();
    let result = context(&cli).and_then(|ctx| st.run(&ctx));
    let secs = start.elapsed().as_secs_f64();
    match result {
        Ok(detail) => {
            eprintln!("status=ok command={} code=0 elapsed_s={secs:.1} {detail}", st.as_str());
            ExitCode::SUCCESS
        }
        Err(e) => {
            let code = e.exit_code();
            eprintln!(
                "status=error command={} code={code} kind={} elapsed_s={secs:.1} message={:?}",
                st.as_str(),
                error_kind(&e),
                e.to_string()
            );
            ExitCode::from(code as u8)
        }
    }
}
