use std::path::Path;
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_prostate-wsi");

fn run(args: &[&str]) -> Output {
    Command::new(BIN).args(args).env("RUST_LOG", "warn").output().expect("binary runs")
}

fn last_line(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).lines().last().unwrap_or_default().to_string()
}

fn field<'a>(line: &'a str, key: &str) -> Option<&'a str> {
    line.split_whitespace().find_map(|kv| kv.strip_prefix(key)?.strip_prefix('='))
}

#[test]
fn usage_errors_exit_1() {
    for args in [&[][..], &["frobnicate"][..], &["--threads", "x", "mask"][..]] {
        let o = run(args);
        assert_eq!(o.status.code(), Some(1), "{args:?}");
        let l = last_line(&o);
        assert_eq!(field(&l, "status"), Some("error"));
        assert_eq!(field(&l, "code"), Some("1"));
    }
}

#[test]
fn unknown_config_key_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["--out", dir.path().to_str().unwrap(), "--set", "train.nope=3", "split"]);
    assert_eq!(o.status.code(), Some(1));
    assert_eq!(field(&last_line(&o), "kind"), Some("usage"));
}

#[test]
fn missing_inputs_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["--out", dir.path().to_str().unwrap(), "predict"]);
    assert_eq!(o.status.code(), Some(2));
    let l = last_line(&o);
    assert_eq!(field(&l, "command"), Some("predict"));
    assert_eq!(field(&l, "kind"), Some("missing_artifact"));
}

#[test]
fn help_exits_0() {
    let o = run(&["--help"]);
    assert_eq!(o.status.code(), Some(0));
    let text = String::from_utf8_lossy(&o.stdout);
    for sub in ["synth", "mask", "tile", "split", "train", "predict", "evaluate", "explain", "export-features", "report"] {
        assert!(text.contains(sub), "{sub} missing from help");
    }
}

const SMALL: &str = r#"
seed = 3

[synth]
n_patients = 10
cores_per_patient = 1
width = 700
height = 700

[train]
batch_size = 2
partial_epoch_iters = 1
max_partial_epochs = 1
ensemble_size = 1
lr_grid = [1e-3]
percentile_grid = [75.0]
tuning_max_tiles = 4

[metrics]
n_boot = 50

[explain]
max_tiles = 1
"#;

#[test]
fn small_pipeline_through_the_cli() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("small.toml");
    std::fs::write(&cfg, SMALL).unwrap();
    let out = dir.path().join("run");
    let base = ["--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()];
    for stage in ["synth", "mask", "tile", "split", "train", "predict", "evaluate", "explain", "export-features", "report"] {
        let mut args = base.to_vec();
        args.push(stage);
        let o = run(&args);
        let l = last_line(&o);
        assert_eq!(o.status.code(), Some(0), "{stage}: {}", String::from_utf8_lossy(&o.stderr));
        assert_eq!(field(&l, "status"), Some("ok"), "{l}");
        assert_eq!(field(&l, "command"), Some(stage));
    }
    for f in ["cohort.csv", "tiles.csv", "splits.csv", "predictions_patient.csv", "metrics_report.json", "report.md", "features.csv"] {
        assert!(Path::new(&out).join(f).exists(), "{f} missing");
    }
    assert!(std::fs::read_dir(out.join("gradcam")).unwrap().count() > 0);

    // Same artifacts under a different seed: report refuses unless forced.
    let mut args = base.to_vec();
    args.extend(["--seed", "4", "report"]);
    let o = run(&args);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(field(&last_line(&o), "kind"), Some("hash_mismatch"));
    args.insert(args.len() - 1, "--force");
    assert_eq!(run(&args).status.code(), Some(0));
}
