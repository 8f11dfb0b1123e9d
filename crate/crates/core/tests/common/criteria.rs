//! One check per acceptance criterion. Each returns a short detail string
//! on success and the first violation on failure.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use image::RgbImage;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use statrs::distribution::{ContinuousCDF, Normal as StdNormal};

use prostate_wsi::aggregate::{median, patient_score, percentile, slide_score};
use prostate_wsi::cohort::stats::{chi_square, mann_whitney};
use prostate_wsi::config::{PatientRule, PipelineConfig};
use prostate_wsi::imaging::{laplacian, luma, pool2x2, variance_of_laplacian};
use prostate_wsi::interpret::{cam_coarse, grad_cam, upsample_bilinear};
use prostate_wsi::metrics::{
    auc, bootstrap_ci, logistic_loss_and_grad, roc_curve, sensitivity_at_specificity,
    sensitivity_by_stratum, MetricsReport, DEFAULT_SPEC_TARGETS,
};
use prostate_wsi::nnet::{DropoutMasks, NetConfig, NetState, Network, OptimizerKind, ParamKind};
use prostate_wsi::pipeline::{self, RunContext, Stage};
use prostate_wsi::tissue::{otsu_threshold, pen_mark_mask};
use prostate_wsi::train::augment::to_input;
use prostate_wsi::train::{run_schedule, Dihedral, EpochRunner, StopReason, TileSample, TrainConfig};

use super::{labels_both, oracles, rng, tied_scores};

pub type Outcome = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($arg:tt)*) => {
        if !$cond {
            return Err(format!($($arg)*));
        }
    };
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol || (a.is_infinite() && a == b)
}

// ---------------------------------------------------------------- 1

pub fn statistics_oracles() -> Outcome {
    let mut r = rng(101, "criterion1");
    let n_inst = 1000;
    for i in 0..n_inst {
        let n = r.random_range(2..=50);
        let labels = labels_both(&mut r, n);
        let scores: Vec<f64> = if i % 2 == 0 { tied_scores(&mut r, n) } else { (0..n).map(|_| r.random()).collect() };

        let a = auc(&scores, &labels).map_err(|e| e.to_string())?;
        let o = oracles::auc_pairs(&scores, &labels);
        ensure!(close(a, o, 1e-12), "auc instance {i}: {a} vs {o}");

        let roc = roc_curve(&scores, &labels).map_err(|e| e.to_string())?;
        let pts = oracles::roc_points(&scores, &labels);
        ensure!(roc.len() == pts.len(), "roc instance {i}: {} points vs {}", roc.len(), pts.len());
        for (k, &(t, f, tp)) in pts.iter().enumerate() {
            ensure!(
                roc.thresholds[k] == t && close(roc.fpr[k], f, 1e-12) && close(roc.tpr[k], tp, 1e-12),
                "roc instance {i} point {k}"
            );
        }
        let area = roc.trapezoid_area();
        ensure!(close(area, oracles::trapezoid(&pts), 1e-12), "trapezoid instance {i}");
        ensure!(close(area, o, 1e-12), "trapezoid vs pair AUC instance {i}: {area} vs {o}");

        let mut targets = DEFAULT_SPEC_TARGETS.to_vec();
        targets.push(r.random_range(0.01..=1.0));
        for t in targets {
            let op = sensitivity_at_specificity(&scores, &labels, t).map_err(|e| e.to_string())?;
            let (s, sp, th) = oracles::sens_at_spec(&scores, &labels, t).ok_or("oracle found no feasible threshold")?;
            ensure!(
                close(op.sensitivity, s, 1e-12) && close(op.specificity, sp, 1e-12) && op.threshold == th,
                "sens@spec {t} instance {i}: ({}, {}, {}) vs ({s}, {sp}, {th})",
                op.sensitivity,
                op.specificity,
                op.threshold
            );
        }

        let q = if i % 10 == 0 { [0.0, 100.0, 75.0][i / 10 % 3] } else { r.random_range(0.0..=100.0) };
        let p = percentile(&scores, q).map_err(|e| e.to_string())?;
        ensure!(close(p, oracles::percentile(&scores, q), 1e-12), "percentile q={q} instance {i}");
        let m = median(&scores).map_err(|e| e.to_string())?;
        ensure!(close(m, oracles::median(&scores), 1e-12), "median instance {i}");

        let (rows, cols) = (r.random_range(2..=5), r.random_range(2..=5));
        let table: Vec<Vec<f64>> =
            (0..rows).map(|_| (0..cols).map(|_| r.random_range(0..25u32) as f64).collect()).collect();
        let cs = chi_square(&table).map_err(|e| e.to_string())?;
        let (stat, df) = oracles::chi_square_stat(&table);
        ensure!(
            cs.df == df && close(cs.statistic, stat, 1e-12 * stat.max(1.0)),
            "chi-square statistic instance {i}: {} vs {stat}",
            cs.statistic
        );
        if df > 0 {
            let p = oracles::chi_square_sf(stat, df);
            ensure!(close(cs.p_value, p, 1e-12), "chi-square p instance {i}: {} vs {p} (df {df})", cs.p_value);
        }

        let (n1, n2) = (r.random_range(1..=8), r.random_range(1..=8));
        let grid = r.random_range(3..20);
        let ga: Vec<f64> = (0..n1).map(|_| r.random_range(0..grid) as f64).collect();
        let gb: Vec<f64> = (0..n2).map(|_| r.random_range(0..grid) as f64).collect();
        let mw = mann_whitney(&ga, &gb).map_err(|e| e.to_string())?;
        let (u, p) = oracles::mann_whitney_exact(&ga, &gb);
        ensure!(mw.exact, "Mann-Whitney instance {i} not exact");
        ensure!(close(mw.u, u, 1e-12) && close(mw.p_value, p, 1e-12), "Mann-Whitney instance {i}: ({}, {}) vs ({u}, {p})", mw.u, mw.p_value);
    }
    Ok(format!("{n_inst} instances x 7 statistics"))
}

// ---------------------------------------------------------------- 2

fn random_rgb(r: &mut impl Rng, w: u32, h: u32) -> RgbImage {
    let smooth = r.random_bool(0.5);
    let base: [u8; 3] = r.random();
    RgbImage::from_fn(w, h, |_, _| {
        if smooth {
            image::Rgb(base.map(|c| c.saturating_add(r.random_range(0..4))))
        } else {
            image::Rgb(r.random())
        }
    })
}

pub fn imaging_oracles() -> Outcome {
    let mut r = rng(202, "criterion2");
    for i in 0..1000 {
        let mut hist = [0u64; 256];
        match i % 4 {
            0 => {
                for h in hist.iter_mut() {
                    *h = r.random_range(0..50);
                }
            }
            1 => {
                for _ in 0..r.random_range(1..4) {
                    hist[r.random_range(0..256)] += r.random_range(1..1000);
                }
            }
            _ => {
                let m1 = r.random_range(0..256) as f64;
                let m2 = r.random_range(0..256) as f64;
                let n1 = Normal::new(m1, r.random_range(2.0..40.0)).unwrap();
                let n2 = Normal::new(m2, r.random_range(2.0..40.0)).unwrap();
                for k in 0..r.random_range(10..5000) {
                    let v: f64 = if k % 3 == 0 { n1.sample(&mut r) } else { n2.sample(&mut r) };
                    hist[v.round().clamp(0.0, 255.0) as usize] += 1;
                }
            }
        }
        let t = otsu_threshold(&hist).map_err(|e| e.to_string())?;
        let o = oracles::otsu(&hist);
        ensure!(t == o, "otsu histogram {i}: {t} vs {o}");
    }
    for i in 0..300 {
        let (w, h) = (r.random_range(1..40u32), r.random_range(1..40u32));
        let img = random_rgb(&mut r, w, h);
        let gray: Vec<u8> = img.pixels().map(|p| luma(p.0)).collect();
        let (wu, hu) = (w as usize, h as usize);
        ensure!(laplacian(&gray, wu, hu) == oracles::laplacian(&gray, wu, hu), "laplacian image {i} ({w}x{h})");
        ensure!(pen_mark_mask(&img, 20) == oracles::pen_mask(&gray, wu, hu, 20), "pen mask image {i} ({w}x{h})");
        ensure!(pool2x2(&img) == oracles::pool2x2(&img), "2x2 pooling image {i} ({w}x{h})");
        if w >= 3 && h >= 3 {
            let v = variance_of_laplacian(&gray, wu, hu).map_err(|e| e.to_string())?;
            let o = oracles::laplacian_variance(&gray, wu, hu);
            ensure!(close(v, o, 1e-12 * o.max(1.0)), "Laplacian variance image {i}: {v} vs {o}");
        }
    }
    Ok("1000 histograms, 300 images".into())
}

// ---------------------------------------------------------------- 3

pub fn gradient_fidelity() -> Outcome {
    let net = Network::new(NetConfig::tiny()).map_err(|e| e.to_string())?;
    let mut r = rng(303, "criterion3");
    let mut p = net.init_params(&mut r);
    for t in net.layout.iter().filter(|t| t.kind == ParamKind::Bias) {
        for v in &mut p[t.range()] {
            *v = r.random_range(-0.1..0.1);
        }
    }
    let n = 4;
    let xs: Vec<Vec<f64>> = (0..n).map(|_| (0..net.sample_len()).map(|_| r.random()).collect()).collect();
    let cs: Vec<Vec<f64>> = (0..n)
        .map(|_| {
            let mut c = vec![0.0; 9];
            c[r.random_range(0..5)] = 1.0;
            c[5 + r.random_range(0..4)] = 1.0;
            c
        })
        .collect();
    let ys: Vec<f64> = (0..n).map(|i| (i % 2) as f64).collect();
    let masks: Vec<DropoutMasks> = (0..n).map(|_| net.draw_masks(&mut r)).collect();
    let xr: Vec<&[f64]> = xs.iter().map(|v| v.as_slice()).collect();
    let cr: Vec<&[f64]> = cs.iter().map(|v| v.as_slice()).collect();
    let loss = |p: &[f64]| net.loss_and_grad(p, &xr, &cr, &ys, &masks).map(|x| x.0);
    let (_, g) = net.loss_and_grad(&p, &xr, &cr, &ys, &masks).map_err(|e| e.to_string())?;
    let h = 1e-4;
    let mut worst = 0.0f64;
    for t in &net.layout {
        let (mut num, mut ana) = (Vec::new(), Vec::new());
        for i in t.range() {
            let orig = p[i];
            p[i] = orig + h;
            let lp = loss(&p).map_err(|e| e.to_string())?;
            p[i] = orig - h;
            let lm = loss(&p).map_err(|e| e.to_string())?;
            p[i] = orig;
            num.push((lp - lm) / (2.0 * h));
            ana.push(g[i]);
        }
        let diff = num.iter().zip(&ana).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let scale = num.iter().map(|a| a * a).sum::<f64>().sqrt().max(ana.iter().map(|a| a * a).sum::<f64>().sqrt());
        let rel = if scale < 1e-10 { diff } else { diff / scale };
        ensure!(rel < 1e-4, "{}: relative error {rel:e}", t.name);
        worst = worst.max(rel);
    }

    let xs: Vec<Vec<f64>> = (0..40).map(|_| (0..9).map(|_| r.random_range(0..2) as f64).collect()).collect();
    let ys: Vec<u8> = (0..40).map(|_| r.random_range(0..2)).collect();
    let theta: Vec<f64> = (0..10).map(|_| r.random_range(-1.0..1.0)).collect();
    let (_, lg) = logistic_loss_and_grad(&theta, &xs, &ys);
    let mut worst_lr = 0.0f64;
    for j in 0..theta.len() {
        let (mut a, mut b) = (theta.clone(), theta.clone());
        a[j] += 1e-5;
        b[j] -= 1e-5;
        let fd = (logistic_loss_and_grad(&a, &xs, &ys).0 - logistic_loss_and_grad(&b, &xs, &ys).0) / 2e-5;
        let rel = (fd - lg[j]).abs() / fd.abs().max(lg[j].abs()).max(1e-8);
        worst_lr = worst_lr.max(rel);
    }
    ensure!(worst_lr < 1e-5, "logistic gradient relative error {worst_lr:e}");
    Ok(format!("{} parameter groups, worst {worst:.1e}; logistic {worst_lr:.1e}", net.layout.len()))
}

// ---------------------------------------------------------------- 4

pub fn pipeline_constants() -> Outcome {
    let parsed = PipelineConfig::from_toml("").map_err(|e| e.to_string())?;
    ensure!(parsed == PipelineConfig::default(), "empty config does not parse to the defaults");
    let c = parsed;
    let checks: [(&str, f64, f64); 16] = [
        ("tiling.window", c.tiling.window as f64, 598.0),
        ("tiling.stride", c.tiling.stride as f64, 299.0),
        ("tiling.min_tissue_fraction", c.tiling.min_tissue_fraction, 0.20),
        ("tiling.min_laplacian_variance", c.tiling.min_laplacian_variance, 200.0),
        ("segmentation.pen_abs_laplacian_threshold", c.segmentation.pen_abs_laplacian_threshold as f64, 20.0),
        ("segmentation.hue_threshold", c.segmentation.hue_threshold, 0.75),
        ("segmentation.disk_radius", c.segmentation.disk_radius as f64, 6.0),
        ("train.batch_size", c.train.batch_size as f64, 170.0),
        ("train.partial_epoch_iters", c.train.partial_epoch_iters as f64, 300.0),
        ("train.max_partial_epochs", c.train.max_partial_epochs as f64, 400.0),
        ("train.patience", c.train.patience as f64, 35.0),
        ("train.min_delta", c.train.min_delta, 1e-4),
        ("train.initial_lr", c.train.initial_lr, 1e-5),
        ("train.lr_factor", c.train.lr_factor, 0.5),
        ("train.ensemble_size", c.train.ensemble_size as f64, 10.0),
        ("aggregation.slide_percentile", c.aggregation.slide_percentile, 75.0),
    ];
    for (name, got, want) in checks {
        ensure!(got == want, "{name} = {got}, expected {want}");
    }
    ensure!(c.aggregation.patient_rule == PatientRule::Median, "patient rule is not the median");
    ensure!(c.metrics.n_boot == 2000, "n_boot = {}", c.metrics.n_boot);
    ensure!(c.tiling.out_size * 2 == c.tiling.window, "out_size is not window / 2");
    let echo = PipelineConfig::from_toml(&c.to_toml().map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
    ensure!(echo == c, "TOML echo differs from the defaults");
    Ok("19 constants and TOML round trip".into())
}

// ---------------------------------------------------------------- 5

struct Frozen {
    loss: f64,
    calls: usize,
}

impl EpochRunner for Frozen {
    fn initial_tune_loss(&mut self) -> prostate_wsi::Result<f64> {
        Ok(self.loss)
    }
    fn run_epoch(&mut self, _epoch: usize, _lr: f64) -> prostate_wsi::Result<(f64, f64)> {
        self.calls += 1;
        Ok((self.loss, self.loss))
    }
    fn keep_best(&mut self, _epoch: usize) {}
}

pub fn schedule_semantics() -> Outcome {
    let cfg = TrainConfig::default();
    let mut stub = Frozen { loss: 0.7, calls: 0 };
    let log = run_schedule(&cfg, &mut stub).map_err(|e| e.to_string())?;
    ensure!(log.epochs.len() == 70 && stub.calls == 70, "stopped after {} partial epochs", log.epochs.len());
    ensure!(log.stop_reason == StopReason::EarlyStop, "stop reason {:?}", log.stop_reason);
    let halvings: Vec<usize> = log.epochs.windows(2).filter(|w| w[1].lr < w[0].lr).map(|w| w[0].partial_epoch).collect();
    ensure!(halvings == vec![35], "lr halved after epochs {halvings:?}");
    ensure!(log.epochs[35].lr == cfg.initial_lr * cfg.lr_factor, "second window lr {}", log.epochs[35].lr);

    // A stub that keeps improving by more than min_delta never plateaus.
    struct Improving(f64);
    impl EpochRunner for Improving {
        fn initial_tune_loss(&mut self) -> prostate_wsi::Result<f64> {
            Ok(self.0)
        }
        fn run_epoch(&mut self, _: usize, _: f64) -> prostate_wsi::Result<(f64, f64)> {
            self.0 -= 1e-3;
            Ok((self.0, self.0))
        }
        fn keep_best(&mut self, _: usize) {}
    }
    let log = run_schedule(&cfg, &mut Improving(10.0)).map_err(|e| e.to_string())?;
    ensure!(log.epochs.len() == 400 && log.stop_reason == StopReason::MaxEpochs, "improving run: {} epochs", log.epochs.len());
    Ok("halve at 35, stop at 70; cap 400".into())
}

// ---------------------------------------------------------------- 6

pub struct EndToEnd {
    pub patient_auc: f64,
    pub control_auc: f64,
    pub ci_deterministic: bool,
    pub secs: f64,
    pub dir: PathBuf,
}

fn desk_config(extra: &[&str]) -> Result<PipelineConfig, String> {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/desk.toml");
    let base = PipelineConfig::load(&path).map_err(|e| e.to_string())?;
    let mut ov: Vec<String> = [
        "seed=1",
        "synth.n_patients=60",
        "synth.cores_per_patient=10",
        "synth.signal_strength=1.0",
        "train.ensemble_size=3",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    ov.extend(extra.iter().map(|s| s.to_string()));
    let cfg = base.with_overrides(&ov).map_err(|e| e.to_string())?;
    if cfg.network.feature_dim() != 64 {
        return Err(format!("feature width {} instead of 64", cfg.network.feature_dim()));
    }
    Ok(cfg)
}

fn run(ctx: &RunContext, stages: &[Stage]) -> Result<(), String> {
    for s in stages {
        s.run(ctx).map_err(|e| format!("{}: {e}", s.as_str()))?;
    }
    Ok(())
}

/// Links or copies the data-stage artifacts of `from` into `to`.
fn share_data(from: &Path, to: &Path) -> std::io::Result<()> {
    std::fs::create_dir_all(to)?;
    for entry in std::fs::read_dir(from)? {
        let entry = entry?;
        let name = entry.file_name();
        let n = name.to_string_lossy();
        if n == pipeline::MODELS_DIR || n.starts_with("predictions") || n.starts_with("metrics") || n.starts_with("report") {
            continue;
        }
        if entry.file_type()?.is_dir() && n != pipeline::PROVENANCE_DIR {
            std::os::unix::fs::symlink(entry.path(), to.join(&name))?;
        } else if entry.file_type()?.is_dir() {
            std::fs::create_dir_all(to.join(&name))?;
            for f in std::fs::read_dir(entry.path())? {
                let f = f?;
                std::fs::copy(f.path(), to.join(&name).join(f.file_name()))?;
            }
        } else {
            std::fs::copy(entry.path(), to.join(&name))?;
        }
    }
    Ok(())
}

pub fn end_to_end(root: &Path) -> Result<EndToEnd, String> {
    let start = Instant::now();
    let main_dir = root.join("signal");
    let ctx = RunContext::new(desk_config(&[])?, &main_dir);
    run(
        &ctx,
        &[Stage::Synth, Stage::Mask, Stage::Tile, Stage::Split, Stage::Train, Stage::Predict, Stage::Evaluate, Stage::Report],
    )?;
    let first = MetricsReport::read(&main_dir.join(prostate_wsi::metrics::report::METRICS_JSON)).map_err(|e| e.to_string())?;
    let again = pipeline::evaluate(&ctx).map_err(|e| e.to_string())?;
    let ci_deterministic = first == again;
    let patient_auc = first.patient_auc().ok_or("no patient-level AUC")?;

    let control_dir = root.join("shuffled");
    share_data(&main_dir, &control_dir).map_err(|e| e.to_string())?;
    let cctx = RunContext::new(desk_config(&["train.shuffle_labels=true"])?, &control_dir);
    run(&cctx, &[Stage::Train, Stage::Predict, Stage::Evaluate])?;
    let control = MetricsReport::read(&control_dir.join(prostate_wsi::metrics::report::METRICS_JSON)).map_err(|e| e.to_string())?;
    Ok(EndToEnd {
        patient_auc,
        control_auc: control.patient_auc().ok_or("no control AUC")?,
        ci_deterministic,
        secs: start.elapsed().as_secs_f64(),
        dir: main_dir,
    })
}

// ---------------------------------------------------------------- 7

pub fn bootstrap_coverage() -> Outcome {
    let true_auc = 0.8;
    let d = std::f64::consts::SQRT_2 * StdNormal::new(0.0, 1.0).unwrap().inverse_cdf(true_auc);
    let reps = 200;
    let mut covered = 0;
    for rep in 0..reps {
        let mut r = rng(700 + rep, "criterion7");
        let labels: Vec<u8> = (0..100).map(|i| u8::from(i < 50)).collect();
        let z = Normal::new(0.0, 1.0).unwrap();
        let scores: Vec<f64> = labels.iter().map(|&l| z.sample(&mut r) + if l == 1 { d } else { 0.0 }).collect();
        let ci = bootstrap_ci(
            scores.len(),
            |ix| {
                let s: Vec<f64> = ix.iter().map(|&i| scores[i]).collect();
                let l: Vec<u8> = ix.iter().map(|&i| labels[i]).collect();
                auc(&s, &l)
            },
            2000,
            rep,
        )
        .map_err(|e| e.to_string())?;
        ensure!(ci.lower <= ci.upper && ci.lower >= 0.0 && ci.upper <= 1.0, "interval {ci:?}");
        if ci.lower <= true_auc && true_auc <= ci.upper {
            covered += 1;
        }
    }
    let rate = covered as f64 / reps as f64;
    ensure!(rate >= 0.90, "coverage {rate:.3} over {reps} repetitions");
    Ok(format!("coverage {rate:.3} over {reps} repetitions"))
}

// ---------------------------------------------------------------- 8

pub fn aggregation_properties() -> Outcome {
    let mut r = rng(808, "criterion8");
    let trials = 10_000;
    let err = |e: prostate_wsi::Error| e.to_string();
    for t in 0..trials {
        let n = r.random_range(1..=30);
        let q = match t % 5 {
            0 => 0.0,
            1 => 100.0,
            2 => 75.0,
            _ => r.random_range(0.0..=100.0),
        };
        let tiles: Vec<f64> = if t % 3 == 0 { tied_scores(&mut r, n) } else { (0..n).map(|_| r.random()).collect() };
        let s = slide_score("s", &tiles, q).map_err(err)?;

        let mut bumped = tiles.clone();
        let k = r.random_range(0..n);
        bumped[k] = (bumped[k] + r.random_range(0.0..0.5)).min(1.0);
        ensure!(slide_score("s", &bumped, q).map_err(err)? >= s, "trial {t}: tile increase lowered the slide score");

        let mut shuffled = tiles.clone();
        rand::seq::SliceRandom::shuffle(shuffled.as_mut_slice(), &mut r);
        ensure!(slide_score("s", &shuffled, q).map_err(err)? == s, "trial {t}: tile order changed the slide score");

        let mx = tiles.iter().copied().fold(f64::MIN, f64::max);
        let mn = tiles.iter().copied().fold(f64::MAX, f64::min);
        ensure!(slide_score("s", &tiles, 100.0).map_err(err)? == mx, "trial {t}: q=100 is not the max");
        ensure!(slide_score("s", &tiles, 0.0).map_err(err)? == mn, "trial {t}: q=0 is not the min");
        ensure!((mn..=mx).contains(&s), "trial {t}: slide score outside tile range");

        let m = r.random_range(1..=12);
        let slides: Vec<f64> = (0..m).map(|_| r.random()).collect();
        let p = patient_score("p", &slides).map_err(err)?;
        let mut up = slides.clone();
        let k = r.random_range(0..m);
        up[k] += r.random_range(0.0..0.5);
        ensure!(patient_score("p", &up).map_err(err)? >= p, "trial {t}: slide increase lowered the patient score");
        let mut sh = slides.clone();
        rand::seq::SliceRandom::shuffle(sh.as_mut_slice(), &mut r);
        ensure!(patient_score("p", &sh).map_err(err)? == p, "trial {t}: slide order changed the patient score");

        // Ranking of slides under a strictly increasing transform: any q
        // for equal tile counts (the transform here is affine, so
        // interpolation commutes with it), q in {0, 100} otherwise.
        let f = |x: f64| 3.0 * x + 1.0;
        let equal_n = t % 2 == 0;
        let qq = if equal_n { q } else { [0.0, 100.0][t % 4 / 2] };
        let groups: Vec<Vec<f64>> = (0..4)
            .map(|_| {
                let len = if equal_n { n } else { r.random_range(1..=30) };
                (0..len).map(|_| r.random()).collect()
            })
            .collect();
        let raw: Vec<f64> = groups.iter().map(|g| slide_score("g", g, qq)).collect::<Result<_, _>>().map_err(err)?;
        let mapped: Vec<f64> = groups
            .iter()
            .map(|g| slide_score("g", &g.iter().map(|&x| f(x)).collect::<Vec<_>>(), qq))
            .collect::<Result<_, _>>()
            .map_err(err)?;
        for a in 0..4 {
            for b in 0..4 {
                if raw[a] < raw[b] && !(mapped[a] < mapped[b]) && (raw[b] - raw[a]) > 1e-12 {
                    return Err(format!("trial {t}: ranking changed under a monotone transform"));
                }
            }
        }
    }
    Ok(format!("{trials} trials, 0 violations"))
}

// ---------------------------------------------------------------- 9

fn random_tile(r: &mut impl Rng, n: usize) -> TileSample {
    let mut cov = vec![0.0; 9];
    cov[r.random_range(0..5)] = 1.0;
    cov[5 + r.random_range(0..4)] = 1.0;
    TileSample {
        patient_id: "P".into(),
        slide_id: "P_C01".into(),
        x: 0,
        y: 0,
        label: 0,
        isup: 0,
        covariates: cov,
        pixels: Arc::new((0..n * n * 3).map(|_| r.random()).collect()),
        size: n,
    }
}

pub fn grad_cam_checks() -> Outcome {
    let mut r = rng(909, "criterion9");
    for i in 0..200 {
        let (k, plane) = (r.random_range(1..9), r.random_range(1..30));
        let acts: Vec<f64> = (0..k * plane).map(|_| r.random_range(0.0..3.0)).collect();
        let grads: Vec<f64> = (0..k * plane).map(|_| r.random_range(-1.0..1.0)).collect();
        let a = cam_coarse(&acts, &grads, plane);
        let o = oracles::grad_cam_coarse(&acts, &grads, k, plane);
        ensure!(a.iter().zip(&o).all(|(x, y)| (x - y).abs() <= 1e-12), "coarse map trace {i}");
        ensure!(cam_coarse(&acts, &vec![0.0; k * plane], plane).iter().all(|&v| v == 0.0), "zero gradient trace {i}");
    }

    let mut zeroed = NetState::new(NetConfig::tiny(), OptimizerKind::Adam, 9).map_err(|e| e.to_string())?;
    let fc = zeroed.net.fc2;
    zeroed.params[fc.w_off..fc.b_off + 1].fill(0.0);
    let z = grad_cam(&zeroed, &random_tile(&mut r, 8)).map_err(|e| e.to_string())?;
    ensure!(z.values.iter().all(|&v| v == 0.0), "zero output layer gave a non-zero heatmap");

    let state = NetState::new(NetConfig::tiny(), OptimizerKind::Adam, 10).map_err(|e| e.to_string())?;
    let mut nonzero = 0;
    for i in 0..100 {
        let tile = random_tile(&mut r, 8);
        let cam = grad_cam(&state, &tile).map_err(|e| e.to_string())?;
        ensure!(cam.values.iter().all(|v| (0.0..=1.0).contains(v)), "tile {i}: heatmap outside [0, 1]");

        let x = to_input(&tile.pixels, 8, Dihedral::IDENTITY);
        let trace = state.net.forward_sample(&state.params, &x, &tile.covariates, None).map_err(|e| e.to_string())?;
        let g = state.net.final_map_gradient(&state.params, &trace, 1.0);
        let (map, (h, w)) = trace.final_map();
        let coarse = oracles::grad_cam_coarse(map, &g, map.len() / (h * w), h * w);
        let mut up = upsample_bilinear(&coarse, h, w, 8);
        let mx = up.iter().copied().fold(0.0, f64::max);
        if mx > 0.0 {
            nonzero += 1;
            up.iter_mut().for_each(|v| *v /= mx);
            ensure!(cam.values.iter().copied().fold(0.0, f64::max) == 1.0, "tile {i}: normalised max is not 1");
        }
        ensure!(cam.values.iter().zip(&up).all(|(a, b)| (a - b).abs() <= 1e-12), "tile {i}: heatmap differs from oracle");
    }
    Ok(format!("200 random traces, 100 tiles ({nonzero} with a non-zero map)"))
}

// ---------------------------------------------------------------- 10

fn table_rows(md: &str) -> Option<Vec<Vec<String>>> {
    let start = md.find("| Specificity | ISUP 1")?;
    Some(
        md[start..]
            .lines()
            .take_while(|l| l.starts_with('|'))
            .map(|l| l.trim_matches('|').split('|').map(|c| c.trim().to_string()).collect())
            .collect(),
    )
}

fn check_table(md: &str, origin: &str) -> Result<(), String> {
    let rows = table_rows(md).ok_or(format!("{origin}: no sensitivity-by-ISUP table"))?;
    let header = ["Specificity", "ISUP 1", "ISUP 2", "ISUP 3", "ISUP 4", "ISUP 5"];
    ensure!(rows[0] == header, "{origin}: header {:?}", rows[0]);
    ensure!(rows.len() == 6, "{origin}: {} table lines", rows.len());
    ensure!(rows[1].iter().all(|c| c.chars().all(|ch| ch == '-' || ch == ':')), "{origin}: separator row");
    let specs: Vec<&str> = rows[2..].iter().map(|r| r[0].as_str()).collect();
    ensure!(specs == ["0.99", "0.98", "0.95", "0.90"], "{origin}: rows {specs:?}");
    for row in &rows[2..] {
        ensure!(row.len() == 6, "{origin}: row {row:?}");
        for cell in &row[1..] {
            ensure!(cell == "N/A" || cell.parse::<f64>().is_ok_and(|v| (0.0..=1.0).contains(&v)), "{origin}: cell {cell:?}");
        }
    }
    Ok(())
}

pub fn report_shape(pipeline_report: Option<&Path>) -> Outcome {
    let mut r = rng(1010, "criterion10");
    let n = 120;
    let labels = labels_both(&mut r, n);
    let isup: Vec<u8> = labels.iter().map(|&l| if l == 1 { r.random_range(1..=4) } else { 0 }).collect();
    let scores: Vec<f64> = isup.iter().map(|&g| g as f64 * 0.2 + r.random::<f64>()).collect();
    let table = sensitivity_by_stratum(&scores, &labels, &isup, &DEFAULT_SPEC_TARGETS).map_err(|e| e.to_string())?;
    let md = table.to_markdown();
    check_table(&md, "stratum table")?;
    ensure!(table_rows(&md).unwrap()[2..].iter().all(|row| row[5] == "N/A"), "ISUP 5 column should be N/A without grade-5 patients");
    let mut detail = String::from("synthetic table");
    if let Some(p) = pipeline_report {
        let text = std::fs::read_to_string(p).map_err(|e| format!("{}: {e}", p.display()))?;
        check_table(&text, "report.md")?;
        write!(detail, " and {}", p.file_name().unwrap().to_string_lossy()).unwrap();
    }
    Ok(detail)
}
