//! File-based pipeline stages. Each stage reads the artifacts of earlier
//! stages from the output directory and writes its own next to them:
//!
//! ```text
//! cohort.csv, slides/<slide_id>/       synth
//! masks/<slide_id>.png, masks.csv      mask
//! tiles/<slide_id>_<x>_<y>.png, tiles.csv
//! splits.csv, balance.md               split
//! models/member_NN.ckpt, train_log_NN.csv, selection.json, training.json
//! predictions_{tile,slide,patient}.csv predict
//! metrics_report.json, report.md       evaluate / report
//! gradcam/*.png                        explain
//! features.csv                         export-features
//! provenance/<stage>.json              config hash + seed of every stage
//! ```

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use log::{info, warn};
use rayon::prelude::*;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::aggregate::{slides_to_patients, tiles_to_slides, ScoreLevel, ScoreRow, ScoreTable, SlideKey};
use crate::cohort::split::{fold_ids, inner_split, read_splits_csv, write_splits_csv};
use crate::cohort::{
    balance_report, encode_covariates, kfold, patients_from_rows, read_cohort_csv, stratified_split, CohortRow, Partition,
    PatientRecord,
};
use crate::config::PipelineConfig;
use crate::error::{Error, Result};
use crate::interpret::{export_features as features_of, grad_cam, write_features_csv, FEATURES_CSV};
use crate::metrics::report::{EvaluationInput, METRICS_JSON, REPORT_MD};
use crate::metrics::{evaluate as evaluate_metrics, fit_logistic_baseline, MetricsReport};
use crate::nnet::NetState;
use crate::slide::synth::COHORT_CSV;
use crate::slide::{SlidePyramid, SyntheticCohort};
use crate::tiler::{extract_tile, plan_tiles, read_tiles_csv, sort_records, write_tiles_csv, TileRecord, TILES_CSV};
use crate::tissue::{compute_tissue_mask, MaskIndexRow, TissueMask};
use crate::train::{cross_validate, predict_ensemble, train_ensemble, CvFold, CvResult, FoldData, TileSample};

pub const MASKS_DIR: &str = "masks";
pub const MASKS_CSV: &str = "masks.csv";
pub const TILES_DIR: &str = "tiles";
pub const SPLITS_CSV: &str = "splits.csv";
pub const BALANCE_MD: &str = "balance.md";
pub const MODELS_DIR: &str = "models";
pub const SELECTION_JSON: &str = "selection.json";
pub const TRAINING_JSON: &str = "training.json";
pub const GRADCAM_DIR: &str = "gradcam";
pub const PROVENANCE_DIR: &str = "provenance";
pub const PREDICTIONS_TILE: &str = "predictions_tile.csv";
pub const PREDICTIONS_SLIDE: &str = "predictions_slide.csv";
pub const PREDICTIONS_PATIENT: &str = "predictions_patient.csv";

/// Everything a stage needs: resolved config, output root and flags.
#[derive(Debug, Clone)]
pub struct RunContext {
    pub cfg: PipelineConfig,
    pub out: PathBuf,
    pub keep_failed_qc: bool,
    pub strict: bool,
    pub force: bool,
}

impl RunContext {
    pub fn new(cfg: PipelineConfig, out: impl Into<PathBuf>) -> Self {
        Self {
            cfg,
            out: out.into(),
            keep_failed_qc: false,
            strict: false,
            force: false,
        }
    }

    pub fn path(&self, rel: &str) -> PathBuf {
        self.out.join(rel)
    }

    pub fn hash(&self) -> String {
        self.cfg.hash()
    }

    fn ensure_dir(&self, rel: &str) -> Result<PathBuf> {
        let p = self.path(rel);
        fs::create_dir_all(&p).map_err(|e| Error::io(&p, e))?;
        Ok(p)
    }

    fn write_json<T: Serialize>(&self, rel: &str, value: &T) -> Result<()> {
        let p = self.path(rel);
        fs::write(&p, serde_json::to_string_pretty(value)?).map_err(|e| Error::io(&p, e))
    }

    fn stamp(&self, stage: &str) -> Result<()> {
        self.ensure_dir(PROVENANCE_DIR)?;
        self.write_json(
            &format!("{PROVENANCE_DIR}/{stage}.json"),
            &Provenance {
                stage: stage.to_string(),
                config_hash: self.hash(),
                seed: self.cfg.seed,
                version: env!("CARGO_PKG_VERSION").to_string(),
            },
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub stage: String,
    pub config_hash: String,
    pub seed: u64,
    pub version: String,
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    if !path.exists() {
        return Err(Error::MissingArtifact(path.to_path_buf()));
    }
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

fn cohort(ctx: &RunContext) -> Result<(Vec<CohortRow>, Vec<PatientRecord>)> {
    let rows = read_cohort_csv(&ctx.path(COHORT_CSV))?;
    let patients = patients_from_rows(&rows)?;
    Ok((rows, patients))
}

/// Stage `synth`: render the synthetic cohort.
pub fn synth(ctx: &RunContext) -> Result<String> {
    let spec = ctx.cfg.synth_spec();
    let cohort = SyntheticCohort::new(spec)?;
    ctx.ensure_dir("slides")?;
    (0..cohort.slides.len()).into_par_iter().try_for_each(|i| -> Result<()> {
        let p = cohort.render_slide(i)?;
        p.write(&ctx.path("slides").join(&p.slide_id))
    })?;
    crate::cohort::write_cohort_csv(&ctx.path(COHORT_CSV), &cohort.rows())?;
    ctx.stamp("synth")?;
    Ok(format!("patients={} slides={}", cohort.patients.len(), cohort.slides.len()))
}

/// Stage `mask`: tissue mask per slide.
pub fn mask(ctx: &RunContext) -> Result<String> {
    let (rows, _) = cohort(ctx)?;
    let dir = ctx.ensure_dir(MASKS_DIR)?;
    let index = rows
        .par_iter()
        .map(|r| -> Result<MaskIndexRow> {
            let p = SlidePyramid::open(&ctx.path(&r.path))?;
            let m = compute_tissue_mask(&p, &ctx.cfg.segmentation)?;
            let file = format!("{}.png", r.slide_id);
            m.write_png(&dir.join(&file))?;
            Ok(MaskIndexRow {
                slide_id: r.slide_id.clone(),
                scale: m.scale,
                file,
                width: m.width,
                height: m.height,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let path = ctx.path(MASKS_CSV);
    let mut w = csv::Writer::from_path(&path)?;
    for row in &index {
        w.serialize(row)?;
    }
    w.flush().map_err(|e| Error::io(&path, e))?;
    ctx.stamp("mask")?;
    Ok(format!("masks={}", index.len()))
}

fn read_mask_index(ctx: &RunContext) -> Result<BTreeMap<String, MaskIndexRow>> {
    let path = ctx.path(MASKS_CSV);
    if !path.exists() {
        return Err(Error::MissingArtifact(path));
    }
    let mut r = csv::Reader::from_path(&path)?;
    let mut out = BTreeMap::new();
    for row in r.deserialize::<MaskIndexRow>() {
        let row = row?;
        out.insert(row.slide_id.clone(), row);
    }
    Ok(out)
}

/// Stage `tile`: plan, QC and extract tiles.
pub fn tile(ctx: &RunContext) -> Result<String> {
    let (rows, _) = cohort(ctx)?;
    let masks = read_mask_index(ctx)?;
    let dir = ctx.ensure_dir(TILES_DIR)?;
    let per_slide = rows
        .par_iter()
        .map(|r| -> Result<Vec<TileRecord>> {
            let mi = masks
                .get(&r.slide_id)
                .ok_or_else(|| Error::MissingArtifact(ctx.path(MASKS_DIR).join(format!("{}.png", r.slide_id))))?;
            let m = TissueMask::read_png(&ctx.path(MASKS_DIR).join(&mi.file), &r.slide_id, mi.scale)?;
            let p = SlidePyramid::open(&ctx.path(&r.path))?;
            let recs = plan_tiles(&p, &m, &ctx.cfg.tiling)?;
            for rec in recs.iter().filter(|t| t.qc_pass || ctx.keep_failed_qc) {
                let img = extract_tile(&p, rec)?;
                let path = dir.join(rec.file_name());
                img.save(&path)?;
            }
            Ok(recs)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut all: Vec<TileRecord> = per_slide.into_iter().flatten().collect();
    sort_records(&mut all);
    write_tiles_csv(&ctx.path(TILES_CSV), &all)?;
    ctx.stamp("tile")?;
    let kept = all.iter().filter(|t| t.qc_pass).count();
    Ok(format!("tiles={} qc_pass={kept}", all.len()))
}

/// Stage `split`: stratified train/validation/test plus CV folds on train.
pub fn split(ctx: &RunContext) -> Result<String> {
    let (_, patients) = cohort(ctx)?;
    let split = stratified_split(&patients, ctx.cfg.split, ctx.cfg.seed)?;
    let train: Vec<PatientRecord> = patients
        .iter()
        .filter(|p| split.partition_of(&p.patient_id) == Some(Partition::Train))
        .cloned()
        .collect();
    let k = ctx.cfg.train.cv_folds.min(train.len());
    let folds = if k >= 2 { fold_ids(&train, k, ctx.cfg.seed)? } else { BTreeMap::new() };
    write_splits_csv(&ctx.path(SPLITS_CSV), &split, &folds)?;
    let balance = balance_report(&split, &patients)?;
    let md = ctx.path(BALANCE_MD);
    fs::write(&md, balance.to_markdown()).map_err(|e| Error::io(&md, e))?;
    ctx.stamp("split")?;
    Ok(format!(
        "train={} validation={} test={}",
        split.count(Partition::Train),
        split.count(Partition::Validation),
        split.count(Partition::Test)
    ))
}

struct SlideInfo {
    patient_id: String,
    label: u8,
    isup: u8,
    covariates: Vec<f64>,
}

fn slide_info(rows: &[CohortRow]) -> Result<BTreeMap<String, SlideInfo>> {
    rows.iter()
        .map(|r| {
            Ok((
                r.slide_id.clone(),
                SlideInfo {
                    patient_id: r.patient_id.clone(),
                    label: r.diagnosis,
                    isup: r.isup,
                    covariates: encode_covariates(r.age_years, r.psa_ng_ml)?.to_array().to_vec(),
                },
            ))
        })
        .collect()
}

/// QC-passing tiles of the given patients, read from the tile store.
pub fn load_tiles(ctx: &RunContext, patients: &BTreeSet<String>) -> Result<Vec<TileSample>> {
    let (rows, _) = cohort(ctx)?;
    let info = slide_info(&rows)?;
    let records = read_tiles_csv(&ctx.path(TILES_CSV))?;
    let wanted: Vec<&TileRecord> = records
        .iter()
        .filter(|r| r.qc_pass && info.get(&r.slide_id).is_some_and(|s| patients.contains(&s.patient_id)))
        .collect();
    wanted
        .par_iter()
        .map(|r| {
            let s = &info[&r.slide_id];
            let path = ctx.path(TILES_DIR).join(r.file_name());
            if !path.exists() {
                return Err(Error::MissingArtifact(path));
            }
            let img = image::open(&path)?.to_rgb8();
            if img.width() != img.height() {
                return Err(Error::invalid(format!("{} is not square", path.display())));
            }
            Ok(TileSample {
                patient_id: s.patient_id.clone(),
                slide_id: r.slide_id.clone(),
                x: r.x,
                y: r.y,
                label: s.label,
                isup: s.isup,
                covariates: s.covariates.clone(),
                size: img.width() as usize,
                pixels: Arc::new(img.into_raw()),
            })
        })
        .collect()
}

/// Permutes labels across patients, keeping each patient's tiles
/// consistently labelled.
fn shuffle_patient_labels(tiles: &mut [TileSample], seed: u64) {
    let mut labels: BTreeMap<String, _> = BTreeMap::new();
    for t in tiles.iter() {
        labels.entry(t.patient_id.clone()).or_insert(t.label);
    }
    let ids: Vec<String> = labels.keys().cloned().collect();
    let mut vals: Vec<_> = labels.values().copied().collect();
    vals.shuffle(&mut crate::rng::stream(seed, "shuffle"));
    let permuted: BTreeMap<String, _> = ids.into_iter().zip(vals).collect();
    for t in tiles.iter_mut() {
        t.label = permuted[&t.patient_id];
    }
}

fn ids_in(parts: &BTreeMap<String, Partition>, which: &[Partition]) -> BTreeSet<String> {
    parts
        .iter()
        .filter(|(_, p)| which.contains(p))
        .map(|(id, _)| id.clone())
        .collect()
}

pub fn select_tiles(tiles: &[TileSample], ids: &BTreeSet<String>) -> Vec<TileSample> {
    tiles.iter().filter(|t| ids.contains(&t.patient_id)).cloned().collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemberSummary {
    pub member: usize,
    pub seed: u64,
    pub partial_epochs: usize,
    pub stop_reason: String,
    pub best_epoch: usize,
    pub initial_tune_loss: f64,
    pub best_tune_loss: f64,
    pub wall_time_secs: f64,
}

/// Stage `train`: hyperparameter selection by cross-validation on the
/// training patients, then the ensemble fit on training tiles with the
/// validation patients as tuning set.
pub fn train(ctx: &RunContext) -> Result<String> {
    let (_, patients) = cohort(ctx)?;
    let (parts, _) = read_splits_csv(&ctx.path(SPLITS_CSV))?;
    let train_ids = ids_in(&parts, &[Partition::Train]);
    let tune_ids = ids_in(&parts, &[Partition::Validation]);
    let all_ids: BTreeSet<String> = train_ids.union(&tune_ids).cloned().collect();
    let mut tiles = load_tiles(ctx, &all_ids)?;
    let tc = &ctx.cfg.train;
    if tc.shuffle_labels {
        shuffle_patient_labels(&mut tiles, ctx.cfg.seed);
        info!("patient labels permuted (negative control)");
    }
    let net = &ctx.cfg.network;
    info!("loaded {} development tiles", tiles.len());

    let cv = if tc.lr_grid.len() * tc.percentile_grid.len() == 1 {
        cross_validate(&[], &tc.lr_grid, &tc.percentile_grid, tc, net, ctx.cfg.seed)?
    } else {
        let train_patients: Vec<PatientRecord> =
            patients.iter().filter(|p| train_ids.contains(&p.patient_id)).cloned().collect();
        let rounds = kfold(&train_patients, tc.cv_folds, ctx.cfg.seed)?;
        let folds: Vec<CvFold> = rounds
            .iter()
            .map(|a| CvFold {
                fit: FoldData {
                    train: select_tiles(&tiles, &a.members(Partition::Train).into_iter().map(String::from).collect()),
                    tuning: select_tiles(&tiles, &a.members(Partition::Tuning).into_iter().map(String::from).collect()),
                },
                validation: select_tiles(&tiles, &a.members(Partition::Validation).into_iter().map(String::from).collect()),
            })
            .collect();
        cross_validate(&folds, &tc.lr_grid, &tc.percentile_grid, tc, net, ctx.cfg.seed)?
    };
    info!("selected lr {} and slide percentile {}", cv.lr, cv.percentile);

    let data = FoldData {
        train: select_tiles(&tiles, &train_ids),
        tuning: select_tiles(&tiles, &tune_ids),
    };
    let run_cfg = crate::train::TrainConfig {
        initial_lr: cv.lr,
        ..tc.clone()
    };
    let members = train_ensemble(&data, &run_cfg, net, ctx.cfg.seed)?;
    let dir = ctx.ensure_dir(MODELS_DIR)?;
    let mut summary = Vec::new();
    for (m, (state, log)) in members.iter().enumerate() {
        state.to_checkpoint().save(&dir.join(format!("member_{m:02}.ckpt")))?;
        log.write_csv(&dir.join(format!("train_log_{m:02}.csv")))?;
        summary.push(MemberSummary {
            member: m,
            seed: state.seed,
            partial_epochs: log.epochs.len(),
            stop_reason: log.stop_reason.as_str().to_string(),
            best_epoch: log.best_epoch,
            initial_tune_loss: log.initial_tune_loss,
            best_tune_loss: log.best_tune_loss,
            wall_time_secs: log.wall_time_secs,
        });
    }
    ctx.write_json(&format!("{MODELS_DIR}/{SELECTION_JSON}"), &cv)?;
    ctx.write_json(&format!("{MODELS_DIR}/{TRAINING_JSON}"), &summary)?;
    ctx.stamp("train")?;
    Ok(format!(
        "members={} lr={} percentile={} train_tiles={} tuning_tiles={}",
        members.len(),
        cv.lr,
        cv.percentile,
        data.train.len(),
        data.tuning.len()
    ))
}

/// Loads every `member_*.ckpt` in name order, checked against the config.
pub fn load_ensemble(ctx: &RunContext) -> Result<Vec<NetState>> {
    let dir = ctx.path(MODELS_DIR);
    if !dir.exists() {
        return Err(Error::MissingArtifact(dir));
    }
    let mut files: Vec<PathBuf> = fs::read_dir(&dir)
        .map_err(|e| Error::io(&dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.file_name()
                .and_then(|n| n.to_str())
                .is_some_and(|n| n.starts_with("member_") && n.ends_with(".ckpt"))
        })
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(Error::MissingArtifact(dir.join("member_00.ckpt")));
    }
    files.iter().map(|f| NetState::load_compatible(f, &ctx.cfg.network)).collect()
}

fn selected_percentile(ctx: &RunContext) -> Result<f64> {
    let p = ctx.path(MODELS_DIR).join(SELECTION_JSON);
    if p.exists() {
        Ok(read_json::<CvResult>(&p)?.percentile)
    } else {
        Ok(ctx.cfg.aggregation.slide_percentile)
    }
}

/// Stage `predict`: ensemble scores on the test patients at tile, slide
/// and patient level.
pub fn predict(ctx: &RunContext) -> Result<String> {
    let (rows, _) = cohort(ctx)?;
    let (parts, _) = read_splits_csv(&ctx.path(SPLITS_CSV))?;
    let test_ids = ids_in(&parts, &[Partition::Test]);
    let members = load_ensemble(ctx)?;
    let tiles = load_tiles(ctx, &test_ids)?;
    let scores = predict_ensemble(&members, &tiles)?;
    let tile_table = ScoreTable {
        level: ScoreLevel::Tile,
        rows: tiles
            .iter()
            .zip(&scores)
            .map(|(t, &s)| ScoreRow {
                patient_id: t.patient_id.clone(),
                slide_id: Some(t.slide_id.clone()),
                x: Some(t.x),
                y: Some(t.y),
                score: s,
                label: t.label,
                isup: t.isup,
            })
            .collect(),
    };
    let keys: Vec<SlideKey> = rows
        .iter()
        .filter(|r| test_ids.contains(&r.patient_id))
        .map(|r| SlideKey {
            patient_id: r.patient_id.clone(),
            slide_id: r.slide_id.clone(),
            label: r.diagnosis,
            isup: r.isup,
        })
        .collect();
    let q = selected_percentile(ctx)?;
    let slides = tiles_to_slides(&tile_table, &keys, q, ctx.strict)?;
    let patients = slides_to_patients(&slides)?;
    tile_table.write_csv(&ctx.path(PREDICTIONS_TILE))?;
    slides.write_csv(&ctx.path(PREDICTIONS_SLIDE))?;
    patients.write_csv(&ctx.path(PREDICTIONS_PATIENT))?;
    ctx.stamp("predict")?;
    Ok(format!(
        "tiles={} slides={} patients={} percentile={q}",
        tile_table.rows.len(),
        slides.rows.len(),
        patients.rows.len()
    ))
}

fn read_predictions(ctx: &RunContext, file: &str, level: ScoreLevel) -> Result<ScoreTable> {
    ScoreTable::read_csv(&ctx.path(file), level)
}

/// Stage `evaluate`: AUCs with bootstrap intervals, operating points,
/// ISUP table and the age + PSA baseline.
pub fn evaluate(ctx: &RunContext) -> Result<MetricsReport> {
    let patient = read_predictions(ctx, PREDICTIONS_PATIENT, ScoreLevel::Patient)?;
    let slide = read_predictions(ctx, PREDICTIONS_SLIDE, ScoreLevel::Slide)?;
    let tile = read_predictions(ctx, PREDICTIONS_TILE, ScoreLevel::Tile)?;
    let (_, records) = cohort(ctx)?;
    let (parts, _) = read_splits_csv(&ctx.path(SPLITS_CSV))?;
    let dev = ids_in(&parts, &[Partition::Train, Partition::Validation]);
    let cov = |p: &PatientRecord| encode_covariates(p.age_years, p.psa_ng_ml).map(|c| c.to_array().to_vec());
    let dev_patients: Vec<&PatientRecord> = records.iter().filter(|p| dev.contains(&p.patient_id)).collect();
    let xs = dev_patients.iter().map(|p| cov(p)).collect::<Result<Vec<_>>>()?;
    let ys: Vec<u8> = dev_patients.iter().map(|p| p.label()).collect();
    let baseline = match fit_logistic_baseline(&xs, &ys) {
        Ok(model) => {
            let by_id: BTreeMap<&str, &PatientRecord> = records.iter().map(|p| (p.patient_id.as_str(), p)).collect();
            Some(
                patient
                    .rows
                    .iter()
                    .map(|r| {
                        let p = by_id
                            .get(r.patient_id.as_str())
                            .ok_or_else(|| Error::invalid(format!("patient {} not in cohort", r.patient_id)))?;
                        Ok(model.predict(&cov(p)?))
                    })
                    .collect::<Result<Vec<f64>>>()?,
            )
        }
        Err(Error::UndefinedMetric(m)) => {
            warn!("baseline skipped: {m}");
            None
        }
        Err(e) => return Err(e),
    };
    let report = evaluate_metrics(&EvaluationInput {
        tile: Some(&tile),
        slide: Some(&slide),
        patient: &patient,
        baseline: baseline.as_deref(),
        targets: &ctx.cfg.metrics.targets,
        n_boot: ctx.cfg.metrics.n_boot,
        seed: ctx.cfg.seed,
        config_hash: ctx.hash(),
    })?;
    report.write(&ctx.out)?;
    ctx.stamp("evaluate")?;
    Ok(report)
}

/// Stage `explain`: Grad-CAM heatmaps of the highest-scoring test tiles,
/// computed with the first ensemble member.
pub fn explain(ctx: &RunContext) -> Result<String> {
    let table = read_predictions(ctx, PREDICTIONS_TILE, ScoreLevel::Tile)?;
    let members = load_ensemble(ctx)?;
    let mut ranked: Vec<&ScoreRow> = table.rows.iter().collect();
    ranked.sort_by(|a, b| b.score.total_cmp(&a.score));
    let chosen: BTreeSet<(String, u32, u32)> = ranked
        .iter()
        .take(ctx.cfg.explain.max_tiles)
        .map(|r| (r.slide_id.clone().unwrap_or_default(), r.x.unwrap_or(0), r.y.unwrap_or(0)))
        .collect();
    let patients: BTreeSet<String> = ranked.iter().map(|r| r.patient_id.clone()).collect();
    let tiles: Vec<TileSample> = load_tiles(ctx, &patients)?
        .into_iter()
        .filter(|t| chosen.contains(&(t.slide_id.clone(), t.x, t.y)))
        .collect();
    let dir = ctx.ensure_dir(GRADCAM_DIR)?;
    tiles.par_iter().try_for_each(|t| -> Result<()> {
        let cam = grad_cam(&members[0], t)?;
        let stem = cam.file_stem();
        cam.to_gray().save(dir.join(format!("{stem}_heatmap.png")))?;
        let img = image::RgbImage::from_raw(t.size as u32, t.size as u32, t.pixels.to_vec())
            .ok_or_else(|| Error::invalid("tile buffer size mismatch"))?;
        cam.overlay(&img)?.save(dir.join(format!("{stem}_overlay.png")))?;
        Ok(())
    })?;
    ctx.stamp("explain")?;
    Ok(format!("heatmaps={}", tiles.len()))
}

/// Stage `export-features`: pooled feature vectors of every QC-passing
/// tile from the first ensemble member.
pub fn export_features(ctx: &RunContext) -> Result<String> {
    let (_, patients) = cohort(ctx)?;
    let ids: BTreeSet<String> = patients.iter().map(|p| p.patient_id.clone()).collect();
    let members = load_ensemble(ctx)?;
    let tiles = load_tiles(ctx, &ids)?;
    let rows = features_of(&members[0], &tiles)?;
    write_features_csv(&ctx.path(FEATURES_CSV), &rows)?;
    ctx.stamp("export-features")?;
    Ok(format!("rows={} dim={}", rows.len(), ctx.cfg.network.feature_dim()))
}

/// Stage `report`: checks that every stage ran under this config and
/// writes the combined `report.md`.
pub fn report(ctx: &RunContext) -> Result<String> {
    let dir = ctx.path(PROVENANCE_DIR);
    if !dir.exists() {
        return Err(Error::MissingArtifact(dir));
    }
    let hash = ctx.hash();
    let mut stages = Vec::new();
    let mut entries: Vec<PathBuf> = fs::read_dir(&dir)
        .map_err(|e| Error::io(&dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    entries.sort();
    for p in entries {
        let prov: Provenance = read_json(&p)?;
        if prov.config_hash != hash || prov.seed != ctx.cfg.seed {
            let msg = format!(
                "stage {} ran with config {} seed {}, current config {hash} seed {}",
                prov.stage, prov.config_hash, prov.seed, ctx.cfg.seed
            );
            if ctx.force {
                warn!("{msg} (continuing because of --force)");
            } else {
                return Err(Error::HashMismatch(msg));
            }
        }
        stages.push(prov.stage);
    }
    let metrics = MetricsReport::read(&ctx.path(METRICS_JSON))?;
    let mut md = metrics.to_markdown();
    let balance = ctx.path(BALANCE_MD);
    if balance.exists() {
        md.push_str("\n## Development and test set characteristics\n\n");
        md.push_str(&fs::read_to_string(&balance).map_err(|e| Error::io(&balance, e))?);
    }
    let training = ctx.path(MODELS_DIR).join(TRAINING_JSON);
    if training.exists() {
        let members: Vec<MemberSummary> = read_json(&training)?;
        md.push_str("\n## Ensemble training\n\n| Member | Seed | Partial epochs | Stop | Best epoch | Initial tuning loss | Best tuning loss |\n|---|---|---|---|---|---|---|\n");
        for m in &members {
            md.push_str(&format!(
                "| {} | {} | {} | {} | {} | {:.4} | {:.4} |\n",
                m.member, m.seed, m.partial_epochs, m.stop_reason, m.best_epoch, m.initial_tune_loss, m.best_tune_loss
            ));
        }
    }
    md.push_str(&format!("\nStages: {}\n", stages.join(", ")));
    let out = ctx.path(REPORT_MD);
    fs::write(&out, md).map_err(|e| Error::io(&out, e))?;
    Ok(format!("stages={} hash={hash}", stages.len()))
}

/// Inner-split helper kept for callers that want the 70/15/15 partition
/// of a patient subset without cross-validation.
pub fn development_split(patients: &[PatientRecord], seed: u64) -> Result<BTreeMap<String, Partition>> {
    Ok(inner_split(patients, seed, 0)?.assignments)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Synth,
    Mask,
    Tile,
    Split,
    Train,
    Predict,
    Evaluate,
    Explain,
    ExportFeatures,
    Report,
}

impl Stage {
    /// The default order of a full run.
    pub const ALL: [Stage; 10] = [
        Stage::Synth,
        Stage::Mask,
        Stage::Tile,
        Stage::Split,
        Stage::Train,
        Stage::Predict,
        Stage::Evaluate,
        Stage::Explain,
        Stage::ExportFeatures,
        Stage::Report,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Synth => "synth",
            Stage::Mask => "mask",
            Stage::Tile => "tile",
            Stage::Split => "split",
            Stage::Train => "train",
            Stage::Predict => "predict",
            Stage::Evaluate => "evaluate",
            Stage::Explain => "explain",
            Stage::ExportFeatures => "export-features",
            Stage::Report => "report",
        }
    }

    pub fn run(self, ctx: &RunContext) -> Result<String> {
        match self {
            Stage::Synth => synth(ctx),
            Stage::Mask => mask(ctx),
            Stage::Tile => tile(ctx),
            Stage::Split => split(ctx),
            Stage::Train => train(ctx),
            Stage::Predict => predict(ctx),
            Stage::Evaluate => evaluate(ctx).map(|r| match r.patient_auc() {
                Some(a) => format!("patient_auc={a:.4}"),
                None => String::new(),
            }),
            Stage::Explain => explain(ctx),
            Stage::ExportFeatures => export_features(ctx),
            Stage::Report => report(ctx),
        }
    }
}
