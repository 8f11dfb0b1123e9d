//! Grad-CAM heatmap of one synthetic tile. Pass a checkpoint to explain a
//! trained member; otherwise a freshly initialised desk network is used.
//!
//! cargo run --release --example grad_cam -- [member.ckpt] [out_dir]

use std::path::PathBuf;
use std::sync::Arc;

use prostate_wsi::cohort::encode_covariates;
use prostate_wsi::interpret::grad_cam;
use prostate_wsi::nnet::{NetConfig, NetState, OptimizerKind};
use prostate_wsi::slide::{SyntheticCohort, SyntheticCohortSpec};
use prostate_wsi::tiler::{extract_tile, plan_tiles, TilingConfig};
use prostate_wsi::tissue::{compute_tissue_mask, SegmentationConfig};
use prostate_wsi::train::TileSample;

fn main() -> prostate_wsi::Result<()> {
    let mut args = std::env::args().skip(1);
    let state = match args.next() {
        Some(p) => NetState::load_compatible(&PathBuf::from(p), &NetConfig::default())?,
        None => NetState::new(NetConfig::default(), OptimizerKind::Adam, 1)?,
    };
    let out: PathBuf = args.next().map(PathBuf::from).unwrap_or_else(|| "cam_out".into());
    std::fs::create_dir_all(&out).map_err(|e| prostate_wsi::Error::io(&out, e))?;

    let cohort = SyntheticCohort::new(SyntheticCohortSpec {
        n_patients: 2,
        cores_per_patient: 1,
        ..Default::default()
    })?;
    let slide = cohort.render_slide(0)?;
    let patient = &cohort.patients[cohort.slides[0].patient_index];
    let mask = compute_tissue_mask(&slide, &SegmentationConfig::default())?;
    let records = plan_tiles(&slide, &mask, &TilingConfig::default())?;
    let rec = records
        .iter()
        .find(|r| r.qc_pass)
        .ok_or_else(|| prostate_wsi::Error::EmptySlide(slide.slide_id.clone()))?;
    let img = extract_tile(&slide, rec)?;
    let tile = TileSample {
        patient_id: patient.patient_id.clone(),
        slide_id: slide.slide_id.clone(),
        x: rec.x,
        y: rec.y,
        label: patient.label(),
        isup: patient.isup,
        covariates: encode_covariates(patient.age_years, patient.psa_ng_ml)?.to_array().to_vec(),
        size: img.width() as usize,
        pixels: Arc::new(img.clone().into_raw()),
    };

    let cam = grad_cam(&state, &tile)?;
    println!("{}: raw max {:.3e}", cam.file_stem(), cam.raw_max);
    cam.to_gray().save(out.join(format!("{}_cam.png", cam.file_stem())))?;
    cam.overlay(&img)?.save(out.join(format!("{}_overlay.png", cam.file_stem())))?;
    println!("wrote heatmap and overlay to {}", out.display());
    Ok(())
}
