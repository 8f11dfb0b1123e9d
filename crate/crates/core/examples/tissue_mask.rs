//! Segment tissue on one synthetic slide with a pen mark and print the
//! Otsu threshold, coverage and an ASCII rendering of the mask.
//!
//! cargo run --release --example tissue_mask

use prostate_wsi::slide::{SyntheticCohort, SyntheticCohortSpec};
use prostate_wsi::tissue::{compute_tissue_mask, otsu_threshold, rgb_to_hsv, SegmentationConfig};

fn main() -> prostate_wsi::Result<()> {
    let spec = SyntheticCohortSpec {
        n_patients: 2,
        cores_per_patient: 1,
        pen_mark_prob: 1.0,
        ..Default::default()
    };
    let cohort = SyntheticCohort::new(spec)?;
    let slide = cohort.render_slide(0)?;

    let mut hist = [0u64; 256];
    for p in slide.base().pixels() {
        let (_, s, _) = rgb_to_hsv(p.0);
        hist[(s * 255.0).round() as usize] += 1;
    }
    println!("saturation Otsu threshold (full res): {}", otsu_threshold(&hist)?);

    let mask = compute_tissue_mask(&slide, &SegmentationConfig::default())?;
    println!("{} mask {}x{} coverage {:.3}", slide.slide_id, mask.width, mask.height, mask.coverage());
    let step = (mask.width / 72).max(1);
    for y in (0..mask.height).step_by(step * 2) {
        let line: String = (0..mask.width).step_by(step).map(|x| if mask.get(x, y) { '#' } else { '.' }).collect();
        println!("{line}");
    }
    Ok(())
}
