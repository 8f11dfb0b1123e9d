//! Generate a small synthetic cohort, write it to disk and print per-slide
//! tissue coverage and tile QC counts.
//!
//! cargo run --release --example synth_cohort -- [out_dir]

use std::path::PathBuf;

use prostate_wsi::slide::{SyntheticCohort, SyntheticCohortSpec};
use prostate_wsi::tiler::{plan_tiles, TilingConfig};
use prostate_wsi::tissue::{compute_tissue_mask, SegmentationConfig};

fn main() -> prostate_wsi::Result<()> {
    let out: PathBuf = std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(|| "synth_out".into());
    let spec = SyntheticCohortSpec {
        n_patients: 4,
        cores_per_patient: 3,
        pen_mark_prob: 0.3,
        blur_region_prob: 0.3,
        ..Default::default()
    };
    let cohort = SyntheticCohort::new(spec)?;
    cohort.write(&out)?;
    println!("wrote {} slides to {}", cohort.slides.len(), out.display());

    let seg = SegmentationConfig::default();
    let tiling = TilingConfig::default();
    println!("{:<12} {:>6} {:>8} {:>6} {:>6}", "slide", "label", "coverage", "tiles", "kept");
    for (i, plan) in cohort.slides.iter().enumerate() {
        let slide = cohort.render_slide(i)?;
        let mask = compute_tissue_mask(&slide, &seg)?;
        mask.write_png(&out.join(format!("{}_mask.png", plan.slide_id)))?;
        let tiles = plan_tiles(&slide, &mask, &tiling)?;
        let kept = tiles.iter().filter(|t| t.qc_pass).count();
        println!(
            "{:<12} {:>6} {:>8.3} {:>6} {:>6}",
            plan.slide_id,
            u8::from(plan.cancer),
            mask.coverage(),
            tiles.len(),
            kept
        );
        for t in &tiles {
            println!("    ({:>4},{:>4}) tissue {:.3} lapvar {:>8.1} pass {}", t.x, t.y, t.tissue_fraction, t.laplacian_variance, t.qc_pass);
        }
    }
    Ok(())
}
