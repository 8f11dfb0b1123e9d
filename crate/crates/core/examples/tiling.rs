//! Plan and extract tiles from one synthetic slide with a blurred region,
//! writing the QC-passing tiles as PNGs.
//!
//! cargo run --release --example tiling -- [out_dir]

use std::path::PathBuf;

use prostate_wsi::slide::{SyntheticCohort, SyntheticCohortSpec};
use prostate_wsi::tiler::{extract_tile, plan_tiles, TilingConfig};
use prostate_wsi::tissue::{compute_tissue_mask, SegmentationConfig};

fn main() -> prostate_wsi::Result<()> {
    let out: PathBuf = std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(|| "tiles_out".into());
    std::fs::create_dir_all(&out).map_err(|e| prostate_wsi::Error::io(&out, e))?;
    let spec = SyntheticCohortSpec {
        n_patients: 2,
        cores_per_patient: 1,
        blur_region_prob: 1.0,
        ..Default::default()
    };
    let cohort = SyntheticCohort::new(spec)?;
    let slide = cohort.render_slide(0)?;
    let mask = compute_tissue_mask(&slide, &SegmentationConfig::default())?;
    let cfg = TilingConfig::default();
    let records = plan_tiles(&slide, &mask, &cfg)?;

    println!("window {} stride {} -> {}px tiles", cfg.window, cfg.stride, cfg.out_size);
    for r in &records {
        let status = if r.qc_pass { "keep" } else { "drop" };
        println!(
            "({:>4},{:>4}) tissue {:.2} lapvar {:>8.1} {status}",
            r.x, r.y, r.tissue_fraction, r.laplacian_variance
        );
        if r.qc_pass {
            let tile = extract_tile(&slide, r)?;
            let path = out.join(r.file_name());
            tile.save(&path)?;
        }
    }
    println!("wrote {} tiles to {}", records.iter().filter(|r| r.qc_pass).count(), out.display());
    Ok(())
}
