//! Tile scores to slide scores (75th percentile) to patient scores
//! (median), including a slide with no usable tiles.
//!
//! cargo run --release --example aggregate_scores

use prostate_wsi::aggregate::{slides_to_patients, tiles_to_slides, ScoreLevel, ScoreRow, ScoreTable, SlideKey};

fn main() -> prostate_wsi::Result<()> {
    let tiles = [
        ("A", "A_C01", [0.1, 0.2, 0.7, 0.4]),
        ("A", "A_C02", [0.3, 0.3, 0.2, 0.9]),
        ("B", "B_C01", [0.6, 0.8, 0.7, 0.5]),
    ];
    let rows = tiles
        .iter()
        .flat_map(|(p, s, scores)| {
            scores.iter().enumerate().map(move |(i, &score)| ScoreRow {
                patient_id: p.to_string(),
                slide_id: Some(s.to_string()),
                x: Some(i as u32 * 299),
                y: Some(0),
                score,
                label: u8::from(*p == "B"),
                isup: if *p == "B" { 2 } else { 0 },
            })
        })
        .collect();
    let tile_table = ScoreTable { level: ScoreLevel::Tile, rows };
    let key = |p: &str, s: &str| SlideKey {
        patient_id: p.into(),
        slide_id: s.into(),
        label: u8::from(p == "B"),
        isup: if p == "B" { 2 } else { 0 },
    };
    let slides = vec![key("A", "A_C01"), key("A", "A_C02"), key("B", "B_C01"), key("B", "B_C02")];

    let slide_table = tiles_to_slides(&tile_table, &slides, 75.0, false)?;
    for r in &slide_table.rows {
        println!("slide {:<6} {:.4}", r.slide_id.as_deref().unwrap_or("?"), r.score);
    }
    for r in &slides_to_patients(&slide_table)?.rows {
        println!("patient {:<3} {:.4} label {}", r.patient_id, r.score, r.label);
    }
    match tiles_to_slides(&tile_table, &slides, 75.0, true) {
        Err(e) => println!("strict mode: {e}"),
        Ok(_) => println!("strict mode accepted every slide"),
    }
    Ok(())
}
