#![allow(dead_code)]

pub mod criteria;
pub mod oracles;

use prostate_wsi::rng;

pub fn rng(seed: u64, name: &str) -> rng::StreamRng {
    rng::stream(seed, name)
}

/// Random binary labels with both classes present.
pub fn labels_both(r: &mut impl rand::Rng, n: usize) -> Vec<u8> {
    loop {
        let l: Vec<u8> = (0..n).map(|_| r.random_range(0..2u8)).collect();
        if l.contains(&0) && l.contains(&1) {
            return l;
        }
    }
}

/// Scores on a coarse grid so ties are common.
pub fn tied_scores(r: &mut impl rand::Rng, n: usize) -> Vec<f64> {
    let levels = r.random_range(2..12);
    (0..n).map(|_| r.random_range(0..levels) as f64 / levels as f64).collect()
}
