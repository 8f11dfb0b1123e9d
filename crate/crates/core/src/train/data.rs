use std::sync::Arc;

use rand::Rng;

use crate::error::{Error, Result};

/// One QC-passing tile with its weak (patient-level) label.
#[derive(Debug, Clone, PartialEq)]
pub struct TileSample {
    pub patient_id: String,
    pub slide_id: String,
    pub x: u32,
    pub y: u32,
    pub label: u8,
    pub isup: u8,
    pub covariates: Vec<f64>,
    /// Interleaved RGB, `size x size`.
    pub pixels: Arc<Vec<u8>>,
    pub size: usize,
}

/// Training and tuning tiles for one model fit.
#[derive(Debug, Clone, Default)]
pub struct FoldData {
    pub train: Vec<TileSample>,
    pub tuning: Vec<TileSample>,
}

impl FoldData {
    pub fn validate(&self) -> Result<()> {
        if self.tuning.is_empty() {
            return Err(Error::invalid("tuning set is empty"));
        }
        let train: std::collections::BTreeSet<&str> = self.train.iter().map(|t| t.patient_id.as_str()).collect();
        if let Some(t) = self.tuning.iter().find(|t| train.contains(t.patient_id.as_str())) {
            return Err(Error::invalid(format!(
                "patient {} appears in both training and tuning tiles",
                t.patient_id
            )));
        }
        Ok(())
    }
}

/// Tile indices split by label.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassIndex {
    pub positive: Vec<usize>,
    pub negative: Vec<usize>,
}

impl ClassIndex {
    pub fn new(tiles: &[TileSample]) -> Self {
        let (mut positive, mut negative) = (Vec::new(), Vec::new());
        for (i, t) in tiles.iter().enumerate() {
            if t.label == 1 {
                positive.push(i);
            } else {
                negative.push(i);
            }
        }
        Self { positive, negative }
    }
}

/// `batch_size / 2` tiles from each class, uniformly with replacement.
/// Positives come first.
pub fn sample_balanced_batch(index: &ClassIndex, batch_size: usize, rng: &mut impl Rng) -> Result<Vec<usize>> {
    if index.positive.is_empty() || index.negative.is_empty() {
        return Err(Error::invalid(format!(
            "balanced sampling needs both classes ({} positive, {} negative tiles)",
            index.positive.len(),
            index.negative.len()
        )));
    }
    if batch_size == 0 || batch_size % 2 != 0 {
        return Err(Error::invalid("batch size must be even and positive"));
    }
    let half = batch_size / 2;
    let mut out = Vec::with_capacity(batch_size);
    for _ in 0..half {
        out.push(index.positive[rng.random_range(0..index.positive.len())]);
    }
    for _ in 0..half {
        out.push(index.negative[rng.random_range(0..index.negative.len())]);
    }
    Ok(out)
}

/// Fixed class-balanced subset of at most `cap` indices (all when `cap`
/// is 0 or not smaller than the set).
pub fn balanced_subset(tiles: &[TileSample], cap: usize, rng: &mut impl Rng) -> Vec<usize> {
    if cap == 0 || cap >= tiles.len() {
        return (0..tiles.len()).collect();
    }
    let idx = ClassIndex::new(tiles);
    let mut take = |mut v: Vec<usize>, k: usize| -> Vec<usize> {
        let k = k.min(v.len());
        for i in 0..k {
            let j = rng.random_range(i..v.len());
            v.swap(i, j);
        }
        v.truncate(k);
        v
    };
    let half = cap / 2;
    let n_pos = half.max(cap.saturating_sub(idx.negative.len()));
    let n_neg = cap - n_pos.min(idx.positive.len());
    let mut out = take(idx.positive, n_pos);
    out.extend(take(idx.negative, n_neg));
    out.sort_unstable();
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    fn tiles(labels: &[u8]) -> Vec<TileSample> {
        labels
            .iter()
            .enumerate()
            .map(|(i, &l)| TileSample {
                patient_id: format!("P{i}"),
                slide_id: format!("P{i}_C01"),
                x: 0,
                y: 0,
                label: l,
                isup: l,
                covariates: vec![0.0; 9],
                pixels: Arc::new(vec![0; 3]),
                size: 1,
            })
            .collect()
    }

    #[test]
    fn batches_are_exactly_balanced() {
        let idx = ClassIndex::new(&tiles(&[1, 0, 0, 0, 0, 1, 0]));
        let mut r = rng::stream(1, rng::stream::SAMPLER);
        let b = sample_balanced_batch(&idx, 170, &mut r).unwrap();
        assert_eq!(b.iter().filter(|i| idx.positive.contains(i)).count(), 85);
        assert_eq!(b.len(), 170);
    }

    #[test]
    fn small_index_draws_only_members() {
        let ts = tiles(&[1, 1, 0, 0]);
        let idx = ClassIndex::new(&ts);
        let mut r = rng::stream(2, rng::stream::SAMPLER);
        let b = sample_balanced_batch(&idx, 4, &mut r).unwrap();
        assert!(b.iter().all(|&i| i < 4));
        let mut r2 = rng::stream(2, rng::stream::SAMPLER);
        assert_eq!(b, sample_balanced_batch(&idx, 4, &mut r2).unwrap());
    }

    #[test]
    fn empty_class_is_rejected() {
        let idx = ClassIndex::new(&tiles(&[1, 1]));
        assert!(sample_balanced_batch(&idx, 2, &mut rng::stream(0, "s")).is_err());
    }

    #[test]
    fn subset_is_balanced_when_possible() {
        let ts = tiles(&[1, 1, 1, 1, 1, 1, 0, 0, 0, 0, 0, 0, 0]);
        let s = balanced_subset(&ts, 6, &mut rng::stream(0, "s"));
        assert_eq!(s.len(), 6);
        assert_eq!(s.iter().filter(|&&i| ts[i].label == 1).count(), 3);
        let s = balanced_subset(&tiles(&[1, 0, 0, 0, 0]), 4, &mut rng::stream(0, "s"));
        assert_eq!(s.len(), 4);
    }
}
