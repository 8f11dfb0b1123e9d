use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::aggregate::percentile_sorted;
use crate::error::{Error, Result};
use crate::rng;

pub const DEFAULT_N_BOOT: usize = 2000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CiEstimate {
    pub point: f64,
    pub lower: f64,
    pub upper: f64,
    pub n_boot: usize,
    pub seed: u64,
}

/// Percentile bootstrap 95% interval over `n_units` rows.
///
/// `statistic` receives the row indices of one resample and returns
/// `Err(UndefinedMetric)` when the statistic does not exist on it (e.g. one
/// class only); such resamples are redrawn. Resample `b` draws from its own
/// stream, so results do not depend on thread count.
pub fn bootstrap_ci<F>(n_units: usize, statistic: F, n_boot: usize, seed: u64) -> Result<CiEstimate>
where
    F: Fn(&[usize]) -> Result<f64> + Sync,
{
    if n_units == 0 || n_boot == 0 {
        return Err(Error::invalid("bootstrap needs rows and at least one resample"));
    }
    let all: Vec<usize> = (0..n_units).collect();
    let point = statistic(&all)?;
    let cap = 10 * n_boot;
    let draws: Vec<(Option<f64>, usize)> = (0..n_boot)
        .into_par_iter()
        .map(|b| -> Result<(Option<f64>, usize)> {
            let mut r = rng::stream_indexed(seed, rng::stream::BOOTSTRAP, b as u64);
            let mut idx = vec![0usize; n_units];
            for attempt in 1..=cap {
                for v in idx.iter_mut() {
                    *v = r.random_range(0..n_units);
                }
                match statistic(&idx) {
                    Ok(s) => return Ok((Some(s), attempt)),
                    Err(Error::UndefinedMetric(_)) => continue,
                    Err(e) => return Err(e),
                }
            }
            Ok((None, cap))
        })
        .collect::<Result<Vec<_>>>()?;
    let attempts: usize = draws.iter().map(|d| d.1).sum();
    let mut stats: Vec<f64> = draws.iter().filter_map(|d| d.0).collect();
    if attempts > cap || stats.len() < n_boot {
        return Err(Error::DegenerateBootstrap {
            valid: stats.len(),
            attempts,
        });
    }
    stats.sort_by(f64::total_cmp);
    Ok(CiEstimate {
        point,
        lower: percentile_sorted(&stats, 2.5),
        upper: percentile_sorted(&stats, 97.5),
        n_boot,
        seed,
    })
}
