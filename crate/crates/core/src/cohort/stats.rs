//! Group-comparison tests used by the split balance report.

use statrs::distribution::{ChiSquared, ContinuousCDF, Normal};

use crate::error::{Error, Result};

/// Largest group size for which the Mann-Whitney p-value is computed by
/// exact enumeration.
pub const MWU_EXACT_MAX_N: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChiSquareResult {
    pub statistic: f64,
    pub df: usize,
    pub p_value: f64,
}

/// Pearson chi-square test of independence on an `r x c` table of counts,
/// without continuity correction. All-zero rows and columns are dropped.
pub fn chi_square(table: &[Vec<f64>]) -> Result<ChiSquareResult> {
    if table.is_empty() || table[0].is_empty() {
        return Err(Error::invalid("empty contingency table"));
    }
    let c = table[0].len();
    if table.iter().any(|r| r.len() != c) {
        return Err(Error::invalid("ragged contingency table"));
    }
    if table.iter().flatten().any(|v| !(*v >= 0.0)) {
        return Err(Error::invalid("contingency counts must be non-negative"));
    }
    let cols: Vec<usize> = (0..c).filter(|&j| table.iter().any(|r| r[j] > 0.0)).collect();
    let rows: Vec<&Vec<f64>> = table.iter().filter(|r| r.iter().any(|&v| v > 0.0)).collect();
    if rows.len() < 2 || cols.len() < 2 {
        return Ok(ChiSquareResult { statistic: 0.0, df: 0, p_value: 1.0 });
    }
    let row_tot: Vec<f64> = rows.iter().map(|r| cols.iter().map(|&j| r[j]).sum()).collect();
    let col_tot: Vec<f64> = cols.iter().map(|&j| rows.iter().map(|r| r[j]).sum()).collect();
    let total: f64 = row_tot.iter().sum();
    let mut stat = 0.0;
    for (r, rt) in rows.iter().zip(&row_tot) {
        for (&j, ct) in cols.iter().zip(&col_tot) {
            let e = rt * ct / total;
            stat += (r[j] - e) * (r[j] - e) / e;
        }
    }
    let df = (rows.len() - 1) * (cols.len() - 1);
    let dist = ChiSquared::new(df as f64).map_err(|e| Error::Numerical(e.to_string()))?;
    let p_value = if stat <= 0.0 { 1.0 } else { (1.0 - dist.cdf(stat)).clamp(0.0, 1.0) };
    Ok(ChiSquareResult { statistic: stat, df, p_value })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MannWhitneyResult {
    /// U statistic of the first sample.
    pub u: f64,
    pub p_value: f64,
    pub exact: bool,
}

/// Mid-ranks (1-based) of the pooled sample.
pub fn midranks(values: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && values[idx[j + 1]] == values[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

/// Two-sided Mann-Whitney U test. Exact enumeration over all rank
/// assignments when both groups have at most [`MWU_EXACT_MAX_N`] members,
/// otherwise the tie-corrected normal approximation with continuity
/// correction.
pub fn mann_whitney(a: &[f64], b: &[f64]) -> Result<MannWhitneyResult> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::invalid("Mann-Whitney needs two non-empty groups"));
    }
    if a.iter().chain(b).any(|v| !v.is_finite()) {
        return Err(Error::invalid("Mann-Whitney input must be finite"));
    }
    let (n1, n2) = (a.len(), b.len());
    let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    let ranks = midranks(&pooled);
    let r1: f64 = ranks[..n1].iter().sum();
    let u = r1 - (n1 * (n1 + 1)) as f64 / 2.0;
    let mu = (n1 * n2) as f64 / 2.0;

    if n1.max(n2) <= MWU_EXACT_MAX_N {
        let obs = (u - mu).abs();
        let mut extreme = 0u64;
        let mut total = 0u64;
        for_each_subset_sum(&ranks, n1, |rank_sum| {
            let uu = rank_sum - (n1 * (n1 + 1)) as f64 / 2.0;
            total += 1;
            if (uu - mu).abs() >= obs - 1e-9 {
                extreme += 1;
            }
        });
        return Ok(MannWhitneyResult {
            u,
            p_value: extreme as f64 / total as f64,
            exact: true,
        });
    }

    let n = (n1 + n2) as f64;
    let mut tie_term = 0.0;
    let mut sorted = pooled.clone();
    sorted.sort_by(f64::total_cmp);
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i;
        while j + 1 < sorted.len() && sorted[j + 1] == sorted[i] {
            j += 1;
        }
        let t = (j - i + 1) as f64;
        tie_term += t * t * t - t;
        i = j + 1;
    }
    let var = (n1 * n2) as f64 / 12.0 * ((n + 1.0) - tie_term / (n * (n - 1.0)));
    if var <= 0.0 {
        return Ok(MannWhitneyResult { u, p_value: 1.0, exact: false });
    }
    let z = ((u - mu).abs() - 0.5).max(0.0) / var.sqrt();
    let normal = Normal::new(0.0, 1.0).expect("standard normal");
    let p_value = (2.0 * (1.0 - normal.cdf(z))).clamp(0.0, 1.0);
    Ok(MannWhitneyResult { u, p_value, exact: false })
}

/// Visit the sum of every `k`-subset of `values`.
fn for_each_subset_sum(values: &[f64], k: usize, mut visit: impl FnMut(f64)) {
    fn rec(values: &[f64], start: usize, left: usize, acc: f64, visit: &mut dyn FnMut(f64)) {
        if left == 0 {
            visit(acc);
            return;
        }
        for i in start..=values.len() - left {
            rec(values, i + 1, left - 1, acc + values[i], visit);
        }
    }
    rec(values, 0, k, 0.0, &mut visit);
}
