//! Pairwise (whole-record) bootstrap with percentile intervals.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

/// Largest tolerated share of failed replicates.
pub const MAX_FAILURE_SHARE: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub coverage: f64,
    pub low: f64,
    pub high: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapResult {
    /// Statistic on the original sample.
    pub point: Vec<f64>,
    /// Successful replicates; `replicates.len() + failures == b`.
    pub replicates: Vec<Vec<f64>>,
    /// One interval per requested coverage and statistic component, component-major.
    pub intervals: Vec<Vec<Interval>>,
    pub b: usize,
    pub seed: u64,
    pub failures: usize,
}

/// Type-7 sample quantile of sorted data.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = (n - 1) as f64 * p.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Percentile interval of `values` at `coverage`.
pub fn percentile_interval(values: &[f64], coverage: f64) -> Interval {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let alpha = (1.0 - coverage) / 2.0;
    Interval { coverage, low: quantile_sorted(&v, alpha), high: quantile_sorted(&v, 1.0 - alpha) }
}

/// Indices of one resample of size `n`, drawn from stream `b` of `seed`.
pub fn resample_indices(n: usize, seed: u64, b: u64) -> Vec<usize> {
    let mut r = rng::stream(seed, b);
    (0..n).map(|_| r.gen_range(0..n)).collect()
}

/// Runs `statistic` on the original records and on `b` resamples with
/// replacement. Failed replicates are dropped; more than
/// [`MAX_FAILURE_SHARE`] of failures aborts.
pub fn pairwise_bootstrap<R, F>(records: &[R], b: usize, seed: u64, coverages: &[f64], statistic: F) -> Result<BootstrapResult>
where
    R: Clone + Sync,
    F: Fn(&[R]) -> Result<Vec<f64>> + Sync,
{
    if b == 0 {
        return Err(Error::InvalidParameter("bootstrap needs B ≥ 1".into()));
    }
    let point = statistic(records)?;
    let outcomes: Vec<Option<Vec<f64>>> = (0..b)
        .into_par_iter()
        .map(|i| {
            let sample: Vec<R> = resample_indices(records.len(), seed, i as u64).into_iter().map(|k| records[k].clone()).collect();
            statistic(&sample).ok().filter(|v| v.len() == point.len())
        })
        .collect();
    let failures = outcomes.iter().filter(|o| o.is_none()).count();
    if failures as f64 > MAX_FAILURE_SHARE * b as f64 {
        return Err(Error::BootstrapAborted { failures, total: b });
    }
    let replicates: Vec<Vec<f64>> = outcomes.into_iter().flatten().collect();
    let intervals = (0..point.len())
        .map(|k| {
            let comp: Vec<f64> = replicates.iter().map(|r| r[k]).collect();
            coverages.iter().map(|&c| percentile_interval(&comp, c)).collect()
        })
        .collect();
    Ok(BootstrapResult { point, replicates, intervals, b, seed, failures })
}
