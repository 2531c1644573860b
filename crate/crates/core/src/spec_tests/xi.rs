//! Winner-type shares by type proportion against the model share
//! `ω_{p,q}(λ) = p/(p + λq)`.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{exceedance_share, TestReport};
use crate::bootstrap::{resample_indices, MAX_FAILURE_SHARE};
use crate::data::AuctionRecord;
use crate::error::{Error, Result};
use crate::mle::{fit_two_type_cells, type_cells, TypeCell};

/// Cells need strictly more auctions than this.
pub const DEFAULT_MIN_CELL: usize = 30;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellStats {
    /// Type-0 bidders.
    pub p: usize,
    /// Type-1 bidders.
    pub q: usize,
    pub l_pq: usize,
    /// Share of auctions won by type 0.
    pub omega_hat: f64,
    pub omega_model: f64,
    pub sigma_hat_sq: f64,
    pub xi: f64,
    /// Bootstrap p-value of `|ξ|`, when computed.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p_value: Option<f64>,
}

fn model_share(p: usize, q: usize, lambda: f64) -> f64 {
    p as f64 / (p as f64 + lambda * q as f64)
}

fn share(c: &TypeCell) -> f64 {
    c.wins0 as f64 / (c.wins0 + c.wins1) as f64
}

/// Variance estimates of every asymmetric cell; the cross-cell sum runs over
/// asymmetric cells only (symmetric cells contribute `ω(1−ω) = 0`).
fn sigma_sq_all(cells: &[TypeCell]) -> Vec<f64> {
    let l_asy: usize = cells.iter().map(|c| c.wins0 + c.wins1).sum();
    let l_asy = l_asy as f64;
    let terms: Vec<(f64, f64)> = cells
        .iter()
        .map(|c| {
            let w = share(c);
            ((c.wins0 + c.wins1) as f64 / l_asy, w * (1.0 - w))
        })
        .collect();
    let a: f64 = terms.iter().map(|(s, v)| s * v).sum();
    terms
        .iter()
        .map(|&(s, v)| {
            if a <= 0.0 {
                return 0.0;
            }
            let k = v / a;
            let others = a - s * v;
            ((k * s - 1.0).powi(2) * v + k * k * s * others).max(0.0)
        })
        .collect()
}

fn xi_value(l: usize, diff: f64, sigma_sq: f64) -> f64 {
    if diff == 0.0 {
        0.0
    } else if sigma_sq > 0.0 {
        (l as f64).sqrt() * diff / sigma_sq.sqrt()
    } else {
        f64::INFINITY.copysign(diff)
    }
}

/// Statistics of the asymmetric cells with more than `min_cell` auctions.
pub fn cell_stats_from_cells(cells: &[TypeCell], lambda_hat: f64, min_cell: usize) -> Result<Vec<CellStats>> {
    let cells: Vec<TypeCell> = cells.iter().copied().filter(|c| c.p > 0 && c.q > 0 && c.wins0 + c.wins1 > 0).collect();
    let sig = sigma_sq_all(&cells);
    let out: Vec<CellStats> = cells
        .iter()
        .zip(&sig)
        .filter(|(c, _)| c.wins0 + c.wins1 > min_cell)
        .map(|(c, &s2)| {
            let l = c.wins0 + c.wins1;
            let omega_hat = share(c);
            let omega_model = model_share(c.p, c.q, lambda_hat);
            CellStats {
                p: c.p,
                q: c.q,
                l_pq: l,
                omega_hat,
                omega_model,
                sigma_hat_sq: s2,
                xi: xi_value(l, omega_hat - omega_model, s2),
                p_value: None,
            }
        })
        .collect();
    if out.is_empty() {
        return Err(Error::NoQualifyingCells { min_cell });
    }
    Ok(out)
}

pub fn cell_stats(records: &[AuctionRecord], lambda_hat: f64, min_cell: usize) -> Result<Vec<CellStats>> {
    cell_stats_from_cells(&type_cells(records)?, lambda_hat, min_cell)
}

/// Max-|ξ| test with the recentred pairwise bootstrap: each replicate
/// re-estimates λ and takes the max over cells qualifying both in the
/// original sample and in the replicate. Per-cell p-values count only the
/// replicates where the cell qualifies.
pub fn max_xi_test(records: &[AuctionRecord], b: usize, seed: u64, min_cell: usize) -> Result<TestReport> {
    if b == 0 {
        return Err(Error::InvalidParameter("bootstrap needs B ≥ 1".into()));
    }
    let cells = type_cells(records)?;
    let (lambda_hat, _) = fit_two_type_cells(&cells)?;
    let mut stats = cell_stats_from_cells(&cells, lambda_hat, min_cell)?;
    let statistic = stats.iter().map(|c| c.xi.abs()).fold(0.0, f64::max);

    // Compact records: (cell slot or None for symmetric auctions, type-0 win).
    let slot_of: BTreeMap<(usize, usize), usize> = stats.iter().enumerate().map(|(k, c)| ((c.p, c.q), k)).collect();
    let mut keys: Vec<(usize, usize)> = cells.iter().map(|c| (c.p, c.q)).collect();
    keys.sort_unstable();
    let compact: Vec<(Option<usize>, bool)> = records
        .iter()
        .map(|r| {
            let (p, q) = r.type_pair()?;
            let key = if p > 0 && q > 0 { keys.binary_search(&(p, q)).ok() } else { None };
            Ok((key, r.winner_label() == 0))
        })
        .collect::<Result<_>>()?;

    let replicate = |i: usize| -> Option<(f64, Vec<Option<f64>>)> {
        let mut rc: Vec<TypeCell> = keys.iter().map(|&(p, q)| TypeCell { p, q, wins0: 0, wins1: 0 }).collect();
        for k in resample_indices(records.len(), seed, i as u64) {
            if let (Some(slot), won0) = compact[k] {
                if won0 {
                    rc[slot].wins0 += 1;
                } else {
                    rc[slot].wins1 += 1;
                }
            }
        }
        let (lambda_b, _) = fit_two_type_cells(&rc).ok()?;
        let present: Vec<TypeCell> = rc.into_iter().filter(|c| c.wins0 + c.wins1 > 0).collect();
        let sig = sigma_sq_all(&present);
        let mut per_cell = vec![None; stats.len()];
        let mut max_b = 0.0f64;
        for (c, &s2) in present.iter().zip(&sig) {
            let l = c.wins0 + c.wins1;
            let Some(&slot) = slot_of.get(&(c.p, c.q)) else { continue };
            if l <= min_cell {
                continue;
            }
            let orig = &stats[slot];
            let diff = (model_share(c.p, c.q, lambda_b) - share(c)) - (orig.omega_model - orig.omega_hat);
            let xi_b = xi_value(l, diff, s2).abs();
            per_cell[slot] = Some(xi_b);
            max_b = max_b.max(xi_b);
        }
        Some((max_b, per_cell))
    };
    let outcomes: Vec<Option<(f64, Vec<Option<f64>>)>> = (0..b).into_par_iter().map(replicate).collect();
    let failures = outcomes.iter().filter(|o| o.is_none()).count();
    if failures as f64 > MAX_FAILURE_SHARE * b as f64 {
        return Err(Error::BootstrapAborted { failures, total: b });
    }
    let ok: Vec<(f64, Vec<Option<f64>>)> = outcomes.into_iter().flatten().collect();
    let replicates: Vec<f64> = ok.iter().map(|(m, _)| *m).collect();
    for (slot, cell) in stats.iter_mut().enumerate() {
        let reps: Vec<f64> = ok.iter().filter_map(|(_, pc)| pc[slot]).collect();
        cell.p_value = Some(exceedance_share(cell.xi.abs(), &reps));
    }
    Ok(TestReport {
        name: "max_xi".into(),
        statistic,
        p_value: exceedance_share(statistic, &replicates),
        b,
        seed,
        failures,
        replicates,
        per_cell: Some(stats),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cell(p: usize, q: usize, wins0: usize, wins1: usize) -> TypeCell {
        TypeCell { p, q, wins0, wins1 }
    }

    #[test]
    fn exact_model_share_gives_zero() {
        let stats = cell_stats_from_cells(&[cell(1, 1, 20, 20), cell(1, 2, 30, 10)], 1.0, 10).unwrap();
        assert_eq!(stats.len(), 2);
        assert_eq!(stats[0].xi, 0.0);
        assert!(stats[1].xi > 0.0);
    }

    #[test]
    fn variance_oracle() {
        // Two cells: shares 0.5 (L=40) and 0.75 (L=40).
        let stats = cell_stats_from_cells(&[cell(1, 1, 20, 20), cell(1, 2, 30, 10)], 1.0, 10).unwrap();
        let (v1, v2) = (0.25, 0.1875);
        let a = 0.5 * v1 + 0.5 * v2;
        let k1 = v1 / a;
        let oracle = (k1 * 0.5 - 1.0f64).powi(2) * v1 + k1 * k1 * 0.5 * (0.5 * v2);
        assert!((stats[0].sigma_hat_sq - oracle).abs() < 1e-15);
    }

    #[test]
    fn small_cells_are_excluded() {
        assert!(matches!(
            cell_stats_from_cells(&[cell(1, 1, 10, 10)], 1.0, 30),
            Err(Error::NoQualifyingCells { min_cell: 30 })
        ));
        // Symmetric cells never qualify.
        assert!(cell_stats_from_cells(&[cell(2, 0, 40, 0)], 1.0, 30).is_err());
    }
}
