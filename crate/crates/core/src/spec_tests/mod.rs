//! Specification tests: per-cell winner-share t statistics with a max-|ξ|
//! bootstrap test of the power asymmetry, and a Cramér–von Mises type
//! distance between the model and empirical joint cdfs of (W, X).

mod rw;
mod xi;

pub use rw::{
    rw_bootstrap_pvalue, rw_by_cell, rw_statistic, rw_statistic_naive, winning_bid_quantile_grid,
    winning_bid_quantile_grid_naive, RwCell, RwOptions, WinningBidGrid,
};
pub use xi::{cell_stats, cell_stats_from_cells, max_xi_test, CellStats, DEFAULT_MIN_CELL};

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestReport {
    pub name: String,
    pub statistic: f64,
    /// `(1/B') Σ_b 1[statistic ≤ statistic_b]` over the `B'` successful replicates.
    pub p_value: f64,
    pub b: usize,
    pub seed: u64,
    pub failures: usize,
    /// Replicate statistics in replicate order.
    pub replicates: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub per_cell: Option<Vec<CellStats>>,
}

fn exceedance_share(statistic: f64, replicates: &[f64]) -> f64 {
    if replicates.is_empty() {
        return 1.0;
    }
    replicates.iter().filter(|&&r| statistic <= r).count() as f64 / replicates.len() as f64
}
