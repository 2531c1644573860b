//! Revenue by type composition for a two-type population, with the
//! comparison between one extra bidder and an optimal reserve.

use serde::{Deserialize, Serialize};

use super::{RevenueContext, DEFAULT_RESERVE_GRID};
use crate::error::{Error, Result};
use crate::model::{AsymmetrySpec, BidderRoster, QuantileModel};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SwapRow<T = f64> {
    pub n: usize,
    /// Bidders of the reference type (label 0).
    pub count_a: usize,
    /// Bidders of the other type (label 1).
    pub count_b: usize,
    /// Revenue with the reserve at the truncation level.
    pub nonstrategic: T,
    pub r_star: T,
    pub reserve_price: T,
    /// Revenue at the optimal reserve.
    pub strategic: T,
    /// Reserve-free revenue after adding one type-0 bidder.
    pub add_a: T,
    /// Reserve-free revenue after adding one type-1 bidder.
    pub add_b: T,
    /// The extra type-0 bidder is worth less than the optimal reserve.
    pub bk_violation_a: bool,
    pub bk_violation_b: bool,
    /// Relative change in reserve-free revenue when one type-1 bidder is
    /// replaced by a type-0 bidder; `None` without a type-1 bidder.
    pub swap_delta: Option<T>,
}

/// One row per `n` in `n_lo..=n_hi` and per split `count_a + count_b = n`.
pub fn type_swap_table<T: Scalar>(
    x: &[T],
    n_range: (usize, usize),
    spec: &AsymmetrySpec<T>,
    curve: &dyn QuantileModel<T>,
    v0: T,
    epsilon: T,
) -> Result<Vec<SwapRow<T>>> {
    let (n_lo, n_hi) = n_range;
    if n_lo < 2 || n_hi < n_lo {
        return Err(Error::InvalidParameter(format!("bidder range {n_lo}..={n_hi} must start at 2 or more")));
    }
    let revenue_at = |a: usize, b: usize, strategic: bool| -> Result<(T, T, T)> {
        let roster = BidderRoster::from_type_counts(&[a, b])?;
        let ctx = RevenueContext::from_spec(x, spec, &roster, curve, v0, epsilon)?;
        if strategic {
            let s = ctx.optimal_reserve(DEFAULT_RESERVE_GRID)?;
            Ok((s.pi_star, s.r_star, s.reserve_price))
        } else {
            Ok((ctx.expected_revenue(epsilon)?, epsilon, curve.quantile(epsilon, x)?))
        }
    };
    let mut rows = Vec::new();
    for n in n_lo..=n_hi {
        for a in (0..=n).rev() {
            let b = n - a;
            let (nonstrategic, _, _) = revenue_at(a, b, false)?;
            let (strategic, r_star, reserve_price) = revenue_at(a, b, true)?;
            let (add_a, _, _) = revenue_at(a + 1, b, false)?;
            let (add_b, _, _) = revenue_at(a, b + 1, false)?;
            let swap_delta = if b > 0 {
                let (swapped, _, _) = revenue_at(a + 1, b - 1, false)?;
                Some((swapped - nonstrategic) / nonstrategic)
            } else {
                None
            };
            rows.push(SwapRow {
                n,
                count_a: a,
                count_b: b,
                nonstrategic,
                r_star,
                reserve_price,
                strategic,
                add_a,
                add_b,
                bk_violation_a: add_a < strategic,
                bk_violation_b: add_b < strategic,
                swap_delta,
            });
        }
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::PowerCurve;

    #[test]
    fn symmetric_split_does_not_matter() {
        let curve = PowerCurve::uniform();
        let rows = type_swap_table(&[1.0], (2, 4), &AsymmetrySpec::two_types(1.0), &curve, 0.0, 0.0).unwrap();
        for n in 2..=4 {
            let revs: Vec<f64> = rows.iter().filter(|r| r.n == n).map(|r| r.nonstrategic).collect();
            assert!(revs.iter().all(|v| (v - revs[0]).abs() < 1e-12));
        }
    }

    #[test]
    fn extra_bidder_raises_reserve_free_revenue() {
        // Untruncated: with ε > 0 the integral drops the top of the second
        // order statistic, so a crowded auction can lose revenue.
        let curve = PowerCurve::new(vec![1.0], 0.5).unwrap();
        let rows = type_swap_table(&[1.0], (2, 6), &AsymmetrySpec::two_types(0.3), &curve, 0.0, 0.0).unwrap();
        for r in &rows {
            assert!(r.add_a > r.nonstrategic && r.add_b > r.nonstrategic, "{r:?}");
            assert!(r.strategic >= r.nonstrategic);
            if let Some(d) = r.swap_delta {
                // Type 0 is the stronger bidder here.
                assert!(d > 0.0);
            }
        }
    }

    #[test]
    fn reserve_beats_extra_weak_bidder_on_convex_curve() {
        use crate::model::{uniform_grid, ParentQuantileCurve};
        let curve = ParentQuantileCurve::tabulate(&PowerCurve::new(vec![1.0], 2.0).unwrap(), uniform_grid(100)).unwrap();
        let rows = type_swap_table(&[1.0f64], (2, 2), &AsymmetrySpec::two_types(0.6988), &curve, 0.0, 0.1).unwrap();
        let mixed = rows.iter().find(|r| r.count_a == 1 && r.count_b == 1).unwrap();
        assert!(mixed.bk_violation_b, "{mixed:?}");
        assert!((mixed.strategic - 0.2303).abs() < 2e-3 && (mixed.add_b - 0.2255).abs() < 2e-3);
    }
}
