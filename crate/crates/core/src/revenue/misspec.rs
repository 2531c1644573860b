//! Cost of ignoring asymmetry: two bidders with true cdfs `F(v)^{κλ_i}` on
//! `[0, 1]` (parent `V(τ) = τ^{1/κ}`), against a seller who fits the
//! symmetric model implied by the same winning-bid distribution.

use serde::{Deserialize, Serialize};

use super::{RevenueContext, RiemannRule};
use crate::error::{Error, Result};
use crate::model::PowerCurve;

/// `(λ₁, λ₂, κ)` rows of the high/low asymmetry table.
pub const TABLE1_ROWS: [(f64, f64, f64); 10] = [
    (0.1, 3.9, 1.0),
    (0.1, 3.9, 2.0),
    (0.1, 3.9, 5.0),
    (0.1, 3.9, 10.0),
    (0.1, 3.9, 50.0),
    (0.1, 0.9, 1.0),
    (0.1, 0.9, 2.0),
    (0.1, 0.9, 5.0),
    (0.1, 0.9, 10.0),
    (0.1, 0.9, 50.0),
];

/// `(λ₁, λ₂, κ)` rows approaching symmetry with `λ₁ + λ₂ = 1`.
pub const TABLE2_ROWS: [(f64, f64, f64); 5] =
    [(0.1, 0.9, 1.0), (0.2, 0.8, 1.0), (0.3, 0.7, 1.0), (0.4, 0.6, 1.0), (0.5, 0.5, 1.0)];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MisspecRow {
    pub lambda1: f64,
    pub lambda2: f64,
    pub kappa: f64,
    /// Optimal reserve level of the true model.
    pub r_asym: f64,
    pub rp_asym: f64,
    /// Reserve level (true parent scale) implied by the symmetric fit.
    pub r_mis: f64,
    pub rp_mis: f64,
    pub rev_asym: f64,
    pub rev_mis: f64,
    /// `(rev_asym − rev_mis)/rev_asym`, as a fraction.
    pub pct_loss: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MisspecOptions {
    /// Left Riemann rule on `i/m`.
    pub quadrature_cells: usize,
    /// Reserve levels `i/m`, `i = 1, …, m − 1`.
    pub reserve_cells: usize,
    /// Central-difference step for the symmetric quantile slope.
    pub fd_step: f64,
    pub bracket: (f64, f64),
}

impl Default for MisspecOptions {
    fn default() -> Self {
        Self { quadrature_cells: 1000, reserve_cells: 1000, fd_step: 1e-4, bracket: (0.01, 0.99) }
    }
}

fn bisect(mut lo: f64, mut hi: f64, what: &str, f: impl Fn(f64) -> f64) -> Result<f64> {
    let (flo, fhi) = (f(lo), f(hi));
    if !(flo.is_finite() && fhi.is_finite()) || flo * fhi > 0.0 {
        return Err(Error::RootFinding(format!("{what}: no sign change on [{lo}, {hi}] ({flo}, {fhi})")));
    }
    if flo == 0.0 {
        return Ok(lo);
    }
    let rising = flo < 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let fm = f(mid);
        if fm == 0.0 {
            return Ok(mid);
        }
        if (fm < 0.0) == rising {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Symmetric-model cdf matching the true winning-bid law of the pair:
/// `1 − √((1 − v^{κλ₁})(1 − v^{κλ₂}))`.
fn symmetric_cdf(v: f64, a: f64, b: f64) -> f64 {
    1.0 - ((1.0 - v.powf(a)) * (1.0 - v.powf(b))).max(0.0).sqrt()
}

fn symmetric_quantile(r: f64, a: f64, b: f64) -> Result<f64> {
    if r <= 0.0 {
        return Ok(0.0);
    }
    if r >= 1.0 {
        return Ok(1.0);
    }
    bisect(0.0, 1.0, "symmetric quantile", |v| symmetric_cdf(v, a, b) - r)
}

pub fn misspec_study(lambda1: f64, lambda2: f64, kappa: f64, opts: &MisspecOptions) -> Result<MisspecRow> {
    if !(lambda1 > 0.0 && lambda2 > 0.0 && kappa > 0.0) || ![lambda1, lambda2, kappa].iter().all(|v| v.is_finite()) {
        return Err(Error::InvalidParameter("misspecification study needs positive λ₁, λ₂, κ".into()));
    }
    let (a, b) = (kappa * lambda1, kappa * lambda2);
    let curve = PowerCurve::new(vec![1.0], 1.0 / kappa)?;
    let rule = RiemannRule::left(opts.quadrature_cells);
    let ctx = RevenueContext::with_rule(&[1.0], vec![lambda1, lambda2], &curve, 0.0, 0.0, rule)?;

    let h = opts.fd_step;
    let vs = |r: f64| symmetric_quantile(r, a, b);
    let foc = |r: f64| -> f64 {
        match (vs(r), vs(r + h), vs(r - h)) {
            (Ok(v), Ok(up), Ok(down)) => v - (up - down) / (2.0 * h) * (1.0 - r),
            _ => f64::NAN,
        }
    };
    let r_sym = bisect(opts.bracket.0, opts.bracket.1, "misspecified reserve", foc)?;
    let rp_mis = vs(r_sym)?;
    let r_mis = rp_mis.powf(kappa);
    let rev_mis = ctx.expected_revenue(r_mis)?;

    // The misspecified level joins the candidate set so the loss is never negative.
    let m = opts.reserve_cells;
    let mut levels: Vec<f64> = (1..m).map(|i| i as f64 / m as f64).collect();
    levels.push(r_mis);
    let best = ctx.optimal_reserve_on(&levels)?;
    let rev_asym = best.pi_star;
    Ok(MisspecRow {
        lambda1,
        lambda2,
        kappa,
        r_asym: best.r_star,
        rp_asym: best.reserve_price,
        r_mis,
        rp_mis,
        rev_asym,
        rev_mis,
        pct_loss: (rev_asym - rev_mis) / rev_asym,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn symmetric_cdf_inverts() {
        for &r in &[0.01, 0.3, 0.5, 0.99] {
            let v = symmetric_quantile(r, 0.1, 3.9).unwrap();
            assert!((symmetric_cdf(v, 0.1, 3.9) - r).abs() < 1e-12);
        }
    }

    #[test]
    fn symmetric_pair_has_no_loss() {
        let row = misspec_study(1.0, 1.0, 1.0, &MisspecOptions::default()).unwrap();
        assert!((row.rp_mis - 0.5).abs() < 1e-6);
        assert!((row.rp_asym - 0.5).abs() < 1e-9);
        assert!(row.pct_loss >= 0.0 && row.pct_loss < 1e-9);
    }

    #[test]
    fn high_asymmetry_row() {
        let row = misspec_study(0.1, 3.9, 1.0, &MisspecOptions::default()).unwrap();
        assert!((row.rp_asym - 0.6630).abs() <= 0.005);
        assert!((row.rp_mis - 0.5451).abs() <= 0.005);
        assert!((row.rev_asym - 0.5389).abs() <= 0.005);
        assert!((row.rev_mis - 0.5059).abs() <= 0.005);
        assert!((100.0 * row.pct_loss - 6.12).abs() <= 0.3);
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(misspec_study(0.0, 1.0, 1.0, &MisspecOptions::default()).is_err());
    }
}
