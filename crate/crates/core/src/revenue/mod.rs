//! Seller revenue and reserve prices for an ascending auction with
//! power-asymmetric bidders.
//!
//! With `Λ = Σ λ_i`, `Λ₋ᵢ = Λ − λ_i`, seller value `V₀` and reserve level `r`
//! (reserve price `R = V(r|X)`), the expected payoff is
//! `V₀ r^Λ + R Σ_i r^{Λ₋ᵢ}(1 − r^{λ_i}) + ∫_r^{1−ε} V(t|X) {(1−N)Λ t^{Λ−1} + Σ_i Λ₋ᵢ t^{Λ₋ᵢ−1}} dt`.

mod misspec;
mod swap;

pub use misspec::{misspec_study, MisspecOptions, MisspecRow, TABLE1_ROWS, TABLE2_ROWS};
pub use swap::{type_swap_table, SwapRow};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{AsymmetrySpec, BidderRoster, QuantileModel};
use crate::scalar::Scalar;

/// Truncation index used with estimated curves.
pub const DEFAULT_EPSILON: f64 = 0.1;
/// Reserve-level grid size used by [`RevenueContext::optimal_reserve`].
pub const DEFAULT_RESERVE_GRID: usize = 981;
/// Midpoint cells used for closed-form curves without tabulation nodes.
pub const DEFAULT_MIDPOINT_CELLS: usize = 2000;

/// Riemann rule `∫ f ≈ Σ_k w_k f(t_k)` on `(0, 1)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiemannRule<T = f64> {
    pub nodes: Vec<T>,
    pub weights: Vec<T>,
}

impl<T: Scalar> RiemannRule<T> {
    /// Left endpoints `i/m`, `i = 1, …, m − 1` (the `i = 0` node carries no mass
    /// for integrands vanishing at zero), weight `1/m`.
    pub fn left(m: usize) -> Self {
        let h = T::one() / T::from_usize_lossy(m);
        Self { nodes: (1..m).map(|i| T::from_usize_lossy(i) * h).collect(), weights: vec![h; m.saturating_sub(1)] }
    }

    /// Midpoints `(i + ½)/m`, weight `1/m`.
    pub fn midpoint(m: usize) -> Self {
        let h = T::one() / T::from_usize_lossy(m);
        let half = T::lit(0.5);
        Self { nodes: (0..m).map(|i| (T::from_usize_lossy(i) + half) * h).collect(), weights: vec![h; m] }
    }

    /// Tabulation nodes treated as cell midpoints; each weight is the width of
    /// the cell between neighbouring midpoints (neighbour spacing at the ends).
    pub fn on_nodes(nodes: &[T]) -> Self {
        let n = nodes.len();
        let half = T::lit(0.5);
        let weights = (0..n)
            .map(|k| match (k, n) {
                (_, 1) => T::one(),
                (0, _) => nodes[1] - nodes[0],
                (k, n) if k == n - 1 => nodes[n - 1] - nodes[n - 2],
                (k, _) => (nodes[k + 1] - nodes[k - 1]) * half,
            })
            .collect();
        Self { nodes: nodes.to_vec(), weights }
    }
}

/// `1 − r^Λ`.
pub fn selling_probability<T: Scalar>(r: T, lambda_total: T) -> T {
    T::one() - r.powf(lambda_total)
}

/// Expected revenue evaluated on a reserve-level grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RevenueCurve<T = f64> {
    pub r_grid: Vec<T>,
    pub pi: Vec<T>,
    pub v0: T,
    pub epsilon: T,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReserveSolution<T = f64> {
    pub r_star: T,
    pub reserve_price: T,
    pub pi_star: T,
}

/// Everything the revenue formulas need for one auction configuration.
pub struct RevenueContext<'a, T: Scalar> {
    x: Vec<T>,
    lambdas: Vec<T>,
    curve: &'a dyn QuantileModel<T>,
    v0: T,
    epsilon: T,
    rule: RiemannRule<T>,
    node_values: Vec<T>,
}

fn tol<T: Scalar>() -> T {
    T::epsilon() * T::lit(64.0)
}

impl<'a, T: Scalar> RevenueContext<'a, T> {
    /// Integrates on the curve's own nodes when it has them, else on
    /// [`DEFAULT_MIDPOINT_CELLS`] midpoints.
    pub fn new(x: &[T], lambdas: Vec<T>, curve: &'a dyn QuantileModel<T>, v0: T, epsilon: T) -> Result<Self> {
        let rule = match curve.nodes() {
            Some(nodes) => RiemannRule::on_nodes(nodes),
            None => RiemannRule::midpoint(DEFAULT_MIDPOINT_CELLS),
        };
        Self::with_rule(x, lambdas, curve, v0, epsilon, rule)
    }

    pub fn from_spec(
        x: &[T],
        spec: &AsymmetrySpec<T>,
        roster: &BidderRoster<T>,
        curve: &'a dyn QuantileModel<T>,
        v0: T,
        epsilon: T,
    ) -> Result<Self> {
        Self::new(x, spec.lambdas(roster)?, curve, v0, epsilon)
    }

    pub fn with_rule(
        x: &[T],
        lambdas: Vec<T>,
        curve: &'a dyn QuantileModel<T>,
        v0: T,
        epsilon: T,
        rule: RiemannRule<T>,
    ) -> Result<Self> {
        if lambdas.len() < 2 || lambdas.iter().any(|l| !(*l > T::zero() && l.is_finite())) {
            return Err(Error::InvalidParameter("revenue needs at least two positive exponents".into()));
        }
        if !(epsilon >= T::zero() && epsilon < T::lit(0.5)) {
            return Err(Error::InvalidParameter(format!("truncation index must lie in [0, 0.5), got {epsilon}")));
        }
        let (lo, hi) = curve.range();
        let upper = T::one() - epsilon;
        let node_values = rule
            .nodes
            .iter()
            .map(|&t| if t >= lo - tol::<T>() && t <= hi + tol::<T>() && t <= upper + tol::<T>() { curve.quantile(t, x) } else { Ok(T::nan()) })
            .collect::<Result<Vec<T>>>()?;
        Ok(Self { x: x.to_vec(), lambdas, curve, v0, epsilon, rule, node_values })
    }

    pub fn lambdas(&self) -> &[T] {
        &self.lambdas
    }

    pub fn lambda_total(&self) -> T {
        self.lambdas.iter().copied().sum()
    }

    pub fn epsilon(&self) -> T {
        self.epsilon
    }

    fn check_level(&self, r: T) -> Result<()> {
        let t = tol::<T>();
        if r >= self.epsilon - t && r <= T::one() - self.epsilon + t {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!("reserve level {r} outside [{}, {}]", self.epsilon, T::one() - self.epsilon)))
        }
    }

    /// Expected seller payoff at reserve level `r`.
    pub fn expected_revenue(&self, r: T) -> Result<T> {
        self.check_level(r)?;
        let total = self.lambda_total();
        let n = T::from_usize_lossy(self.lambdas.len());
        let reserve = self.curve.quantile(r, &self.x)?;
        let mut pi = self.v0 * r.powf(total);
        pi += reserve * self.lambdas.iter().map(|&l| r.powf(total - l) * (T::one() - r.powf(l))).sum::<T>();
        let upper = T::one() - self.epsilon + tol::<T>();
        let lower = r - tol::<T>();
        for ((&t, &w), &v) in self.rule.nodes.iter().zip(&self.rule.weights).zip(&self.node_values) {
            if t < lower || t > upper {
                continue;
            }
            let density = (T::one() - n) * total * t.powf(total - T::one())
                + self.lambdas.iter().map(|&l| (total - l) * t.powf(total - l - T::one())).sum::<T>();
            pi += w * v * density;
        }
        Ok(pi)
    }

    pub fn revenue_curve(&self, r_grid: &[T]) -> Result<RevenueCurve<T>> {
        let pi = r_grid.iter().map(|&r| self.expected_revenue(r)).collect::<Result<Vec<_>>>()?;
        Ok(RevenueCurve { r_grid: r_grid.to_vec(), pi, v0: self.v0, epsilon: self.epsilon })
    }

    /// Uniform grid of `size` levels on `[ε, 1 − ε]`.
    pub fn reserve_grid(&self, size: usize) -> Vec<T> {
        let span = T::one() - self.epsilon - self.epsilon;
        if size <= 1 {
            return vec![self.epsilon];
        }
        let step = span / T::from_usize_lossy(size - 1);
        (0..size).map(|k| self.epsilon + step * T::from_usize_lossy(k)).collect()
    }

    /// Grid argmax of the expected revenue; ties go to the smallest level.
    pub fn optimal_reserve_on(&self, r_grid: &[T]) -> Result<ReserveSolution<T>> {
        let mut best: Option<(T, T)> = None;
        for &r in r_grid {
            let pi = self.expected_revenue(r)?;
            if best.is_none_or(|(_, b)| pi > b) {
                best = Some((r, pi));
            }
        }
        let (r_star, pi_star) = best.ok_or(Error::InvalidParameter("empty reserve grid".into()))?;
        Ok(ReserveSolution { r_star, reserve_price: self.curve.quantile(r_star, &self.x)?, pi_star })
    }

    pub fn optimal_reserve(&self, grid_size: usize) -> Result<ReserveSolution<T>> {
        self.optimal_reserve_on(&self.reserve_grid(grid_size))
    }

    /// `R − V'(r)(r/Λ) Σ_i (r^{−λ_i} − 1) − V₀`; zero at an interior stationary level.
    pub fn foc_residual(&self, r: T) -> Result<T> {
        let total = self.lambda_total();
        let reserve = self.curve.quantile(r, &self.x)?;
        let slope = self.curve.derivative(r, &self.x)?;
        let sum: T = self.lambdas.iter().map(|&l| r.powf(-l) - T::one()).sum();
        Ok(reserve - slope * (r / total) * sum - self.v0)
    }
}

/// Revenue of `n` symmetric bidders:
/// `V₀ r^N + R N r^{N−1}(1−r) + N(N−1) ∫_r^{1−ε} V(t) t^{N−2}(1−t) dt`,
/// integrated with `rule`.
pub fn symmetric_expected_revenue<T: Scalar>(
    r: T,
    x: &[T],
    n: usize,
    curve: &dyn QuantileModel<T>,
    v0: T,
    epsilon: T,
    rule: &RiemannRule<T>,
) -> Result<T> {
    if n < 2 {
        return Err(Error::InvalidParameter("symmetric revenue needs n ≥ 2".into()));
    }
    let nn = T::from_usize_lossy(n);
    let reserve = curve.quantile(r, x)?;
    let mut pi = v0 * r.powf(nn) + reserve * nn * r.powf(nn - T::one()) * (T::one() - r);
    let upper = T::one() - epsilon + tol::<T>();
    let lower = r - tol::<T>();
    let c = nn * (nn - T::one());
    for (&t, &w) in rule.nodes.iter().zip(&rule.weights) {
        if t < lower || t > upper {
            continue;
        }
        pi += w * c * curve.quantile(t, x)? * t.powf(nn - T::lit(2.0)) * (T::one() - t);
    }
    Ok(pi)
}
