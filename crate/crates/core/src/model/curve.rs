use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Covariates `X = [1, x']'` with strictly positive characteristics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<T>", into = "Vec<T>", bound(serialize = "T: Scalar + Serialize", deserialize = "T: Scalar + Deserialize<'de>"))]
pub struct CovariateVector<T = f64>(Vec<T>);

impl<T: Scalar> CovariateVector<T> {
    /// Prepends the intercept to the characteristics `x`.
    pub fn new(x: &[T]) -> Result<Self> {
        let mut entries = Vec::with_capacity(x.len() + 1);
        entries.push(T::one());
        entries.extend_from_slice(x);
        Self::from_entries(entries)
    }

    /// Full vector including the leading intercept.
    pub fn from_entries(entries: Vec<T>) -> Result<Self> {
        if entries.first() != Some(&T::one()) {
            return Err(Error::InvalidParameter("covariate vector must start with the intercept 1".into()));
        }
        if let Some(v) = entries[1..].iter().find(|v| !(**v > T::zero() && v.is_finite())) {
            return Err(Error::InvalidParameter(format!("covariates must be positive and finite, got {v}")));
        }
        Ok(Self(entries))
    }

    pub fn as_slice(&self) -> &[T] {
        &self.0
    }

    /// Characteristics without the intercept.
    pub fn characteristics(&self) -> &[T] {
        &self.0[1..]
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

impl<T: Scalar> TryFrom<Vec<T>> for CovariateVector<T> {
    type Error = Error;
    fn try_from(v: Vec<T>) -> Result<Self> {
        Self::from_entries(v)
    }
}

impl<T> From<CovariateVector<T>> for Vec<T> {
    fn from(v: CovariateVector<T>) -> Vec<T> {
        v.0
    }
}

fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).map(|(u, v)| *u * *v).sum()
}

/// Conditional quantile function `τ ↦ X'γ(τ)` of the parent distribution.
pub trait QuantileModel<T: Scalar>: Send + Sync {
    /// Number of coefficients, including the intercept.
    fn dim(&self) -> usize;

    /// Closed interval of admissible quantile levels.
    fn range(&self) -> (T, T);

    /// `γ(τ)`.
    fn coefficients(&self, tau: T) -> Result<Vec<T>>;

    /// `X'γ(τ)`.
    fn quantile(&self, tau: T, x: &[T]) -> Result<T> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), got: x.len() });
        }
        Ok(dot(&self.coefficients(tau)?, x))
    }

    /// `d X'γ(τ) / dτ`.
    fn derivative(&self, tau: T, x: &[T]) -> Result<T>;

    /// Quantile levels on which the model is tabulated, if any.
    fn nodes(&self) -> Option<&[T]> {
        None
    }

    /// Quantile of a bidder with exponent `lambda`: `X'γ(τ^{1/λ})`. The
    /// transformed level is clamped into [`Self::range`]; `τ` itself must lie in it.
    fn bidder_quantile(&self, tau: T, x: &[T], lambda: T) -> Result<T> {
        let (lo, hi) = self.range();
        check_range(tau, lo, hi)?;
        let level = tau.powf(lambda.recip()).max(lo).min(hi);
        self.quantile(level, x)
    }
}

fn level_tol<T: Scalar>() -> T {
    T::epsilon() * T::lit(64.0)
}

fn check_range<T: Scalar>(tau: T, lo: T, hi: T) -> Result<()> {
    let tol = level_tol::<T>();
    if tau >= lo - tol && tau <= hi + tol {
        Ok(())
    } else {
        Err(Error::OutsideGrid { tau: tau.as_f64(), lo: lo.as_f64(), hi: hi.as_f64() })
    }
}

/// Coefficients `γ(τ_g)` tabulated on an increasing grid of levels in `(0, 1)`,
/// evaluated by left step interpolation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(
    try_from = "RawCurve<T>",
    into = "RawCurve<T>",
    bound(serialize = "T: Scalar + Serialize", deserialize = "T: Scalar + Deserialize<'de>")
)]
pub struct ParentQuantileCurve<T = f64> {
    grid: Vec<T>,
    gamma: Vec<Vec<T>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct RawCurve<T> {
    grid: Vec<T>,
    gamma: Vec<Vec<T>>,
}

impl<T: Scalar> TryFrom<RawCurve<T>> for ParentQuantileCurve<T> {
    type Error = Error;
    fn try_from(raw: RawCurve<T>) -> Result<Self> {
        Self::new(raw.grid, raw.gamma)
    }
}

impl<T> From<ParentQuantileCurve<T>> for RawCurve<T> {
    fn from(c: ParentQuantileCurve<T>) -> Self {
        RawCurve { grid: c.grid, gamma: c.gamma }
    }
}

impl<T: Scalar> ParentQuantileCurve<T> {
    pub fn new(grid: Vec<T>, gamma: Vec<Vec<T>>) -> Result<Self> {
        if grid.is_empty() {
            return Err(Error::InvalidParameter("empty quantile grid".into()));
        }
        if gamma.len() != grid.len() {
            return Err(Error::DimensionMismatch { expected: grid.len(), got: gamma.len() });
        }
        if grid.iter().any(|t| !(*t > T::zero() && *t < T::one())) {
            return Err(Error::InvalidParameter("quantile grid must lie in (0, 1)".into()));
        }
        if grid.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidParameter("quantile grid must be strictly increasing".into()));
        }
        let d = gamma[0].len();
        if d == 0 {
            return Err(Error::InvalidParameter("empty coefficient vector".into()));
        }
        for g in &gamma {
            if g.len() != d {
                return Err(Error::DimensionMismatch { expected: d, got: g.len() });
            }
            if g.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidParameter("non-finite coefficient".into()));
            }
        }
        Ok(Self { grid, gamma })
    }

    /// Samples another model on `grid`.
    pub fn tabulate(model: &dyn QuantileModel<T>, grid: Vec<T>) -> Result<Self> {
        let gamma = grid.iter().map(|&t| model.coefficients(t)).collect::<Result<Vec<_>>>()?;
        Self::new(grid, gamma)
    }

    /// `γ(τ) ≡ (c, 0, …, 0)`.
    pub fn constant(grid: Vec<T>, c: T, dim: usize) -> Result<Self> {
        let mut g = vec![T::zero(); dim];
        g[0] = c;
        let gamma = vec![g; grid.len()];
        Self::new(grid, gamma)
    }

    pub fn grid(&self) -> &[T] {
        &self.grid
    }

    pub fn gamma(&self) -> &[Vec<T>] {
        &self.gamma
    }

    /// Index of the largest grid level at or below `tau`.
    pub fn index_at(&self, tau: T) -> Result<usize> {
        let (lo, hi) = self.range();
        check_range(tau, lo, hi)?;
        let tol = level_tol::<T>();
        let idx = self.grid.partition_point(|&g| g <= tau + tol);
        Ok(idx.saturating_sub(1))
    }

    /// `X'γ(τ_g)` for every grid level.
    pub fn values_at(&self, x: &[T]) -> Result<Vec<T>> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), got: x.len() });
        }
        Ok(self.gamma.iter().map(|g| dot(g, x)).collect())
    }

    /// Riemann estimate `(1/(G+1)) Σ_g 1[X'γ(τ_g) ≤ v]` of the parent cdf.
    /// The weight equals the spacing of the uniform grid `g/(G+1)`.
    pub fn cdf(&self, x: &[T], v: T) -> Result<T> {
        let values = self.values_at(x)?;
        Ok(riemann_cdf(&values, v))
    }
}

/// Riemann cdf from unsorted quantile values tabulated on a uniform grid.
pub fn riemann_cdf<T: Scalar>(values: &[T], v: T) -> T {
    let count = values.iter().filter(|&&q| q <= v).count();
    T::from_usize_lossy(count) / T::from_usize_lossy(values.len() + 1)
}

impl<T: Scalar> QuantileModel<T> for ParentQuantileCurve<T> {
    fn dim(&self) -> usize {
        self.gamma[0].len()
    }

    fn range(&self) -> (T, T) {
        (self.grid[0], self.grid[self.grid.len() - 1])
    }

    fn coefficients(&self, tau: T) -> Result<Vec<T>> {
        Ok(self.gamma[self.index_at(tau)?].clone())
    }

    fn quantile(&self, tau: T, x: &[T]) -> Result<T> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), got: x.len() });
        }
        Ok(dot(&self.gamma[self.index_at(tau)?], x))
    }

    /// Central difference between the grid neighbours of the step containing `τ`
    /// (one-sided at the ends; zero on a one-point grid).
    fn derivative(&self, tau: T, x: &[T]) -> Result<T> {
        let g = self.index_at(tau)?;
        let n = self.grid.len();
        if n == 1 {
            return Ok(T::zero());
        }
        let (a, b) = (g.saturating_sub(1), (g + 1).min(n - 1));
        let qa = dot(&self.gamma[a], x);
        let qb = dot(&self.gamma[b], x);
        Ok((qb - qa) / (self.grid[b] - self.grid[a]))
    }

    fn nodes(&self) -> Option<&[T]> {
        Some(&self.grid)
    }
}

/// Closed-form curve `γ_k(τ) = s_k τ^e` on `[0, 1]`. Covers the uniform
/// parent (`s = (1)`, `e = 1`), `τ^{1/κ}` and constant curves (`e = 0`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerCurve<T = f64> {
    pub scales: Vec<T>,
    pub exponent: T,
}

impl<T: Scalar> PowerCurve<T> {
    pub fn new(scales: Vec<T>, exponent: T) -> Result<Self> {
        if scales.is_empty() || scales.iter().any(|s| !s.is_finite()) || !(exponent >= T::zero()) {
            return Err(Error::InvalidParameter("power curve needs finite scales and exponent ≥ 0".into()));
        }
        Ok(Self { scales, exponent })
    }

    /// `V(τ) = τ`.
    pub fn uniform() -> Self {
        Self { scales: vec![T::one()], exponent: T::one() }
    }
}

impl<T: Scalar> QuantileModel<T> for PowerCurve<T> {
    fn dim(&self) -> usize {
        self.scales.len()
    }

    fn range(&self) -> (T, T) {
        (T::zero(), T::one())
    }

    fn coefficients(&self, tau: T) -> Result<Vec<T>> {
        check_range(tau, T::zero(), T::one())?;
        let p = tau.max(T::zero()).powf(self.exponent);
        Ok(self.scales.iter().map(|&s| s * p).collect())
    }

    fn derivative(&self, tau: T, x: &[T]) -> Result<T> {
        check_range(tau, T::zero(), T::one())?;
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), got: x.len() });
        }
        if self.exponent == T::zero() {
            return Ok(T::zero());
        }
        Ok(dot(&self.scales, x) * self.exponent * tau.powf(self.exponent - T::one()))
    }
}

/// Uniform grid `i/m`, `i = 1, …, m − 1`.
pub fn uniform_grid<T: Scalar>(m: usize) -> Vec<T> {
    let denom = T::from_usize_lossy(m);
    (1..m).map(|i| T::from_usize_lossy(i) / denom).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn dgp() -> PowerCurve<f64> {
        PowerCurve::new(vec![0.5, 0.25], 1.5f64.exp()).unwrap()
    }

    #[test]
    fn simulation_dgp_at_one() {
        assert_abs_diff_eq!(dgp().quantile(1.0, &[1.0, 2.0]).unwrap(), 1.0, epsilon = 1e-15);
    }

    #[test]
    fn constant_curve() {
        let c = ParentQuantileCurve::<f64>::constant(uniform_grid(100), 3.5, 3).unwrap();
        for tau in [0.01, 0.37, 0.99] {
            assert_eq!(c.quantile(tau, &[1.0, 2.0, 7.0]).unwrap(), 3.5);
        }
    }

    #[test]
    fn dot_product_at_grid_point() {
        let c = ParentQuantileCurve::new(vec![0.25, 0.5, 0.75], vec![vec![0.0, 0.0], vec![0.1, 0.05], vec![1.0, 1.0]])
            .unwrap();
        assert_abs_diff_eq!(c.quantile(0.5, &[1.0, 2.0]).unwrap(), 0.2, epsilon = 1e-15);
        // left step
        assert_abs_diff_eq!(c.quantile(0.7, &[1.0, 2.0]).unwrap(), 0.2, epsilon = 1e-15);
        assert!(matches!(c.quantile(0.8, &[1.0, 2.0]), Err(Error::OutsideGrid { .. })));
        assert!(matches!(c.quantile(0.2, &[1.0, 2.0]), Err(Error::OutsideGrid { .. })));
    }

    #[test]
    fn grid_points_computed_differently_hit_their_step() {
        let grid: Vec<f64> = uniform_grid(100);
        let c = ParentQuantileCurve::new(grid.clone(), grid.iter().map(|&t| vec![t]).collect()).unwrap();
        for i in 1..100 {
            let tau = 1.0 - (100 - i) as f64 * 0.01;
            assert_eq!(c.index_at(tau).unwrap(), i - 1);
        }
    }

    #[test]
    fn bidder_quantile_transforms_level() {
        let grid: Vec<f64> = uniform_grid(100);
        let c = ParentQuantileCurve::tabulate(&PowerCurve::uniform(), grid).unwrap();
        let x = [1.0];
        for tau in [0.1, 0.5, 0.9] {
            assert_eq!(c.bidder_quantile(tau, &x, 1.0).unwrap(), c.quantile(tau, &x).unwrap());
        }
        assert_eq!(c.bidder_quantile(0.25, &x, 2.0).unwrap(), c.quantile(0.5, &x).unwrap());
        assert_abs_diff_eq!(c.bidder_quantile(0.5, &x, 1e6).unwrap(), 0.99, epsilon = 1e-12);
        assert_abs_diff_eq!(PowerCurve::uniform().bidder_quantile(0.5, &x, 1e6).unwrap(), 1.0, epsilon = 1e-5);
    }

    #[test]
    fn cdf_boundaries_and_median() {
        let grid: Vec<f64> = uniform_grid(100);
        let c = ParentQuantileCurve::tabulate(&PowerCurve::uniform(), grid).unwrap();
        let x = [1.0];
        assert_eq!(c.cdf(&x, 0.0).unwrap(), 0.0);
        assert!(c.cdf(&x, 2.0).unwrap() >= 98.0 / 99.0);
        assert!((c.cdf(&x, 0.5).unwrap() - 0.5).abs() <= 1.0 / 99.0);
    }

    #[test]
    fn derivatives() {
        let grid: Vec<f64> = uniform_grid(100);
        let c = ParentQuantileCurve::tabulate(&PowerCurve::uniform(), grid).unwrap();
        assert_abs_diff_eq!(c.derivative(0.5, &[1.0]).unwrap(), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(c.derivative(0.01, &[1.0]).unwrap(), 1.0, epsilon = 1e-12);
        let p = PowerCurve::new(vec![2.0], 3.0).unwrap();
        assert_abs_diff_eq!(p.derivative(0.5, &[1.0]).unwrap(), 1.5, epsilon = 1e-15);
    }

    #[test]
    fn serde_validates() {
        let ok = r#"{"grid":[0.25,0.5],"gamma":[[1.0],[2.0]]}"#;
        let c: ParentQuantileCurve<f64> = serde_json::from_str(ok).unwrap();
        assert_eq!(c.grid(), &[0.25, 0.5]);
        let bad = r#"{"grid":[0.5,0.25],"gamma":[[1.0],[2.0]]}"#;
        assert!(serde_json::from_str::<ParentQuantileCurve<f64>>(bad).is_err());
        assert!(serde_json::from_str::<CovariateVector<f64>>("[1.0, -2.0]").is_err());
    }
}
