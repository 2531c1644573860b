use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Default absolute tolerance of [`LevelTransform::psi_inverse`].
pub const PSI_INVERSE_TOL: f64 = 1e-10;
const PSI_INVERSE_MAX_ITER: usize = 200;

/// Map from a parent quantile level to the winning-bid quantile level given
/// the identity of the winner:
/// `Ψ(τ) = (Λ τ^{Λ₋} − Λ₋ τ^{Λ}) / λ_w` with `Λ = Σ λ_j` and `Λ₋ = Λ − λ_w`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LevelTransform<T = f64> {
    lambda_winner: T,
    lambda_total: T,
    lambda_excl: T,
}

impl<T: Scalar> LevelTransform<T> {
    pub fn new(lambda_winner: T, lambda_total: T) -> Result<Self> {
        let lambda_excl = lambda_total - lambda_winner;
        if !(lambda_winner > T::zero() && lambda_excl > T::zero() && lambda_total.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "level transform needs 0 < λ_w < Λ, got λ_w={lambda_winner}, Λ={lambda_total}"
            )));
        }
        Ok(Self { lambda_winner, lambda_total, lambda_excl })
    }

    /// Transform for bidder `winner` among bidders with exponents `lambdas`.
    pub fn from_lambdas(lambdas: &[T], winner: usize) -> Result<Self> {
        let w = *lambdas
            .get(winner)
            .ok_or(Error::DimensionMismatch { expected: lambdas.len(), got: winner + 1 })?;
        Self::new(w, lambdas.iter().copied().sum())
    }

    /// `n` symmetric bidders with unit exponents.
    pub fn symmetric(n: usize) -> Result<Self> {
        Self::new(T::one(), T::from_usize_lossy(n))
    }

    pub fn lambda_winner(&self) -> T {
        self.lambda_winner
    }

    pub fn lambda_total(&self) -> T {
        self.lambda_total
    }

    pub fn lambda_excl(&self) -> T {
        self.lambda_excl
    }

    /// `Ψ(τ)`, clamped into `[0, 1]`; exact at both endpoints.
    pub fn psi(&self, tau: T) -> T {
        if tau <= T::zero() {
            return T::zero();
        }
        if tau >= T::one() {
            return T::one();
        }
        let v = (self.lambda_total * tau.powf(self.lambda_excl) - self.lambda_excl * tau.powf(self.lambda_total))
            / self.lambda_winner;
        v.max(T::zero()).min(T::one())
    }

    /// `dΨ/dτ = Λ Λ₋ τ^{Λ₋−1} (1 − τ^{λ_w}) / λ_w` on `(0, 1)`.
    pub fn psi_derivative(&self, tau: T) -> T {
        self.lambda_total * self.lambda_excl * tau.powf(self.lambda_excl - T::one())
            * (T::one() - tau.powf(self.lambda_winner))
            / self.lambda_winner
    }

    /// Solves `Ψ(τ) = u` by bisection until `|Ψ(τ) − u| ≤ tol` or the bracket
    /// collapses to machine resolution.
    pub fn psi_inverse(&self, u: T, tol: T) -> Result<T> {
        if !(u >= T::zero() && u <= T::one()) {
            return Err(Error::InvalidParameter(format!("Ψ⁻¹ needs a level in [0, 1], got {u}")));
        }
        if u == T::zero() || u == T::one() {
            return Ok(u);
        }
        let two = T::lit(2.0);
        let (mut lo, mut hi) = (T::zero(), T::one());
        for _ in 0..PSI_INVERSE_MAX_ITER {
            let mid = (lo + hi) / two;
            let f = self.psi(mid) - u;
            if f.abs() <= tol || mid <= lo || mid >= hi {
                return Ok(mid);
            }
            if f < T::zero() {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Err(Error::NonConvergence {
            what: "Ψ inverse bisection",
            iterations: PSI_INVERSE_MAX_ITER,
            best: vec![((lo + hi) / two).as_f64()],
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn strong_weak() -> LevelTransform<f64> {
        LevelTransform::from_lambdas(&[1.0, 2.0], 0).unwrap()
    }

    #[test]
    fn endpoints() {
        for t in [LevelTransform::<f64>::symmetric(2).unwrap(), strong_weak()] {
            assert_eq!(t.psi(0.0), 0.0);
            assert_eq!(t.psi(1.0), 1.0);
            assert_eq!(t.psi_inverse(0.0, 1e-10).unwrap(), 0.0);
            assert_eq!(t.psi_inverse(1.0, 1e-10).unwrap(), 1.0);
        }
    }

    #[test]
    fn symmetric_pair() {
        let t = LevelTransform::<f64>::symmetric(2).unwrap();
        assert_abs_diff_eq!(t.psi(0.5), 0.75, epsilon = 1e-15);
        assert_abs_diff_eq!(t.psi_derivative(0.5), 1.0, epsilon = 1e-15);
        let u = 0.75;
        assert_abs_diff_eq!(t.psi_inverse(u, 1e-10).unwrap(), 1.0 - (1.0f64 - u).sqrt(), epsilon = 1e-9);
    }

    #[test]
    fn weak_winner_polynomial() {
        // λ = (1, 2), bidder 0 wins: Ψ(τ) = 3τ² − 2τ³.
        let t = strong_weak();
        for tau in [0.1, 0.3, 0.5, 0.9] {
            assert_abs_diff_eq!(t.psi(tau), 3.0 * tau * tau - 2.0 * tau * tau * tau, epsilon = 1e-14);
        }
        assert_abs_diff_eq!(t.psi(0.5), 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(t.psi_inverse(0.5, 1e-10).unwrap(), 0.5, epsilon = 1e-9);
    }

    #[test]
    fn strong_winner_polynomial() {
        // λ = (1, 2), bidder 1 wins: Ψ(τ) = (3τ − τ³)/2.
        let t = LevelTransform::<f64>::from_lambdas(&[1.0, 2.0], 1).unwrap();
        assert_abs_diff_eq!(t.psi(0.5), 0.6875, epsilon = 1e-15);
    }

    #[test]
    fn derivative_vanishes_at_one() {
        assert_eq!(strong_weak().psi_derivative(1.0), 0.0);
    }

    #[test]
    fn single_precision() {
        let t = LevelTransform::<f32>::symmetric(2).unwrap();
        assert!((t.psi(0.5) - 0.75).abs() < 1e-6);
        assert!((t.psi_inverse(0.75, 1e-10).unwrap() - 0.5).abs() < 1e-6);
    }

    #[test]
    fn rejects_invalid() {
        assert!(LevelTransform::<f64>::new(1.0, 1.0).is_err());
        assert!(LevelTransform::<f64>::new(0.0, 1.0).is_err());
        assert!(strong_weak().psi_inverse(1.5, 1e-10).is_err());
    }
}
