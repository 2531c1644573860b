//! Quantile regression with observation-specific quantile levels:
//! `min_γ Σ_ℓ ρ_{Φ_ℓ}(W_ℓ − X_ℓ'γ)` with `ρ_Φ(u) = u(Φ − 1[u < 0])`.
//!
//! The problem is solved through its bounded dual
//! `max W'a  s.t.  X'a = X'(1 − Φ),  0 ≤ a ≤ 1`,
//! whose simplex multipliers are `−γ̂`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lp::{solve_bounded, solve_square};
use crate::scalar::Scalar;

/// Levels are clamped into `[LEVEL_CLAMP, 1 − LEVEL_CLAMP]` before fitting.
pub const LEVEL_CLAMP: f64 = 1e-6;

/// Fitted coefficients at one quantile level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QrFit<T = f64> {
    pub tau: T,
    pub gamma_hat: Vec<T>,
    pub objective: T,
    /// Smallest one-sided directional derivative of the objective along `±e_k`.
    pub certificate: T,
    /// Whether every directional derivative is nonnegative up to tolerance.
    pub certified: bool,
    pub iterations: usize,
}

/// Check loss `ρ_Φ(u)`.
#[inline]
pub fn check_loss<T: Scalar>(u: T, phi: T) -> T {
    if u < T::zero() {
        u * (phi - T::one())
    } else {
        u * phi
    }
}

/// `Σ_ℓ ρ_{Φ_ℓ}(W_ℓ − X_ℓ'γ)` for a row-major `n × p` design.
pub fn objective<T: Scalar>(x: &[T], w: &[T], levels: &[T], gamma: &[T]) -> T {
    let p = gamma.len();
    w.iter()
        .zip(levels)
        .enumerate()
        .map(|(l, (&wl, &phi))| check_loss(wl - dot(&x[l * p..(l + 1) * p], gamma), phi))
        .sum()
}

fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).map(|(u, v)| *u * *v).sum()
}

/// Directional derivatives of the objective at `gamma` along `+e_k` and `−e_k`,
/// returned as `[+e_0, −e_0, +e_1, …]`. Residuals within `zero_tol` of zero are
/// treated as interpolated.
pub fn directional_derivatives<T: Scalar>(x: &[T], w: &[T], levels: &[T], gamma: &[T], zero_tol: T) -> Vec<T> {
    let p = gamma.len();
    let mut out = vec![T::zero(); 2 * p];
    for (l, (&wl, &phi)) in w.iter().zip(levels).enumerate() {
        let row = &x[l * p..(l + 1) * p];
        let u = wl - dot(row, gamma);
        for k in 0..p {
            for (slot, sign) in [(2 * k, T::one()), (2 * k + 1, -T::one())] {
                let s = sign * row[k];
                out[slot] += if u > zero_tol {
                    -phi * s
                } else if u < -zero_tol {
                    (T::one() - phi) * s
                } else if s > T::zero() {
                    (T::one() - phi) * s
                } else {
                    -phi * s
                };
            }
        }
    }
    out
}

/// Least-squares coefficients used to crash the simplex.
fn least_squares<T: Scalar>(x: &[T], w: &[T], p: usize) -> Option<Vec<T>> {
    let mut xtx = vec![T::zero(); p * p];
    let mut xtw = vec![T::zero(); p];
    for (l, &wl) in w.iter().enumerate() {
        let row = &x[l * p..(l + 1) * p];
        for i in 0..p {
            xtw[i] += row[i] * wl;
            for j in 0..p {
                xtx[i * p + j] += row[i] * row[j];
            }
        }
    }
    solve_square(&xtx, &xtw, p)
}

/// Crash point: least-squares fit with the intercept shifted to the mean level
/// quantile of its residuals.
fn crash<T: Scalar>(x: &[T], w: &[T], levels: &[T], p: usize) -> Vec<bool> {
    let Some(mut g) = least_squares(x, w, p) else {
        return vec![false; w.len()];
    };
    let mut resid: Vec<T> = (0..w.len()).map(|l| w[l] - dot(&x[l * p..(l + 1) * p], &g)).collect();
    let mean_level = levels.iter().copied().sum::<T>() / T::from_usize_lossy(levels.len());
    let mut sorted = resid.clone();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    let idx = (mean_level * T::from_usize_lossy(sorted.len() - 1)).round().to_usize().unwrap_or(0);
    let shift = sorted[idx.min(sorted.len() - 1)];
    g[0] += shift;
    resid.iter_mut().for_each(|r| *r -= shift);
    resid.iter().map(|r| *r > T::zero()).collect()
}

/// Fits `γ̂` for a row-major design `x` (`n × p`), responses `w` and
/// per-observation levels in `[0, 1]`. Levels are clamped into
/// `[LEVEL_CLAMP, 1 − LEVEL_CLAMP]`; a level outside `[0, 1]` means the
/// problem is unbounded.
pub fn fit<T: Scalar>(x: &[T], w: &[T], levels: &[T], p: usize, tau: T) -> Result<QrFit<T>> {
    fit_from(x, w, levels, p, tau, None)
}

/// As [`fit`], with the simplex started from the residual signs of `gamma0`
/// (typically the solution at a neighbouring level) instead of least squares.
pub fn fit_from<T: Scalar>(x: &[T], w: &[T], levels: &[T], p: usize, tau: T, gamma0: Option<&[T]>) -> Result<QrFit<T>> {
    let n = w.len();
    if p == 0 || x.len() != n * p {
        return Err(Error::DimensionMismatch { expected: n * p, got: x.len() });
    }
    if levels.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: levels.len() });
    }
    if levels.iter().any(|v| !(*v >= T::zero() && *v <= T::one())) {
        return Err(Error::Unbounded);
    }
    if w.iter().chain(x.iter()).any(|v| !v.is_finite()) {
        return Err(Error::InvalidParameter("non-finite regression data".into()));
    }
    if n < p {
        return Err(Error::RankDeficient);
    }
    let lo = T::lit(LEVEL_CLAMP);
    let hi = T::one() - lo;
    let phi: Vec<T> = levels.iter().map(|v| v.max(lo).min(hi)).collect();
    let mut b = vec![T::zero(); p];
    for l in 0..n {
        for k in 0..p {
            b[k] += x[l * p + k] * (T::one() - phi[l]);
        }
    }
    let c: Vec<T> = w.iter().map(|v| -*v).collect();
    let start = match gamma0 {
        Some(g) if g.len() == p => (0..n).map(|l| w[l] - dot(&x[l * p..(l + 1) * p], g) > T::zero()).collect(),
        _ => crash(x, w, &phi, p),
    };
    let sol = solve_bounded(x, p, &c, &b, &start)?;
    let gamma: Vec<T> = sol.y.iter().map(|v| -*v).collect();
    let obj = objective(x, w, &phi, &gamma);
    let wscale = T::one() + w.iter().fold(T::zero(), |acc, v| acc.max(v.abs()));
    let zero_tol = wscale * T::epsilon().sqrt() * T::lit(1e-2);
    let dirs = directional_derivatives(x, w, &phi, &gamma, zero_tol);
    let certificate = dirs.iter().copied().fold(T::infinity(), T::min);
    let xscale: T = x.iter().map(|v| v.abs()).sum::<T>() / T::from_usize_lossy(p);
    let certified = certificate >= -(T::one() + xscale) * T::epsilon().sqrt() * T::lit(1e-2);
    Ok(QrFit { tau, gamma_hat: gamma, objective: obj, certificate, certified, iterations: sol.iterations })
}

/// Fits every level of `taus` independently (in parallel); `levels_for(τ)`
/// returns the per-observation levels at `τ`.
pub fn fit_many<F>(x: &[f64], w: &[f64], p: usize, taus: &[f64], levels_for: F) -> Vec<Result<QrFit<f64>>>
where
    F: Fn(f64) -> Result<Vec<f64>> + Sync,
{
    taus.par_iter()
        .map(|&tau| {
            let levels = levels_for(tau)?;
            fit(x, w, &levels, p, tau)
        })
        .collect()
}
