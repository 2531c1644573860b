//! First-stage maximum likelihood for the asymmetry parameters from winner
//! identities: `Σ_ℓ ln P(I*_ℓ | Z_ℓ, N_ℓ, θ)` with `P(i) = λ_i / Σ_j λ_j`.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::data::{AuctionRecord, Winner};
use crate::error::{Error, Result};
use crate::model::{AsymmetrySpec, Variant};

/// Search interval of the two-type exponent.
pub const LAMBDA_BOUNDS: (f64, f64) = (1e-4, 1e4);
/// Lower bound on any exponent visited by an optimizer.
pub const LAMBDA_FLOOR: f64 = 1e-8;
const GOLDEN_WIDTH: f64 = 1e-6;
const N_STARTS: usize = 8;
const BFGS_MAX_ITER: usize = 500;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MleResult {
    pub spec: AsymmetrySpec<f64>,
    pub loglik: f64,
    pub converged: bool,
    /// Auctions whose winner probabilities depend on the parameters.
    pub n_used: usize,
}

/// Winner counts of a two-type cell `(p, q)` = (type-0 count, type-1 count).
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct TypeCell {
    pub p: usize,
    pub q: usize,
    /// Auctions won by type 0.
    pub wins0: usize,
    /// Auctions won by type 1.
    pub wins1: usize,
}

/// Two-type log-likelihood in `u = ln λ` up to an additive constant, with
/// first and second derivatives.
fn cell_loglik(cells: &[TypeCell], u: f64) -> (f64, f64, f64) {
    let lam = u.exp();
    let (mut f, mut g, mut h) = (0.0, 0.0, 0.0);
    for c in cells {
        let (p, q) = (c.p as f64, c.q as f64);
        let n = (c.wins0 + c.wins1) as f64;
        let denom = p + lam * q;
        f += c.wins0 as f64 * p.ln() + c.wins1 as f64 * (q.ln() + u) - n * denom.ln();
        let share = lam * q / denom;
        g += c.wins1 as f64 - n * share;
        h -= n * share * (1.0 - share);
    }
    (f, g, h)
}

/// Maximizes the two-type likelihood over `ln λ ∈ ln LAMBDA_BOUNDS` from
/// aggregated cells (asymmetric cells only). Returns `(λ̂, loglik)`.
pub fn fit_two_type_cells(cells: &[TypeCell]) -> Result<(f64, f64)> {
    if cells.iter().all(|c| c.wins0 + c.wins1 == 0) {
        return Err(Error::FlatLikelihood);
    }
    let (mut a, mut b) = (LAMBDA_BOUNDS.0.ln(), LAMBDA_BOUNDS.1.ln());
    let phi = (5f64.sqrt() - 1.0) / 2.0;
    let f = |u: f64| cell_loglik(cells, u).0;
    let mut c = b - phi * (b - a);
    let mut d = a + phi * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while b - a > GOLDEN_WIDTH {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + phi * (b - a);
            fd = f(d);
        }
    }
    let mut u = 0.5 * (a + b);
    let (fu, g, h) = cell_loglik(cells, u);
    let mut best = fu;
    if h < 0.0 {
        let cand = u - g / h;
        if cand > a - GOLDEN_WIDTH && cand < b + GOLDEN_WIDTH {
            let fcand = f(cand);
            if fcand >= fu {
                u = cand;
                best = fcand;
            }
        }
    }
    let (lo, hi) = (LAMBDA_BOUNDS.0.ln(), LAMBDA_BOUNDS.1.ln());
    if u - lo < 10.0 * GOLDEN_WIDTH || hi - u < 10.0 * GOLDEN_WIDTH {
        return Err(Error::NonConvergence { what: "two-type likelihood (boundary optimum)", iterations: 0, best: vec![u.exp()] });
    }
    Ok((u.exp(), best))
}

/// Aggregates two-type records into asymmetric cells keyed by `(p, q)`.
pub fn type_cells(records: &[AuctionRecord]) -> Result<Vec<TypeCell>> {
    let mut map: BTreeMap<(usize, usize), TypeCell> = BTreeMap::new();
    for r in records {
        let (p, q) = r.type_pair()?;
        if p == 0 || q == 0 {
            continue;
        }
        let cell = map.entry((p, q)).or_insert(TypeCell { p, q, ..TypeCell::default() });
        if r.winner_label() == 0 {
            cell.wins0 += 1;
        } else {
            cell.wins1 += 1;
        }
    }
    Ok(map.into_values().collect())
}

/// Fits `variant` to the winner identities of `records` under the variant's
/// default normalization.
pub fn mle_fit(records: &[AuctionRecord], variant: Variant) -> Result<MleResult> {
    if records.is_empty() {
        return Err(Error::FlatLikelihood);
    }
    let n_labels = records.iter().map(|r| r.roster.max_label()).max().unwrap_or(0) + 1;
    if variant == Variant::TypeFixedEffects && n_labels <= 2 {
        return fit_type_effects_fast(records);
    }
    fit_general(records, variant, n_labels)
}

fn fit_type_effects_fast(records: &[AuctionRecord]) -> Result<MleResult> {
    let cells = type_cells(records)?;
    let n_used: usize = cells.iter().map(|c| c.wins0 + c.wins1).sum();
    if n_used == 0 {
        return Err(Error::FlatLikelihood);
    }
    let (lambda, _) = fit_two_type_cells(&cells)?;
    let spec = AsymmetrySpec::two_types(lambda);
    let loglik = loglik_spec(records, &spec)?;
    Ok(MleResult { spec, loglik, converged: true, n_used })
}

/// Exact log-likelihood of `records` under `spec`.
pub fn loglik_spec(records: &[AuctionRecord], spec: &AsymmetrySpec<f64>) -> Result<f64> {
    let mut total = 0.0;
    for r in records {
        let lambdas = spec.lambdas(&r.roster)?;
        let sum: f64 = lambdas.iter().sum();
        let win: f64 = match r.winner {
            Winner::Index(i) => lambdas[i],
            Winner::Type(t) => r.roster.bidders().iter().zip(&lambdas).filter(|(b, _)| b.label == t).map(|(_, l)| l).sum(),
        };
        total += win.ln() - sum.ln();
    }
    Ok(total)
}

/// Free-parameter layout of a variant: `α_1..α_{K−1}` (log scale for the
/// multiplicative variants, raw for the additive one) followed by `β`
/// (without `β_0` for the linear variant).
struct Layout {
    variant: Variant,
    n_labels: usize,
    k: usize,
}

impl Layout {
    fn n_alpha_free(&self) -> usize {
        if self.variant.uses_alpha() {
            self.n_labels - 1
        } else {
            0
        }
    }

    fn n_beta_free(&self) -> usize {
        match self.variant {
            Variant::LinearRegression => self.k - 1,
            v if v.uses_beta() => self.k,
            _ => 0,
        }
    }

    fn dim(&self) -> usize {
        self.n_alpha_free() + self.n_beta_free()
    }

    fn log_alpha(&self) -> bool {
        !matches!(self.variant, Variant::LinearWithFixedEffects)
    }

    fn spec(&self, theta: &[f64]) -> AsymmetrySpec<f64> {
        let na = self.n_alpha_free();
        let alpha = if self.variant.uses_alpha() {
            std::iter::once(1.0)
                .chain(theta[..na].iter().map(|&t| if self.log_alpha() { t.exp() } else { t }))
                .collect()
        } else {
            Vec::new()
        };
        let beta = match self.variant {
            Variant::LinearRegression => std::iter::once(1.0).chain(theta[na..].iter().copied()).collect(),
            v if v.uses_beta() => theta[na..].to_vec(),
            _ => Vec::new(),
        };
        AsymmetrySpec { variant: self.variant, alpha, beta, normalization: self.variant.default_normalization() }
    }

    /// `(λ, ∂λ/∂θ)` for one bidder.
    fn lambda_grad(&self, spec: &AsymmetrySpec<f64>, label: usize, z: &[f64]) -> Result<(f64, Vec<f64>)> {
        let na = self.n_alpha_free();
        let mut grad = vec![0.0; self.dim()];
        let index = || -> Result<f64> {
            if z.len() != spec.beta.len() {
                return Err(Error::DimensionMismatch { expected: spec.beta.len(), got: z.len() });
            }
            Ok(z.iter().zip(&spec.beta).map(|(a, b)| a * b).sum())
        };
        let alpha = |l: usize| spec.alpha.get(l).copied().ok_or(Error::UnknownLabel(l));
        let lam = match self.variant {
            Variant::FixedEffects | Variant::TypeFixedEffects => {
                let a = alpha(label)?;
                if label > 0 {
                    grad[label - 1] = a;
                }
                a
            }
            Variant::LinearRegression => {
                let v = index()?;
                for j in 1..self.k {
                    grad[na + j - 1] = z[j];
                }
                v
            }
            Variant::LinearWithFixedEffects => {
                let v = alpha(label)? + index()?;
                if label > 0 {
                    grad[label - 1] = 1.0;
                }
                grad[na..na + self.k].copy_from_slice(z);
                v
            }
            Variant::ExpLinearWithFixedEffects => {
                let v = alpha(label)? * index()?.exp();
                if label > 0 {
                    grad[label - 1] = v;
                }
                for j in 0..self.k {
                    grad[na + j] = v * z[j];
                }
                v
            }
        };
        Ok((lam, grad))
    }

    /// Log-likelihood and gradient; `None` when some exponent is below the floor.
    fn eval(&self, records: &[AuctionRecord], theta: &[f64]) -> Result<Option<(f64, Vec<f64>)>> {
        let spec = self.spec(theta);
        let d = self.dim();
        let mut f = 0.0;
        let mut g = vec![0.0; d];
        for r in records {
            let mut sum = 0.0;
            let mut sum_g = vec![0.0; d];
            let mut win = 0.0;
            let mut win_g = vec![0.0; d];
            for (i, b) in r.roster.bidders().iter().enumerate() {
                let (lam, lg) = self.lambda_grad(&spec, b.label, &b.z)?;
                if !(lam >= LAMBDA_FLOOR) || !lam.is_finite() {
                    return Ok(None);
                }
                sum += lam;
                sum_g.iter_mut().zip(&lg).for_each(|(s, v)| *s += v);
                let wins = match r.winner {
                    Winner::Index(w) => w == i,
                    Winner::Type(t) => b.label == t,
                };
                if wins {
                    win += lam;
                    win_g.iter_mut().zip(&lg).for_each(|(s, v)| *s += v);
                }
            }
            f += win.ln() - sum.ln();
            for j in 0..d {
                g[j] += win_g[j] / win - sum_g[j] / sum;
            }
        }
        Ok(Some((f, g)))
    }

    fn natural_start(&self) -> Vec<f64> {
        vec![if self.log_alpha() { 0.0 } else { 1.0 }; self.n_alpha_free()]
            .into_iter()
            .chain(std::iter::repeat_n(0.0, self.n_beta_free()))
            .collect()
    }

    /// Halton point `i` mapped to `[−2, 2]` for log effects and `[−1, 1]` otherwise.
    fn halton_start(&self, i: usize) -> Vec<f64> {
        const PRIMES: [u64; 16] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53];
        let na = self.n_alpha_free();
        (0..self.dim())
            .map(|j| {
                let h = radical_inverse(i as u64 + 1, PRIMES[j % PRIMES.len()]);
                if j < na && self.log_alpha() {
                    4.0 * h - 2.0
                } else if j < na {
                    0.1 + 2.9 * h
                } else {
                    2.0 * h - 1.0
                }
            })
            .collect()
    }
}

fn radical_inverse(mut i: u64, base: u64) -> f64 {
    let mut inv = 1.0 / base as f64;
    let mut out = 0.0;
    while i > 0 {
        out += (i % base) as f64 * inv;
        i /= base;
        inv /= base as f64;
    }
    out
}

fn informative(r: &AuctionRecord) -> bool {
    let b = r.roster.bidders();
    b.iter().any(|x| x.label != b[0].label || x.z != b[0].z)
}

fn fit_general(records: &[AuctionRecord], variant: Variant, n_labels: usize) -> Result<MleResult> {
    let k = records[0].roster.bidders()[0].z.len();
    if variant.uses_beta() && k == 0 {
        return Err(Error::InvalidParameter(format!("variant {variant} needs bidder characteristics")));
    }
    if variant == Variant::LinearRegression && n_labels > 1 && k == 0 {
        return Err(Error::InvalidParameter("linear variant needs characteristics".into()));
    }
    let layout = Layout { variant, n_labels, k };
    let n_used = records.iter().filter(|r| informative(r)).count();
    if n_used == 0 {
        return Err(Error::FlatLikelihood);
    }
    if layout.dim() == 0 {
        let spec = layout.spec(&[]);
        let loglik = loglik_spec(records, &spec)?;
        return Ok(MleResult { spec, loglik, converged: true, n_used });
    }
    let starts: Vec<Vec<f64>> =
        std::iter::once(layout.natural_start()).chain((0..N_STARTS - 1).map(|i| layout.halton_start(i))).collect();
    let mut best: Option<(f64, Vec<f64>, bool)> = None;
    for s in starts {
        if let Some((f, theta, conv)) = bfgs(&layout, records, s)? {
            if best.as_ref().is_none_or(|b| f > b.0) {
                best = Some((f, theta, conv));
            }
        }
    }
    let (f, theta, converged) = best.ok_or(Error::NonConvergence { what: "likelihood (no feasible start)", iterations: 0, best: vec![] })?;
    let spec = layout.spec(&theta);
    if !converged {
        return Err(Error::NonConvergence { what: "quasi-Newton likelihood", iterations: BFGS_MAX_ITER, best: spec.alpha.iter().chain(&spec.beta).copied().collect() });
    }
    Ok(MleResult { spec, loglik: f, converged, n_used })
}

/// BFGS ascent with Armijo backtracking; infeasible trial points are rejected.
fn bfgs(layout: &Layout, records: &[AuctionRecord], start: Vec<f64>) -> Result<Option<(f64, Vec<f64>, bool)>> {
    let d = layout.dim();
    let Some((mut f, mut g)) = layout.eval(records, &start)? else {
        return Ok(None);
    };
    let mut theta = start;
    let mut hinv: Vec<f64> = (0..d * d).map(|k| if k / d == k % d { 1.0 } else { 0.0 }).collect();
    for _ in 0..BFGS_MAX_ITER {
        let gnorm = g.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        if gnorm <= 1e-7 * (1.0 + records.len() as f64).sqrt() {
            return Ok(Some((f, theta, true)));
        }
        let mut dir: Vec<f64> = (0..d).map(|i| (0..d).map(|j| hinv[i * d + j] * g[j]).sum()).collect();
        let mut slope: f64 = dir.iter().zip(&g).map(|(a, b)| a * b).sum();
        if slope <= 0.0 {
            hinv.iter_mut().enumerate().for_each(|(k, v)| *v = if k / d == k % d { 1.0 } else { 0.0 });
            dir = g.clone();
            slope = g.iter().map(|v| v * v).sum();
        }
        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let trial: Vec<f64> = theta.iter().zip(&dir).map(|(t, s)| t + step * s).collect();
            if let Some((ft, gt)) = layout.eval(records, &trial)? {
                if ft >= f + 1e-4 * step * slope {
                    accepted = Some((trial, ft, gt));
                    break;
                }
            }
            step *= 0.5;
        }
        let Some((trial, ft, gt)) = accepted else {
            let converged = gnorm <= 1e-4 * (1.0 + records.len() as f64).sqrt();
            return Ok(Some((f, theta, converged)));
        };
        let s: Vec<f64> = trial.iter().zip(&theta).map(|(a, b)| a - b).collect();
        // Ascent on f is descent on −f: y = ∇(−f)_new − ∇(−f)_old.
        let y: Vec<f64> = g.iter().zip(&gt).map(|(a, b)| a - b).collect();
        let sy: f64 = s.iter().zip(&y).map(|(a, b)| a * b).sum();
        if sy > 1e-12 {
            let hy: Vec<f64> = (0..d).map(|i| (0..d).map(|j| hinv[i * d + j] * y[j]).sum()).collect();
            let yhy: f64 = y.iter().zip(&hy).map(|(a, b)| a * b).sum();
            for i in 0..d {
                for j in 0..d {
                    hinv[i * d + j] += (1.0 + yhy / sy) * s[i] * s[j] / sy - (hy[i] * s[j] + s[i] * hy[j]) / sy;
                }
            }
        }
        let small_change = (ft - f).abs() <= 1e-13 * (1.0 + f.abs());
        theta = trial;
        f = ft;
        g = gt;
        if small_change {
            let gnorm = g.iter().fold(0.0f64, |a, v| a.max(v.abs()));
            return Ok(Some((f, theta, gnorm <= 1e-4 * (1.0 + records.len() as f64).sqrt())));
        }
    }
    Ok(Some((f, theta, false)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Bidder, BidderRoster, CovariateVector};

    fn rec(counts: &[usize], winner_type: usize) -> AuctionRecord {
        AuctionRecord::new(
            0,
            1.0,
            CovariateVector::new(&[1.0]).unwrap(),
            BidderRoster::from_type_counts(counts).unwrap(),
            Winner::Type(winner_type),
        )
        .unwrap()
    }

    #[test]
    fn single_cell_closed_form() {
        // (1,1) cell, type 0 wins a fraction w = 0.6 → λ̂ = (1 − w)/w.
        let mut data = vec![rec(&[1, 1], 0); 60];
        data.extend(vec![rec(&[1, 1], 1); 40]);
        let fit = mle_fit(&data, Variant::TypeFixedEffects).unwrap();
        assert!((fit.spec.alpha[1] - 0.4 / 0.6).abs() < 1e-9);
        assert_eq!(fit.n_used, 100);
        assert!(fit.spec.validate().is_ok());
    }

    #[test]
    fn proportional_wins_give_symmetry() {
        let mut data = Vec::new();
        for (p, q) in [(1, 2), (2, 1), (1, 3), (3, 1), (2, 2)] {
            let n = 12 * (p + q);
            for i in 0..n {
                data.push(rec(&[p, q], usize::from(i >= n * p / (p + q))));
            }
        }
        let fit = mle_fit(&data, Variant::TypeFixedEffects).unwrap();
        assert!((fit.spec.alpha[1] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn flat_when_no_mixed_auction() {
        let data = vec![rec(&[2, 0], 0), rec(&[0, 3], 1)];
        assert!(matches!(mle_fit(&data, Variant::TypeFixedEffects), Err(Error::FlatLikelihood)));
    }

    #[test]
    fn boundary_reports_best_iterate() {
        let data = vec![rec(&[1, 1], 0); 10];
        assert!(matches!(mle_fit(&data, Variant::TypeFixedEffects), Err(Error::NonConvergence { .. })));
    }

    #[test]
    fn general_path_matches_fast_path() {
        let mut data = vec![rec(&[1, 2], 0); 30];
        data.extend(vec![rec(&[1, 2], 1); 50]);
        data.extend(vec![rec(&[2, 1], 0); 45]);
        data.extend(vec![rec(&[2, 1], 1); 20]);
        let fast = mle_fit(&data, Variant::TypeFixedEffects).unwrap();
        let general = fit_general(&data, Variant::FixedEffects, 2).unwrap();
        assert!((fast.spec.alpha[1] - general.spec.alpha[1]).abs() < 1e-6);
        assert!((fast.loglik - general.loglik).abs() < 1e-9);
    }

    #[test]
    fn exp_linear_recovers_slope() {
        // Two bidders of one label with characteristic z ∈ {0, 1}; bidder with z=1
        // wins with probability e/(1+e) when β = 1.
        let mut data = Vec::new();
        let e = 1f64.exp();
        let n = 1000;
        let wins = (n as f64 * e / (1.0 + e)).round() as usize;
        for i in 0..n {
            let roster = BidderRoster::new(vec![Bidder::new(0, vec![0.0]), Bidder::new(0, vec![1.0])]).unwrap();
            data.push(
                AuctionRecord::new(0, 1.0, CovariateVector::new(&[1.0]).unwrap(), roster, Winner::Index(usize::from(i < wins)))
                    .unwrap(),
            );
        }
        let fit = mle_fit(&data, Variant::ExpLinearWithFixedEffects).unwrap();
        let target = (wins as f64 / (n - wins) as f64).ln();
        assert!((fit.spec.beta[0] - target).abs() < 1e-5, "{:?}", fit.spec);
    }

    #[test]
    fn linear_regression_ratio() {
        // λ = z'β with β = (1, b): bidders z=(1,0) and z=(1,1) → odds 1 : 1 + b.
        let mut data = Vec::new();
        for i in 0..300 {
            let roster = BidderRoster::new(vec![Bidder::new(0, vec![1.0, 0.0]), Bidder::new(0, vec![1.0, 1.0])]).unwrap();
            data.push(
                AuctionRecord::new(0, 1.0, CovariateVector::new(&[1.0]).unwrap(), roster, Winner::Index(usize::from(i < 200)))
                    .unwrap(),
            );
        }
        let fit = mle_fit(&data, Variant::LinearRegression).unwrap();
        assert!((fit.spec.beta[1] - 1.0).abs() < 1e-5, "{:?}", fit.spec);
    }
}
