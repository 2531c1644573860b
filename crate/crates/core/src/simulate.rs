//! Synthetic auctions drawn from the model and the Monte Carlo harness for
//! the two-stage estimator.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{design, AuctionRecord, Winner};
use crate::error::{Error, Result};
use crate::mle::mle_fit;
use crate::model::{AsymmetrySpec, Bidder, BidderRoster, CovariateVector, ParentQuantileCurve, PowerCurve, QuantileModel, Variant};
use crate::qr;
use crate::rng;

/// Parent curve used to generate values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CurveSpec {
    Power(PowerCurve<f64>),
    Grid(ParentQuantileCurve<f64>),
}

impl QuantileModel<f64> for CurveSpec {
    fn dim(&self) -> usize {
        match self {
            CurveSpec::Power(c) => c.dim(),
            CurveSpec::Grid(c) => c.dim(),
        }
    }
    fn range(&self) -> (f64, f64) {
        match self {
            CurveSpec::Power(c) => c.range(),
            CurveSpec::Grid(c) => c.range(),
        }
    }
    fn coefficients(&self, tau: f64) -> Result<Vec<f64>> {
        match self {
            CurveSpec::Power(c) => c.coefficients(tau),
            CurveSpec::Grid(c) => c.coefficients(tau),
        }
    }
    fn derivative(&self, tau: f64, x: &[f64]) -> Result<f64> {
        match self {
            CurveSpec::Power(c) => c.derivative(tau, x),
            CurveSpec::Grid(c) => c.derivative(tau, x),
        }
    }
    fn nodes(&self) -> Option<&[f64]> {
        match self {
            CurveSpec::Power(_) => None,
            CurveSpec::Grid(c) => Some(c.grid()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BidderCount {
    Fixed(usize),
    /// Uniform on `lo..=hi`.
    Uniform { lo: usize, hi: usize },
}

/// How bidder labels are assigned.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TypeRule {
    /// Labels drawn iid with the given probabilities.
    Iid { probs: Vec<f64> },
    /// Label `i` for the bidder at position `i`.
    Positional,
    /// Fixed number of bidders per label (overrides the bidder count).
    Counts { counts: Vec<usize> },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WinnerReport {
    Type,
    Index,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub n_auctions: usize,
    pub n_bidders: BidderCount,
    pub types: TypeRule,
    pub spec: AsymmetrySpec<f64>,
    pub curve: CurveSpec,
    /// Uniform range of each auction characteristic (`x` without intercept).
    pub covariates: Vec<(f64, f64)>,
    /// Uniform range of each bidder characteristic `z`.
    #[serde(default)]
    pub bidder_z: Vec<(f64, f64)>,
    pub winner_report: WinnerReport,
    pub seed: u64,
}

impl SimConfig {
    /// Simulation design with two bidder types: `L` auctions, `N = 5`,
    /// `λ = (1, e²)`, `γ(τ) = τ^{e^{1.5}} (1/2, 1/4)`, `x ~ U[1, 3]`.
    pub fn two_type_design(n_auctions: usize, seed: u64) -> Self {
        Self {
            n_auctions,
            n_bidders: BidderCount::Fixed(5),
            types: TypeRule::Iid { probs: vec![0.5, 0.5] },
            spec: AsymmetrySpec::two_types(2f64.exp()),
            curve: CurveSpec::Power(PowerCurve { scales: vec![0.5, 0.25], exponent: 1.5f64.exp() }),
            covariates: vec![(1.0, 3.0)],
            bidder_z: Vec::new(),
            winner_report: WinnerReport::Type,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_auctions == 0 {
            return Err(Error::InvalidParameter("n_auctions must be ≥ 1".into()));
        }
        match (&self.n_bidders, &self.types) {
            (_, TypeRule::Counts { counts }) if counts.iter().sum::<usize>() < 2 => {
                return Err(Error::InvalidParameter("at least two bidders per auction".into()))
            }
            (BidderCount::Fixed(n), _) if *n < 2 => return Err(Error::InvalidParameter("N must be ≥ 2".into())),
            (BidderCount::Uniform { lo, hi }, _) if *lo < 2 || hi < lo => {
                return Err(Error::InvalidParameter("bidder range must satisfy 2 ≤ lo ≤ hi".into()))
            }
            _ => {}
        }
        if let TypeRule::Iid { probs } = &self.types {
            if probs.is_empty() || probs.iter().any(|p| !(*p >= 0.0)) || (probs.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
                return Err(Error::InvalidParameter("type probabilities must be a distribution".into()));
            }
        }
        if self.curve.dim() != self.covariates.len() + 1 {
            return Err(Error::DimensionMismatch { expected: self.curve.dim(), got: self.covariates.len() + 1 });
        }
        self.spec.validate()
    }
}

fn draw_auction(cfg: &SimConfig, id: usize) -> Result<AuctionRecord> {
    let mut r = rng::stream(cfg.seed, id as u64);
    let x: Vec<f64> = cfg.covariates.iter().map(|&(lo, hi)| lo + (hi - lo) * r.gen::<f64>()).collect();
    let x = CovariateVector::new(&x)?;
    let n = match (&cfg.types, &cfg.n_bidders) {
        (TypeRule::Counts { counts }, _) => counts.iter().sum(),
        (_, BidderCount::Fixed(n)) => *n,
        (_, BidderCount::Uniform { lo, hi }) => r.gen_range(*lo..=*hi),
    };
    let labels: Vec<usize> = match &cfg.types {
        TypeRule::Counts { counts } => counts.iter().enumerate().flat_map(|(t, &c)| std::iter::repeat_n(t, c)).collect(),
        TypeRule::Positional => (0..n).collect(),
        TypeRule::Iid { probs } => (0..n)
            .map(|_| {
                let u: f64 = r.gen();
                let mut acc = 0.0;
                probs.iter().position(|p| {
                    acc += p;
                    u < acc
                })
                .unwrap_or(probs.len() - 1)
            })
            .collect(),
    };
    let bidders: Vec<Bidder<f64>> = labels
        .into_iter()
        .map(|label| {
            let z = cfg.bidder_z.iter().map(|&(lo, hi)| lo + (hi - lo) * r.gen::<f64>()).collect();
            Bidder::new(label, z)
        })
        .collect();
    let roster = match &cfg.types {
        TypeRule::Iid { probs } if cfg.bidder_z.is_empty() => {
            let mut counts = vec![0; probs.len()];
            bidders.iter().for_each(|b| counts[b.label] += 1);
            BidderRoster::from_type_counts(&counts)?
        }
        TypeRule::Counts { counts } if cfg.bidder_z.is_empty() => BidderRoster::from_type_counts(counts)?,
        _ => BidderRoster::new(bidders)?,
    };
    let lambdas = cfg.spec.lambdas(&roster)?;
    let (lo, hi) = cfg.curve.range();
    let levels: Vec<f64> = lambdas.iter().map(|&l| r.gen::<f64>().powf(1.0 / l)).collect();
    let values: Vec<f64> =
        levels.iter().map(|&t| cfg.curve.quantile(t.clamp(lo, hi), x.as_slice())).collect::<Result<_>>()?;
    let (winner, bid) = winner_and_price(&values, &levels);
    let winner = match cfg.winner_report {
        WinnerReport::Index => Winner::Index(winner),
        WinnerReport::Type => Winner::Type(roster.bidders()[winner].label),
    };
    AuctionRecord::new(id as u64, bid, x, roster, winner)
}

/// Highest-value bidder and the second-highest value. Equal values are
/// ranked by their quantile levels, then by lowest index.
pub fn winner_and_price(values: &[f64], levels: &[f64]) -> (usize, f64) {
    let mut w = 0;
    for i in 1..values.len() {
        if values[i] > values[w] || (values[i] == values[w] && levels[i] > levels[w]) {
            w = i;
        }
    }
    let second = values.iter().enumerate().filter(|(i, _)| *i != w).map(|(_, &v)| v).fold(f64::NEG_INFINITY, f64::max);
    (w, second)
}

/// Draws `cfg.n_auctions` auctions; deterministic in `cfg.seed`.
pub fn simulate_dataset(cfg: &SimConfig) -> Result<Vec<AuctionRecord>> {
    cfg.validate()?;
    (0..cfg.n_auctions).map(|id| draw_auction(cfg, id)).collect()
}

/// Bias and standard error of one type's estimated quantile function.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McTypeSummary {
    pub label: usize,
    pub lambda: f64,
    pub truth: Vec<f64>,
    pub mean: Vec<f64>,
    pub bias: Vec<f64>,
    pub se: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McReport {
    pub taus: Vec<f64>,
    pub x_eval: Vec<f64>,
    pub types: Vec<McTypeSummary>,
    /// Estimated exponent of type 1 in each successful replication.
    pub lambda_hat: Vec<f64>,
    pub n_replications: usize,
    pub failures: usize,
    /// Quantile fits whose optimality certificate did not pass.
    pub uncertified: usize,
    pub n_fits: usize,
}

struct Replication {
    lambda: f64,
    /// `[type][tau]`.
    estimates: Vec<Vec<f64>>,
    uncertified: usize,
    n_fits: usize,
}

fn replicate(cfg: &SimConfig, taus: &[f64], x_eval: &[f64], index: usize) -> Result<Replication> {
    let mut c = cfg.clone();
    c.seed = rng::derive_seed(cfg.seed, index as u64);
    let data = simulate_dataset(&c)?;
    let fit = mle_fit(&data, Variant::TypeFixedEffects)?;
    let transforms = data.iter().map(|r| r.level_transform(&fit.spec)).collect::<Result<Vec<_>>>()?;
    let (x, w, p) = design(&data)?;
    let mut estimates = Vec::with_capacity(fit.spec.alpha.len());
    let (mut uncertified, mut n_fits) = (0, 0);
    for &lam in &fit.spec.alpha {
        let mut row = Vec::with_capacity(taus.len());
        for &tau in taus {
            let level = tau.powf(1.0 / lam);
            let levels: Vec<f64> = transforms.iter().map(|t| t.psi(level)).collect();
            let f = qr::fit(&x, &w, &levels, p, level)?;
            n_fits += 1;
            uncertified += usize::from(!f.certified);
            row.push(f.gamma_hat.iter().zip(x_eval).map(|(g, v)| g * v).sum());
        }
        estimates.push(row);
    }
    Ok(Replication { lambda: fit.spec.alpha[1], estimates, uncertified, n_fits })
}

/// Repeats simulate → estimate `n_replications` times and summarizes the
/// estimated type quantile functions `X'γ̂(τ^{1/λ̂_t})` at `x_eval`.
pub fn run_mc_study(cfg: &SimConfig, n_replications: usize, taus: &[f64], x_eval: &[f64]) -> Result<McReport> {
    cfg.validate()?;
    if cfg.spec.variant != Variant::TypeFixedEffects {
        return Err(Error::InvalidParameter("the Monte Carlo harness needs a type-effects specification".into()));
    }
    let outcomes: Vec<Result<Replication>> =
        (0..n_replications).into_par_iter().map(|i| replicate(cfg, taus, x_eval, i)).collect();
    let failures = outcomes.iter().filter(|o| o.is_err()).count();
    let ok: Vec<Replication> = outcomes.into_iter().filter_map(|o| o.ok()).collect();
    if ok.is_empty() {
        return Err(Error::NonConvergence { what: "Monte Carlo (every replication failed)", iterations: n_replications, best: vec![] });
    }
    let n = ok.len() as f64;
    let types = cfg
        .spec
        .alpha
        .iter()
        .enumerate()
        .map(|(t, &lam)| {
            let truth: Vec<f64> =
                taus.iter().map(|&tau| cfg.curve.quantile(tau.powf(1.0 / lam), x_eval)).collect::<Result<_>>()?;
            let mean: Vec<f64> = (0..taus.len()).map(|k| ok.iter().map(|r| r.estimates[t][k]).sum::<f64>() / n).collect();
            let se = (0..taus.len())
                .map(|k| {
                    let ss: f64 = ok.iter().map(|r| (r.estimates[t][k] - mean[k]).powi(2)).sum();
                    if ok.len() > 1 {
                        (ss / (n - 1.0)).sqrt()
                    } else {
                        0.0
                    }
                })
                .collect();
            let bias = mean.iter().zip(&truth).map(|(m, v)| m - v).collect();
            Ok(McTypeSummary { label: t, lambda: lam, truth, mean, bias, se })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(McReport {
        taus: taus.to_vec(),
        x_eval: x_eval.to_vec(),
        types,
        lambda_hat: ok.iter().map(|r| r.lambda).collect(),
        n_replications,
        failures,
        uncertified: ok.iter().map(|r| r.uncertified).sum(),
        n_fits: ok.iter().map(|r| r.n_fits).sum(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn second_price_and_ties() {
        assert_eq!(winner_and_price(&[0.3, 0.9, 0.5], &[0.3, 0.9, 0.5]), (1, 0.5));
        assert_eq!(winner_and_price(&[0.7, 0.7], &[0.2, 0.4]), (1, 0.7));
        assert_eq!(winner_and_price(&[0.7, 0.7], &[0.4, 0.4]), (0, 0.7));
    }

    #[test]
    fn reproducible() {
        let cfg = SimConfig::two_type_design(50, 11);
        assert_eq!(simulate_dataset(&cfg).unwrap(), simulate_dataset(&cfg).unwrap());
        let other = SimConfig { seed: 12, ..cfg.clone() };
        assert_ne!(simulate_dataset(&cfg).unwrap(), simulate_dataset(&other).unwrap());
    }

    #[test]
    fn dominant_bidder_wins() {
        let cfg = SimConfig {
            n_auctions: 10_000,
            n_bidders: BidderCount::Fixed(2),
            types: TypeRule::Positional,
            spec: AsymmetrySpec::fixed_effects(vec![1.0, 1e6]).unwrap(),
            curve: CurveSpec::Power(PowerCurve::uniform()),
            covariates: vec![],
            bidder_z: vec![],
            winner_report: WinnerReport::Index,
            seed: 5,
        };
        let data = simulate_dataset(&cfg).unwrap();
        let wins = data.iter().filter(|r| r.winner == Winner::Index(1)).count();
        assert!(wins as f64 >= 0.999 * 10_000.0);
    }

    #[test]
    fn constant_parent_has_no_error() {
        let grid = crate::model::uniform_grid(100);
        let curve = ParentQuantileCurve::constant(grid, 2.0, 2).unwrap();
        let cfg = SimConfig { curve: CurveSpec::Grid(curve), ..SimConfig::two_type_design(200, 3) };
        let rep = run_mc_study(&cfg, 4, &[0.3, 0.5, 0.7], &[1.0, 2.0]).unwrap();
        for t in &rep.types {
            for k in 0..3 {
                assert!(t.bias[k].abs() < 1e-10);
                assert!(t.se[k].abs() < 1e-10);
            }
        }
        assert_eq!(rep.failures, 0);
    }

    #[test]
    fn config_validation() {
        let mut cfg = SimConfig::two_type_design(10, 1);
        cfg.n_bidders = BidderCount::Fixed(1);
        assert!(simulate_dataset(&cfg).is_err());
        let mut cfg = SimConfig::two_type_design(10, 1);
        cfg.covariates.push((1.0, 2.0));
        assert!(simulate_dataset(&cfg).is_err());
    }
}
