//! Observed auctions.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{AsymmetrySpec, BidderRoster, CovariateVector, LevelTransform};

/// How the winner is identified: by position in the roster or by type label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Winner {
    Index(usize),
    Type(usize),
}

/// One auction: winning bid, covariates, participants and winner.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuctionRecord {
    pub auction_id: u64,
    pub winning_bid: f64,
    pub x: CovariateVector<f64>,
    pub roster: BidderRoster<f64>,
    pub winner: Winner,
}

impl AuctionRecord {
    pub fn new(
        auction_id: u64,
        winning_bid: f64,
        x: CovariateVector<f64>,
        roster: BidderRoster<f64>,
        winner: Winner,
    ) -> Result<Self> {
        if !winning_bid.is_finite() {
            return Err(Error::InvalidParameter(format!("auction {auction_id}: non-finite winning bid")));
        }
        match winner {
            Winner::Index(i) if i >= roster.n() => {
                return Err(Error::InvalidParameter(format!("auction {auction_id}: winner index {i} out of range")))
            }
            Winner::Type(t) if roster.bidders().iter().all(|b| b.label != t) => {
                return Err(Error::InvalidParameter(format!("auction {auction_id}: no bidder of winning type {t}")))
            }
            _ => {}
        }
        Ok(Self { auction_id, winning_bid, x, roster, winner })
    }

    /// Label of the winner.
    pub fn winner_label(&self) -> usize {
        match self.winner {
            Winner::Index(i) => self.roster.bidders()[i].label,
            Winner::Type(t) => t,
        }
    }

    /// `Ψ` transform of this auction under `spec`. For a type winner all
    /// bidders of the winning type must share one exponent.
    pub fn level_transform(&self, spec: &AsymmetrySpec<f64>) -> Result<LevelTransform<f64>> {
        let lambdas = spec.lambdas(&self.roster)?;
        let total: f64 = lambdas.iter().sum();
        let lw = match self.winner {
            Winner::Index(i) => lambdas[i],
            Winner::Type(t) => {
                let mut of_type = self.roster.bidders().iter().zip(&lambdas).filter(|(b, _)| b.label == t);
                let (_, &first) = of_type.next().ok_or(Error::UnknownLabel(t))?;
                if of_type.any(|(_, &l)| l != first) {
                    return Err(Error::InvalidParameter(format!(
                        "auction {}: bidders of winning type {t} differ in λ; index winners needed",
                        self.auction_id
                    )));
                }
                first
            }
        };
        LevelTransform::new(lw, total)
    }

    /// Winning-bid quantile level `Ψ_{I*}(τ)` under `spec`.
    pub fn transformed_level(&self, tau: f64, spec: &AsymmetrySpec<f64>) -> Result<f64> {
        Ok(self.level_transform(spec)?.psi(tau))
    }

    /// `(count of label 0, count of label 1)` for two-type rosters.
    pub fn type_pair(&self) -> Result<(usize, usize)> {
        if self.roster.max_label() > 1 {
            return Err(Error::InvalidParameter(format!("auction {}: more than two types", self.auction_id)));
        }
        let c = self.roster.label_counts(2);
        Ok((c[0], c[1]))
    }
}

/// Row-major design matrix `n × p` and response vector.
pub fn design(records: &[AuctionRecord]) -> Result<(Vec<f64>, Vec<f64>, usize)> {
    let p = records.first().map(|r| r.x.len()).ok_or(Error::InvalidParameter("empty dataset".into()))?;
    let mut x = Vec::with_capacity(records.len() * p);
    let mut w = Vec::with_capacity(records.len());
    for r in records {
        if r.x.len() != p {
            return Err(Error::DimensionMismatch { expected: p, got: r.x.len() });
        }
        x.extend_from_slice(r.x.as_slice());
        w.push(r.winning_bid);
    }
    Ok((x, w, p))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(counts: &[usize], winner: Winner) -> AuctionRecord {
        AuctionRecord::new(
            1,
            1.0,
            CovariateVector::new(&[2.0]).unwrap(),
            BidderRoster::from_type_counts(counts).unwrap(),
            winner,
        )
        .unwrap()
    }

    #[test]
    fn transformed_levels() {
        let sym = AsymmetrySpec::two_types(1.0);
        let r = record(&[1, 1], Winner::Type(0));
        assert!((r.transformed_level(0.5, &sym).unwrap() - 0.75).abs() < 1e-15);
        assert_eq!(r.transformed_level(0.0, &sym).unwrap(), 0.0);
        let strong = AsymmetrySpec::two_types(2.0);
        let r = record(&[1, 1], Winner::Type(1));
        assert!((r.transformed_level(0.5, &strong).unwrap() - 0.6875).abs() < 1e-15);
    }

    #[test]
    fn index_and_type_winner_agree_for_type_effects() {
        let spec = AsymmetrySpec::two_types(0.7);
        let a = record(&[2, 3], Winner::Type(1));
        let b = record(&[2, 3], Winner::Index(4));
        assert_eq!(a.level_transform(&spec).unwrap(), b.level_transform(&spec).unwrap());
        assert_eq!(b.winner_label(), 1);
        assert_eq!(a.type_pair().unwrap(), (2, 3));
    }

    #[test]
    fn rejects_missing_winner_type() {
        let r = AuctionRecord::new(
            1,
            1.0,
            CovariateVector::new(&[2.0]).unwrap(),
            BidderRoster::from_type_counts(&[2, 0]).unwrap(),
            Winner::Type(1),
        );
        assert!(r.is_err());
    }
}
