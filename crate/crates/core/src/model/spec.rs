use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Functional form of the asymmetry exponent `λ(z; α, β)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// `λ = α_label`, one effect per bidder identity.
    FixedEffects,
    /// `λ = α_label`, one effect per bidder type.
    TypeFixedEffects,
    /// `λ = z'β`.
    LinearRegression,
    /// `λ = α_label + z'β`.
    LinearWithFixedEffects,
    /// `λ = α_label · exp(z'β)`.
    ExpLinearWithFixedEffects,
}

impl Variant {
    pub const ALL: [Variant; 5] = [
        Variant::FixedEffects,
        Variant::TypeFixedEffects,
        Variant::LinearRegression,
        Variant::LinearWithFixedEffects,
        Variant::ExpLinearWithFixedEffects,
    ];

    pub fn uses_alpha(self) -> bool {
        !matches!(self, Variant::LinearRegression)
    }

    pub fn uses_beta(self) -> bool {
        matches!(
            self,
            Variant::LinearRegression | Variant::LinearWithFixedEffects | Variant::ExpLinearWithFixedEffects
        )
    }

    pub fn default_normalization(self) -> Normalization {
        match self {
            Variant::LinearRegression => Normalization::FirstBetaOne,
            _ => Normalization::FirstAlphaOne,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Variant::FixedEffects => "fixed_effects",
            Variant::TypeFixedEffects => "type_fixed",
            Variant::LinearRegression => "linear",
            Variant::LinearWithFixedEffects => "linear_fixed",
            Variant::ExpLinearWithFixedEffects => "exp_linear_fixed",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "fixed_effects" | "fixed" | "fe" => Ok(Variant::FixedEffects),
            "type_fixed" | "type_fixed_effects" | "types" => Ok(Variant::TypeFixedEffects),
            "linear" | "linear_regression" => Ok(Variant::LinearRegression),
            "linear_fixed" | "linear_with_fixed_effects" => Ok(Variant::LinearWithFixedEffects),
            "exp_linear_fixed" | "exp_linear_with_fixed_effects" => Ok(Variant::ExpLinearWithFixedEffects),
            other => Err(Error::InvalidParameter(format!("unknown variant `{other}`"))),
        }
    }
}

/// Scale normalization pinning down the otherwise unidentified level of `λ`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    /// `α_0 = 1`.
    FirstAlphaOne,
    /// `β_0 = 1`.
    FirstBetaOne,
    /// `‖β‖ = 1`.
    UnitNormBeta,
    /// `Σ α = 1`.
    AlphaSimplex,
}

/// One bidder: a label (identity or type, indexing `α`) and characteristics `z`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(deserialize = "T: Deserialize<'de>"))]
pub struct Bidder<T = f64> {
    pub label: usize,
    #[serde(default)]
    pub z: Vec<T>,
}

impl<T> Bidder<T> {
    pub fn new(label: usize, z: Vec<T>) -> Self {
        Self { label, z }
    }

    pub fn of_type(label: usize) -> Self {
        Self { label, z: Vec::new() }
    }
}

/// Participants of one auction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BidderRoster<T = f64> {
    bidders: Vec<Bidder<T>>,
    type_counts: Option<Vec<usize>>,
}

impl<T: Clone> BidderRoster<T> {
    pub fn new(bidders: Vec<Bidder<T>>) -> Result<Self> {
        if bidders.len() < 2 {
            return Err(Error::InvalidParameter(format!(
                "an auction needs at least two bidders, got {}",
                bidders.len()
            )));
        }
        Ok(Self { bidders, type_counts: None })
    }

    /// Roster built from per-type counts; bidders of type `t` carry label `t`.
    pub fn from_type_counts(counts: &[usize]) -> Result<Self> {
        let bidders: Vec<Bidder<T>> = counts
            .iter()
            .enumerate()
            .flat_map(|(t, &c)| (0..c).map(move |_| Bidder { label: t, z: Vec::new() }))
            .collect();
        let mut roster = Self::new(bidders)?;
        roster.type_counts = Some(counts.to_vec());
        Ok(roster)
    }

    pub fn n(&self) -> usize {
        self.bidders.len()
    }

    pub fn bidders(&self) -> &[Bidder<T>] {
        &self.bidders
    }

    pub fn type_counts(&self) -> Option<&[usize]> {
        self.type_counts.as_deref()
    }

    /// Number of bidders carrying each label `0..n_labels`.
    pub fn label_counts(&self, n_labels: usize) -> Vec<usize> {
        let mut counts = vec![0; n_labels];
        for b in &self.bidders {
            if b.label < n_labels {
                counts[b.label] += 1;
            }
        }
        counts
    }

    pub fn max_label(&self) -> usize {
        self.bidders.iter().map(|b| b.label).max().unwrap_or(0)
    }
}

/// Parametric asymmetry function together with its identifying normalization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(deserialize = "T: Deserialize<'de>"))]
pub struct AsymmetrySpec<T = f64> {
    pub variant: Variant,
    #[serde(default)]
    pub alpha: Vec<T>,
    #[serde(default)]
    pub beta: Vec<T>,
    pub normalization: Normalization,
}

impl<T: Scalar> AsymmetrySpec<T> {
    /// Validated constructor: the normalization must hold on the supplied parameters.
    pub fn new(variant: Variant, alpha: Vec<T>, beta: Vec<T>, normalization: Normalization) -> Result<Self> {
        let spec = Self { variant, alpha, beta, normalization };
        spec.validate()?;
        Ok(spec)
    }

    /// Type effects with the first type as the reference (`α_0 = 1`).
    pub fn type_effects(alpha: Vec<T>) -> Result<Self> {
        Self::new(Variant::TypeFixedEffects, alpha, Vec::new(), Normalization::FirstAlphaOne)
    }

    /// Two types with the reference type at 1 and the other at `lambda`.
    pub fn two_types(lambda: T) -> Self {
        Self {
            variant: Variant::TypeFixedEffects,
            alpha: vec![T::one(), lambda],
            beta: Vec::new(),
            normalization: Normalization::FirstAlphaOne,
        }
    }

    pub fn fixed_effects(alpha: Vec<T>) -> Result<Self> {
        Self::new(Variant::FixedEffects, alpha, Vec::new(), Normalization::FirstAlphaOne)
    }

    pub fn validate(&self) -> Result<()> {
        if self.variant.uses_alpha() && self.alpha.is_empty() {
            return Err(Error::InvalidParameter(format!("variant {} needs α", self.variant)));
        }
        if self.variant.uses_beta() && self.beta.is_empty() {
            return Err(Error::InvalidParameter(format!("variant {} needs β", self.variant)));
        }
        if self.alpha.iter().chain(&self.beta).any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("non-finite asymmetry parameter".into()));
        }
        let tol = T::epsilon() * T::lit(64.0);
        let ok = match self.normalization {
            Normalization::FirstAlphaOne => self.alpha.first() == Some(&T::one()),
            Normalization::FirstBetaOne => self.beta.first() == Some(&T::one()),
            Normalization::UnitNormBeta => {
                let norm = self.beta.iter().map(|b| *b * *b).sum::<T>().sqrt();
                (norm - T::one()).abs() <= tol
            }
            Normalization::AlphaSimplex => (self.alpha.iter().copied().sum::<T>() - T::one()).abs() <= tol,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!("parameters violate normalization {:?}", self.normalization)))
        }
    }

    /// `λ(z; α, β)` for one bidder. The error's bidder field carries the label.
    pub fn lambda(&self, bidder: &Bidder<T>) -> Result<T> {
        let alpha = |label: usize| self.alpha.get(label).copied().ok_or(Error::UnknownLabel(label));
        let index = || -> Result<T> {
            if bidder.z.len() != self.beta.len() {
                return Err(Error::DimensionMismatch { expected: self.beta.len(), got: bidder.z.len() });
            }
            Ok(bidder.z.iter().zip(&self.beta).map(|(z, b)| *z * *b).sum())
        };
        let value = match self.variant {
            Variant::FixedEffects | Variant::TypeFixedEffects => alpha(bidder.label)?,
            Variant::LinearRegression => index()?,
            Variant::LinearWithFixedEffects => alpha(bidder.label)? + index()?,
            Variant::ExpLinearWithFixedEffects => alpha(bidder.label)? * index()?.exp(),
        };
        if value > T::zero() && value.is_finite() {
            Ok(value)
        } else {
            Err(Error::NonPositiveLambda { bidder: bidder.label, value: value.as_f64() })
        }
    }

    /// `λ_i` for every bidder in roster order. The error's bidder field carries the position.
    pub fn lambdas(&self, roster: &BidderRoster<T>) -> Result<Vec<T>> {
        roster
            .bidders()
            .iter()
            .enumerate()
            .map(|(i, b)| {
                self.lambda(b).map_err(|e| match e {
                    Error::NonPositiveLambda { value, .. } => Error::NonPositiveLambda { bidder: i, value },
                    other => other,
                })
            })
            .collect()
    }

    /// `λ_i / Σ_j λ_j` for every bidder.
    pub fn win_probabilities(&self, roster: &BidderRoster<T>) -> Result<Vec<T>> {
        Ok(win_probabilities(&self.lambdas(roster)?))
    }
}

/// `λ_i / Σ_j λ_j`.
pub fn win_probabilities<T: Scalar>(lambdas: &[T]) -> Vec<T> {
    let total: T = lambdas.iter().copied().sum();
    lambdas.iter().map(|&l| l / total).collect()
}
