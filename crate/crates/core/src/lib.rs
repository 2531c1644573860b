//! Power-asymmetry quantile model for ascending auctions with independent
//! private values.
//!
//! Bidder `i` draws its value from `F(v|X)^{λ_i}`, where the parent quantile
//! function is linear in the auction covariates, `V(τ|X) = X'γ(τ)`. The
//! exponents are estimated from winner identities by maximum likelihood and
//! the parent curve by quantile regression of winning bids at transformed
//! levels. On top of the estimator the crate provides a simulator, seller
//! revenue and reserve-price tools, and two specification tests.

pub mod bootstrap;
pub mod data;
pub mod error;
pub mod estimate;
pub mod io;
pub mod lp;
pub mod mle;
pub mod model;
pub mod qr;
pub mod revenue;
pub mod rng;
pub mod scalar;
pub mod simulate;
pub mod spec_tests;

pub use data::{AuctionRecord, Winner};
pub use error::{Error, ErrorClass, Result};
pub use scalar::Scalar;

pub type AsymmetrySpecF64 = model::AsymmetrySpec<f64>;
pub type AsymmetrySpecF32 = model::AsymmetrySpec<f32>;
pub type BidderF64 = model::Bidder<f64>;
pub type BidderRosterF64 = model::BidderRoster<f64>;
pub type CovariateVectorF64 = model::CovariateVector<f64>;
pub type CovariateVectorF32 = model::CovariateVector<f32>;
pub type LevelTransformF64 = model::LevelTransform<f64>;
pub type LevelTransformF32 = model::LevelTransform<f32>;
pub type ParentQuantileCurveF64 = model::ParentQuantileCurve<f64>;
pub type ParentQuantileCurveF32 = model::ParentQuantileCurve<f32>;
pub type PowerCurveF64 = model::PowerCurve<f64>;
pub type PowerCurveF32 = model::PowerCurve<f32>;
pub type QrFitF64 = qr::QrFit<f64>;
pub type QrFitF32 = qr::QrFit<f32>;
pub type RevenueCurveF64 = revenue::RevenueCurve<f64>;
pub type ReserveSolutionF64 = revenue::ReserveSolution<f64>;
pub type ReserveSolutionF32 = revenue::ReserveSolution<f32>;
