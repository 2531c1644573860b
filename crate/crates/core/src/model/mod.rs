//! Model primitives: asymmetry exponents, winner probabilities, the
//! winning-bid level transformation and parent quantile curves.

mod curve;
mod spec;
mod transform;

pub use curve::{riemann_cdf, uniform_grid, CovariateVector, ParentQuantileCurve, PowerCurve, QuantileModel};
pub use spec::{win_probabilities, AsymmetrySpec, Bidder, BidderRoster, Normalization, Variant};
pub use transform::{LevelTransform, PSI_INVERSE_TOL};
