//! Correlated binomial urn process.
//!
//! A ±1 random walk whose step probabilities depend linearly on the current
//! position: from position `x` the walk moves up with probability
//! `1/2 + x·ε`, where `ε = κ/N` ties the correlation strength `κ` to the
//! total number of iterations `N`. The crate provides
//!
//! - [`urn`]: exact PMF evolution, the closed-form generating function,
//!   moments, small-κ series and model auto-correlations;
//! - [`sim`]: seeded, parallel Monte Carlo ensembles with sub-ensemble errors;
//! - [`ingest`]: price-to-tick decomposition and empirical histogram / ACF;
//! - [`inference`]: discrepancy functions, Metropolis sampling of `ε` and
//!   Bayes factors against the uncorrelated Bernoulli walk.
//!
//! The exact mathematics in [`urn`] is generic over the scalar type
//! ([`Scalar`] for field operations, [`Real`] where transcendental functions
//! are needed). Concrete aliases for `f64` and for exact rationals live at the
//! crate root.

pub mod error;
pub mod estimate;
pub mod inference;
pub mod ingest;
pub mod scalar;
pub mod sim;
pub mod urn;

pub use error::{Error, Result};
pub use estimate::Estimate;
pub use scalar::{Real, Scalar};

/// Exact rational arithmetic (arbitrary precision).
pub type Rational = num_rational::BigRational;

pub type ProcessParams64 = urn::ProcessParams<f64>;
pub type Pmf64 = urn::Pmf<f64>;
pub type MomentSet64 = urn::MomentSet<f64>;

pub type ProcessParams32 = urn::ProcessParams<f32>;
pub type Pmf32 = urn::Pmf<f32>;

pub type ExactParams = urn::ProcessParams<Rational>;
pub type ExactPmf = urn::Pmf<Rational>;
pub type ExactMoments = urn::MomentSet<Rational>;
