//! Simultaneous ruin probabilities for multivariate Gaussian risk models.
//!
//! The model is `X(t) = A Z(t)` with `Z` a vector of independent centered
//! Gaussian processes with stationary increments, and the quantity of
//! interest is
//!
//! ```text
//! p_T(u a) = P( ∃ t ∈ [0,T] : X(t) - c t > u a  componentwise )
//! ```
//!
//! The crate provides three routes to it that cross-validate each other:
//!
//! * closed-form large-`u` asymptotics driven by a quadratic program over
//!   the endpoint covariance ([`asymptotics`], [`qp`]),
//! * uniform lower/upper bounds from the endpoint tail and an orthant
//!   probability ([`asymptotics::bounds`], [`gaussprob`]),
//! * Monte Carlo estimation on discretized paths, with optional mean-shift
//!   importance sampling ([`montecarlo`]).

// `!(x > 0)`-style guards are used on purpose: they reject NaN along with
// the out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod asymptotics;
pub mod cli;
pub mod error;
pub mod gaussprob;
pub mod linalg;
pub mod model;
pub mod montecarlo;
pub mod qp;
pub mod report;

pub use error::{Error, Result};
pub use model::{AssumptionReport, ModelSpec, StationaryKernel, VarianceFunction};

/// Library version, embedded in every report for reproducibility.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
