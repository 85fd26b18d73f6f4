//! Bernoulli percolation on half-plane random triangulations and
//! quadrangulations, simulated through the peeling process.
//!
//! The crate is split into an exact layer ([`exact`], [`lattice`]) that
//! computes partition functions, peeling laws and thresholds in Q(sqrt 3),
//! and a Monte Carlo layer ([`peeling`], [`exploration`], [`stats`]) that
//! samples boundary-length walks and fits tail exponents.

pub mod error;
pub mod exact;
pub mod experiment;
pub mod exploration;
pub mod lattice;
pub mod peeling;
pub mod rng;
pub mod selftest;
pub mod stats;

pub use error::{PercoError, Result};
pub use exact::ExactValue;
pub use exploration::{PercolationModel, TrialRecord};
pub use lattice::{MapParams, MapType, PeelCase, Side};
