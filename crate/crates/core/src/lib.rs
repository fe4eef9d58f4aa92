//! Eco-driving speed advisory for electric vehicles.
//!
//! The closed-form energy-optimal speed profile (`ocp`) runs inside a
//! shrinking-horizon advisor (`advisor`) fed by map matching (`route`) and
//! perception frames. `sim` replays eco-advised and human baseline drivers
//! through the same traffic, `score` evaluates trips after the fact.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod advisor;
pub mod error;
pub mod ocp;
pub mod oracle;
pub mod route;
pub mod scenario;
pub mod score;
pub mod sim;
pub mod suite;
pub mod vehicle;

pub use error::{Error, Result};
