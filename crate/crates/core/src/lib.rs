//! Time-bucket simulation of manufacturing supply chains.
//!
//! The crate models a network of processes that turn parts into other parts
//! after a lead time, and simulates it by aggregating all events inside fixed
//! time buckets. [`bucket_engine`] is the deterministic fluid version,
//! [`lleap_engine`] replaces the per-bucket amounts by Poisson and binomial
//! draws, [`des_oracle`] refines the bucket size until the result stops
//! moving, and [`uq`] propagates parameter and process uncertainty with
//! plain and multilevel Monte Carlo. Scenarios are described in TOML, see
//! [`scenario_io`].

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bucket_engine;
pub mod des_oracle;
pub mod error;
pub mod lleap_engine;
pub mod model;
pub mod scenario_io;
pub mod uq;

pub use error::{Error, Result};

/// Tolerance for comparing bucket times, in days.
pub const TIME_EPS: f64 = 1e-9;
