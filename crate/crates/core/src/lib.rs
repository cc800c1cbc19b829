//! Portfolio construction from cleaned covariance spectra.
//!
//! The crate covers the full pipeline: panels and pool filters, cross-validated
//! eigenvalue cleaning, target portfolios, the long-only capped tracking
//! optimizer, turnover and performance metrics, a rebalancing backtester, the
//! exploration studies and the low-risk factor construction.

// NaN-rejecting guards are written as `!(x > 0.0)` on purpose.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::type_complexity)]

pub mod backtest;
pub mod data;
pub mod error;
pub mod explore;
pub mod factors;
pub mod metrics;
pub mod optimizer;
pub mod spectrum;
pub mod stats;
pub mod targets;

pub use error::{AgalError, Result};
