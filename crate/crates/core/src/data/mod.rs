//! Price, return and market-cap panels; pool filters; synthetic universes.

pub mod io;
mod panel;
mod pool;
mod returns;
pub mod synth;

pub use panel::{is_present, MarketCapPanel, PricePanel, ReturnsPanel};
pub use pool::{apply_pool_filter, coverage, coverage_filter, liquidity_pool, PoolConfig, RefreshFrequency};
pub use returns::{compound_prices, compute_returns, cross_sectional_normalize, zero_filled, Normalized};
pub use synth::{generate_synthetic_universe, SyntheticConfig, SyntheticUniverse};
