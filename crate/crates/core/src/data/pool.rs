use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::panel::{is_present, MarketCapPanel, ReturnsPanel};
use crate::error::{AgalError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RefreshFrequency {
    Yearly,
}

/// Pool construction rules.
///
/// Liquidity is proxied by `market cap x mean |daily return|` over
/// `liquidity_window_days`: a large-then-liquid two-stage ranking where the first
/// stage (`cap_prefilter`) is optional.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PoolConfig {
    pub min_coverage_fraction: f64,
    pub liquidity_window_days: usize,
    pub pool_size: usize,
    pub refresh_frequency: RefreshFrequency,
    /// Keep only the largest `cap_prefilter` names before the liquidity ranking.
    pub cap_prefilter: Option<usize>,
    /// Window over which coverage is measured (the covariance lookback).
    pub coverage_lookback_days: usize,
}

impl Default for PoolConfig {
    fn default() -> Self {
        Self {
            min_coverage_fraction: 0.95,
            liquidity_window_days: 63,
            pool_size: 1000,
            refresh_frequency: RefreshFrequency::Yearly,
            cap_prefilter: None,
            coverage_lookback_days: 1000,
        }
    }
}

impl PoolConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.min_coverage_fraction > 0.0 && self.min_coverage_fraction <= 1.0) {
            return Err(AgalError::invalid("min_coverage_fraction must lie in (0, 1]"));
        }
        if self.pool_size < 2 {
            return Err(AgalError::invalid("pool_size must be at least 2"));
        }
        if self.liquidity_window_days == 0 || self.coverage_lookback_days == 0 {
            return Err(AgalError::invalid("pool windows must be positive"));
        }
        Ok(())
    }
}

fn window_start(end: usize, len: usize) -> usize {
    (end + 1).saturating_sub(len)
}

/// Stage one: ranks assets by the liquidity proxy as of date index `t` and keeps the
/// top `pool_size`. Returned indices are sorted ascending.
pub fn liquidity_pool(returns: &ReturnsPanel, caps: &MarketCapPanel, cfg: &PoolConfig, t: usize) -> Vec<usize> {
    let date = returns.dates()[t];
    let t0 = window_start(t, cfg.liquidity_window_days);
    let mut scored: Vec<(usize, f64, f64)> = (0..returns.n_assets())
        .filter_map(|i| {
            let cap = caps.cap(&returns.asset_ids()[i], date)?;
            let (sum, count) = (t0..=t)
                .filter_map(|s| returns.get(i, s))
                .fold((0.0, 0usize), |(s, c), r| (s + r.abs(), c + 1));
            (count > 0).then(|| (i, cap, cap * sum / count as f64))
        })
        .collect();
    if let Some(k) = cfg.cap_prefilter {
        scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        scored.truncate(k);
    }
    scored.sort_by(|a, b| b.2.total_cmp(&a.2).then(a.0.cmp(&b.0)));
    scored.truncate(cfg.pool_size);
    let mut out: Vec<usize> = scored.into_iter().map(|s| s.0).collect();
    out.sort_unstable();
    out
}

/// Fraction of present returns for `asset` over the `len` dates ending at `t`.
pub fn coverage(returns: &ReturnsPanel, asset: usize, t: usize, len: usize) -> f64 {
    let t0 = window_start(t, len);
    let present = (t0..=t).filter(|&s| is_present(returns.returns()[(asset, s)])).count();
    present as f64 / len as f64
}

/// Stage two: keeps candidates whose coverage over the lookback window ending at `t`
/// reaches `min_coverage_fraction`.
pub fn coverage_filter(returns: &ReturnsPanel, candidates: &[usize], cfg: &PoolConfig, t: usize) -> Vec<usize> {
    candidates
        .iter()
        .copied()
        .filter(|&i| coverage(returns, i, t, cfg.coverage_lookback_days) >= cfg.min_coverage_fraction)
        .collect()
}

/// Both pool stages as of `as_of`; returns the surviving asset ids.
pub fn apply_pool_filter(
    returns: &ReturnsPanel,
    caps: &MarketCapPanel,
    cfg: &PoolConfig,
    as_of: NaiveDate,
) -> Result<Vec<String>> {
    cfg.validate()?;
    let t = returns
        .date_index(as_of)
        .ok_or_else(|| AgalError::invalid(format!("{as_of} not in the date axis")))?;
    let ranked = liquidity_pool(returns, caps, cfg, t);
    let kept = coverage_filter(returns, &ranked, cfg, t);
    if kept.len() < 2 {
        return Err(AgalError::PoolTooSmall {
            date: as_of.to_string(),
            size: kept.len(),
        });
    }
    Ok(kept.into_iter().map(|i| returns.asset_ids()[i].clone()).collect())
}
