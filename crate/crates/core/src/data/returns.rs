use chrono::NaiveDate;
use nalgebra::DMatrix;

use super::panel::{is_present, PricePanel, ReturnsPanel};
use crate::error::{AgalError, Result};

/// Simple returns `S(t)/S(t-1) - 1`; missing if either price is missing.
pub fn compute_returns(prices: &PricePanel) -> Result<ReturnsPanel> {
    let t_in = prices.n_dates();
    if t_in < 2 {
        return Err(AgalError::invalid(format!("need at least 2 dates, got {t_in}")));
    }
    let p = prices.prices();
    let r = DMatrix::from_fn(prices.n_assets(), t_in - 1, |i, t| {
        let (prev, cur) = (p[(i, t)], p[(i, t + 1)]);
        if is_present(prev) && is_present(cur) {
            cur / prev - 1.0
        } else {
            f64::NAN
        }
    });
    ReturnsPanel::new(prices.asset_ids().to_vec(), prices.dates()[1..].to_vec(), r)
}

/// Rebuilds a price panel from returns given the prices on the date preceding the
/// first return. Missing returns leave the price missing from that point until a
/// present return follows a present price again.
pub fn compound_prices(returns: &ReturnsPanel, first_date: NaiveDate, initial: &[f64]) -> Result<PricePanel> {
    if initial.len() != returns.n_assets() {
        return Err(AgalError::invalid("one initial price per asset required"));
    }
    let n = returns.n_assets();
    let t = returns.n_dates();
    let mut p = DMatrix::from_element(n, t + 1, f64::NAN);
    for i in 0..n {
        p[(i, 0)] = initial[i];
        for s in 0..t {
            let r = returns.returns()[(i, s)];
            p[(i, s + 1)] = p[(i, s)] * (1.0 + r);
        }
    }
    let mut dates = Vec::with_capacity(t + 1);
    dates.push(first_date);
    dates.extend_from_slice(returns.dates());
    PricePanel::new(returns.asset_ids().to_vec(), dates, p)
}

/// Output of [`cross_sectional_normalize`].
#[derive(Debug, Clone)]
pub struct Normalized {
    pub panel: ReturnsPanel,
    /// Dates whose present returns were all exactly zero; those columns are set to zero.
    pub degenerate_dates: Vec<NaiveDate>,
}

/// Divides every date's cross-section by its L2 norm over present entries.
pub fn cross_sectional_normalize(returns: &ReturnsPanel) -> Result<Normalized> {
    if returns.is_normalized() {
        return Err(AgalError::invalid("returns are already cross-sectionally normalized"));
    }
    let mut m = returns.returns().clone();
    let mut degenerate_dates = Vec::new();
    for (t, mut col) in m.column_iter_mut().enumerate() {
        let norm = col.iter().filter(|r| is_present(**r)).map(|r| r * r).sum::<f64>().sqrt();
        if norm > 0.0 {
            for r in col.iter_mut().filter(|r| is_present(**r)) {
                *r /= norm;
            }
        } else {
            let any_present = col.iter().any(|r| is_present(*r));
            if any_present {
                log::warn!("all returns are zero on {}; normalized to zero", returns.dates()[t]);
                degenerate_dates.push(returns.dates()[t]);
            }
            for r in col.iter_mut().filter(|r| is_present(**r)) {
                *r = 0.0;
            }
        }
    }
    Ok(Normalized {
        panel: ReturnsPanel::from_parts_unchecked(returns.asset_ids().to_vec(), returns.dates().to_vec(), m, true),
        degenerate_dates,
    })
}

/// Returns matrix with missing entries replaced by zero, the convention used by all
/// covariance estimators.
pub fn zero_filled(returns: &ReturnsPanel) -> DMatrix<f64> {
    returns.returns().map(|r| if is_present(r) { r } else { 0.0 })
}
