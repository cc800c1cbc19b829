use chrono::NaiveDate;
use nalgebra::DMatrix;
use std::collections::HashSet;

use crate::error::{AgalError, Result};

/// Missing observations are stored as `NaN`.
pub fn is_present(x: f64) -> bool {
    !x.is_nan()
}

fn check_axes(asset_ids: &[String], dates: &[NaiveDate], rows: usize, cols: usize) -> Result<()> {
    if rows != asset_ids.len() || cols != dates.len() {
        return Err(AgalError::invalid(format!(
            "matrix is {rows}x{cols} but axes are {}x{}",
            asset_ids.len(),
            dates.len()
        )));
    }
    let mut seen = HashSet::with_capacity(asset_ids.len());
    for id in asset_ids {
        if !seen.insert(id.as_str()) {
            return Err(AgalError::invalid(format!("duplicate asset id {id}")));
        }
    }
    if dates.windows(2).any(|w| w[0] >= w[1]) {
        return Err(AgalError::invalid("dates must be strictly increasing"));
    }
    Ok(())
}

/// Price levels, one row per asset and one column per date.
#[derive(Debug, Clone, PartialEq)]
pub struct PricePanel {
    asset_ids: Vec<String>,
    dates: Vec<NaiveDate>,
    prices: DMatrix<f64>,
}

impl PricePanel {
    pub fn new(asset_ids: Vec<String>, dates: Vec<NaiveDate>, prices: DMatrix<f64>) -> Result<Self> {
        check_axes(&asset_ids, &dates, prices.nrows(), prices.ncols())?;
        if let Some(p) = prices.iter().find(|p| is_present(**p) && !(**p > 0.0 && p.is_finite())) {
            return Err(AgalError::invalid(format!("non-positive price {p}")));
        }
        Ok(Self {
            asset_ids,
            dates,
            prices,
        })
    }

    pub fn asset_ids(&self) -> &[String] {
        &self.asset_ids
    }

    pub fn dates(&self) -> &[NaiveDate] {
        &self.dates
    }

    pub fn prices(&self) -> &DMatrix<f64> {
        &self.prices
    }

    pub fn n_assets(&self) -> usize {
        self.asset_ids.len()
    }

    pub fn n_dates(&self) -> usize {
        self.dates.len()
    }
}

/// Simple returns; column `t` holds the return realized from `dates[t-1]` to `dates[t]`
/// of the originating price panel.
#[derive(Debug, Clone, PartialEq)]
pub struct ReturnsPanel {
    asset_ids: Vec<String>,
    dates: Vec<NaiveDate>,
    returns: DMatrix<f64>,
    is_normalized: bool,
}

impl ReturnsPanel {
    pub fn new(asset_ids: Vec<String>, dates: Vec<NaiveDate>, returns: DMatrix<f64>) -> Result<Self> {
        check_axes(&asset_ids, &dates, returns.nrows(), returns.ncols())?;
        if let Some(r) = returns.iter().find(|r| is_present(**r) && !(**r > -1.0 && r.is_finite())) {
            return Err(AgalError::invalid(format!("return {r} is not > -1")));
        }
        Ok(Self {
            asset_ids,
            dates,
            returns,
            is_normalized: false,
        })
    }

    pub(crate) fn from_parts_unchecked(
        asset_ids: Vec<String>,
        dates: Vec<NaiveDate>,
        returns: DMatrix<f64>,
        is_normalized: bool,
    ) -> Self {
        Self {
            asset_ids,
            dates,
            returns,
            is_normalized,
        }
    }

    pub fn asset_ids(&self) -> &[String] {
        &self.asset_ids
    }

    pub fn dates(&self) -> &[NaiveDate] {
        &self.dates
    }

    pub fn returns(&self) -> &DMatrix<f64> {
        &self.returns
    }

    pub fn is_normalized(&self) -> bool {
        self.is_normalized
    }

    pub fn n_assets(&self) -> usize {
        self.asset_ids.len()
    }

    pub fn n_dates(&self) -> usize {
        self.dates.len()
    }

    pub fn date_index(&self, date: NaiveDate) -> Option<usize> {
        self.dates.binary_search(&date).ok()
    }

    pub fn asset_index(&self, id: &str) -> Option<usize> {
        self.asset_ids.iter().position(|a| a == id)
    }

    pub fn get(&self, asset: usize, t: usize) -> Option<f64> {
        let r = self.returns[(asset, t)];
        is_present(r).then_some(r)
    }

    /// Restricts to the given asset rows (in the given order).
    pub fn select_assets(&self, rows: &[usize]) -> ReturnsPanel {
        let ids = rows.iter().map(|&i| self.asset_ids[i].clone()).collect();
        let m = self.returns.select_rows(rows.iter());
        Self::from_parts_unchecked(ids, self.dates.clone(), m, self.is_normalized)
    }

    /// Restricts to the half-open date-index range `[t0, t1)`.
    pub fn select_dates(&self, t0: usize, t1: usize) -> Result<ReturnsPanel> {
        if t0 >= t1 || t1 > self.n_dates() {
            return Err(AgalError::InvalidWindow(format!(
                "[{t0}, {t1}) outside 0..{}",
                self.n_dates()
            )));
        }
        let m = self.returns.columns(t0, t1 - t0).into_owned();
        Ok(Self::from_parts_unchecked(
            self.asset_ids.clone(),
            self.dates[t0..t1].to_vec(),
            m,
            self.is_normalized,
        ))
    }
}

/// Market capitalizations, same layout as [`PricePanel`].
#[derive(Debug, Clone, PartialEq)]
pub struct MarketCapPanel {
    asset_ids: Vec<String>,
    dates: Vec<NaiveDate>,
    caps: DMatrix<f64>,
}

impl MarketCapPanel {
    pub fn new(asset_ids: Vec<String>, dates: Vec<NaiveDate>, caps: DMatrix<f64>) -> Result<Self> {
        check_axes(&asset_ids, &dates, caps.nrows(), caps.ncols())?;
        if let Some(c) = caps.iter().find(|c| is_present(**c) && !(**c > 0.0 && c.is_finite())) {
            return Err(AgalError::invalid(format!("non-positive market cap {c}")));
        }
        Ok(Self { asset_ids, dates, caps })
    }

    pub fn asset_ids(&self) -> &[String] {
        &self.asset_ids
    }

    pub fn dates(&self) -> &[NaiveDate] {
        &self.dates
    }

    pub fn caps(&self) -> &DMatrix<f64> {
        &self.caps
    }

    pub fn date_index(&self, date: NaiveDate) -> Option<usize> {
        self.dates.binary_search(&date).ok()
    }

    /// Cap of `asset_id` on `date`, if both exist and the value is present.
    pub fn cap(&self, asset_id: &str, date: NaiveDate) -> Option<f64> {
        let i = self.asset_ids.iter().position(|a| a == asset_id)?;
        let t = self.date_index(date)?;
        let c = self.caps[(i, t)];
        is_present(c).then_some(c)
    }

    /// Re-indexes rows and columns onto another panel's axes; absent cells become missing.
    pub fn align_to(&self, asset_ids: &[String], dates: &[NaiveDate]) -> MarketCapPanel {
        let rows: Vec<Option<usize>> = asset_ids
            .iter()
            .map(|id| self.asset_ids.iter().position(|a| a == id))
            .collect();
        let cols: Vec<Option<usize>> = dates.iter().map(|d| self.date_index(*d)).collect();
        let caps = DMatrix::from_fn(asset_ids.len(), dates.len(), |i, t| match (rows[i], cols[t]) {
            (Some(r), Some(c)) => self.caps[(r, c)],
            _ => f64::NAN,
        });
        MarketCapPanel {
            asset_ids: asset_ids.to_vec(),
            dates: dates.to_vec(),
            caps,
        }
    }
}
