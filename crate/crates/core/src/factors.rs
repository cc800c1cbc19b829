//! Rank-based low-volatility and low-beta factors, and method exposures to them.
//!
//! Stock volatilities and betas come from overlapping multi-day return sums, which
//! soaks up lead-lag effects between stocks and the index. The signal at `t` uses
//! estimates lagged by `signal_lag`; the factor is hedged with its own lagged
//! rolling beta to the market-cap benchmark and scaled to a fixed volatility.

use std::io::Write;

use chrono::NaiveDate;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{is_present, MarketCapPanel, ReturnsPanel};
use crate::error::{AgalError, Result};
use crate::stats::{average_ranks, correlation, std_dev};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FactorConfig {
    pub vol_window: usize,
    pub return_horizon: usize,
    pub signal_lag: usize,
    pub hedge_beta_window: usize,
    pub hedge_lag: usize,
    /// Annualized.
    pub vol_target: f64,
    pub vol_estimate_window: usize,
}

impl Default for FactorConfig {
    fn default() -> Self {
        Self {
            vol_window: 100,
            return_horizon: 3,
            signal_lag: 20,
            hedge_beta_window: 100,
            hedge_lag: 2,
            vol_target: 0.10,
            vol_estimate_window: 100,
        }
    }
}

impl FactorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.vol_window < 2 || self.hedge_beta_window < 2 || self.vol_estimate_window < 2 {
            return Err(AgalError::invalid("factor windows must be at least 2"));
        }
        if self.return_horizon == 0 {
            return Err(AgalError::invalid("return_horizon must be positive"));
        }
        if !(self.vol_target > 0.0 && self.vol_target.is_finite()) {
            return Err(AgalError::invalid("vol_target must be positive"));
        }
        Ok(())
    }

    /// Days of history consumed before the first factor value.
    pub fn warm_up(&self) -> usize {
        let h = self.return_horizon - 1;
        let signal = h + self.vol_window - 1 + self.signal_lag;
        signal + h + self.hedge_beta_window + self.hedge_lag + self.vol_estimate_window + self.hedge_lag
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FactorKind {
    LowVol,
    LowBeta,
}

impl FactorKind {
    pub fn label(self) -> &'static str {
        match self {
            FactorKind::LowVol => "LV",
            FactorKind::LowBeta => "LB",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorSeries {
    pub kind: FactorKind,
    pub dates: Vec<NaiveDate>,
    /// Hedged, vol-targeted daily returns.
    pub returns: Vec<f64>,
    /// Cash-neutral signal returns before hedging and scaling.
    pub raw: Vec<f64>,
    pub hedge_beta: Vec<f64>,
    pub scale: Vec<f64>,
    /// Lagged annualized vol of the hedged series used for scaling.
    pub realized_vol: Vec<f64>,
    /// Largest `|sum_i s_i|` over all signal dates.
    pub max_signal_sum: f64,
}

/// Daily return of the market-cap-weighted index, weights from the previous day's
/// caps over the names with a return and a cap. NaN when no such name exists.
pub fn cap_weighted_returns(returns: &ReturnsPanel, caps: &MarketCapPanel) -> Vec<f64> {
    let caps = caps.align_to(returns.asset_ids(), returns.dates());
    let (r, c) = (returns.returns(), caps.caps());
    (0..returns.n_dates())
        .map(|t| {
            if t == 0 {
                return f64::NAN;
            }
            let (mut num, mut den) = (0.0, 0.0);
            for i in 0..returns.n_assets() {
                let (x, w) = (r[(i, t)], c[(i, t - 1)]);
                if is_present(x) && is_present(w) {
                    num += w * x;
                    den += w;
                }
            }
            if den > 0.0 {
                num / den
            } else {
                f64::NAN
            }
        })
        .collect()
}

/// `2 rank / N - 1` with average ranks for ties, then demeaned.
pub fn rank_signal(scores: &[f64]) -> Result<Vec<f64>> {
    let n = scores.len();
    if n < 2 {
        return Err(AgalError::invalid("rank_signal needs at least 2 scores"));
    }
    if scores.iter().any(|x| !x.is_finite()) {
        return Err(AgalError::invalid("rank_signal scores must be finite"));
    }
    let ranks = average_ranks(scores);
    let mut s: Vec<f64> = ranks.iter().map(|r| 2.0 * r / n as f64 - 1.0).collect();
    let mean = s.iter().sum::<f64>() / n as f64;
    for x in &mut s {
        *x -= mean;
    }
    Ok(s)
}

/// Overlapping sums of `h` consecutive values; missing when any term is.
pub fn rolling_sum(x: &[f64], h: usize) -> Vec<f64> {
    (0..x.len())
        .map(|s| {
            if s + 1 < h {
                return f64::NAN;
            }
            let w = &x[s + 1 - h..=s];
            if w.iter().all(|v| is_present(*v)) {
                w.iter().sum()
            } else {
                f64::NAN
            }
        })
        .collect()
}

fn min_count(len: usize) -> usize {
    ((0.9 * len as f64).ceil() as usize).max(2)
}

/// Pairs of present values over the `len` entries ending at `end`.
fn window_pairs(x: &[f64], y: &[f64], end: usize, len: usize) -> Option<(Vec<f64>, Vec<f64>)> {
    if end + 1 < len {
        return None;
    }
    let (mut a, mut b) = (Vec::with_capacity(len), Vec::with_capacity(len));
    for s in end + 1 - len..=end {
        if is_present(x[s]) && is_present(y[s]) {
            a.push(x[s]);
            b.push(y[s]);
        }
    }
    (a.len() >= min_count(len)).then_some((a, b))
}

fn window_values(x: &[f64], end: usize, len: usize) -> Option<Vec<f64>> {
    if end + 1 < len {
        return None;
    }
    let v: Vec<f64> = x[end + 1 - len..=end].iter().copied().filter(|v| is_present(*v)).collect();
    (v.len() >= min_count(len)).then_some(v)
}

/// OLS slope of `y` on `x` (with intercept).
fn slope(y: &[f64], x: &[f64]) -> Option<f64> {
    let n = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
    }
    (sxx > 0.0).then(|| sxy / sxx)
}

/// Rolling beta of `y` to `x` from `h`-day sums over `len` values ending `lag`
/// days before each date.
pub fn lagged_rolling_beta(y: &[f64], x: &[f64], h: usize, len: usize, lag: usize) -> Vec<f64> {
    let (y3, x3) = (rolling_sum(y, h), rolling_sum(x, h));
    (0..y.len())
        .map(|t| {
            t.checked_sub(lag)
                .and_then(|e| window_pairs(&y3, &x3, e, len))
                .and_then(|(a, b)| slope(&a, &b))
                .unwrap_or(f64::NAN)
        })
        .collect()
}

/// Builds the hedged, vol-targeted factor. `benchmark` holds the market-cap
/// portfolio's daily returns on the same date axis as `returns` (NaN when unknown).
pub fn build_low_risk_factor(
    returns: &ReturnsPanel,
    benchmark: &[f64],
    kind: FactorKind,
    cfg: &FactorConfig,
) -> Result<FactorSeries> {
    cfg.validate()?;
    let t_len = returns.n_dates();
    if benchmark.len() != t_len {
        return Err(AgalError::invalid(format!(
            "benchmark has {} dates, returns have {t_len}",
            benchmark.len()
        )));
    }
    if t_len <= cfg.warm_up() {
        return Err(AgalError::Coverage(format!(
            "{t_len} dates cannot cover the {} day warm-up",
            cfg.warm_up()
        )));
    }
    let n = returns.n_assets();
    let r = returns.returns();
    let h = cfg.return_horizon;
    let m3 = rolling_sum(benchmark, h);
    let r3: Vec<Vec<f64>> = (0..n)
        .map(|i| rolling_sum(&r.row(i).iter().copied().collect::<Vec<_>>(), h))
        .collect();

    // signal-date estimates, then the raw factor return on every date
    let raw: Vec<(f64, f64)> = (0..t_len)
        .into_par_iter()
        .map(|t| {
            let Some(e) = t.checked_sub(cfg.signal_lag) else {
                return Ok((f64::NAN, 0.0));
            };
            let mut members = Vec::new();
            let mut scores = Vec::new();
            for (i, series) in r3.iter().enumerate() {
                let score = match kind {
                    FactorKind::LowVol => window_values(series, e, cfg.vol_window).map(|v| std_dev(&v)),
                    FactorKind::LowBeta => window_pairs(series, &m3, e, cfg.vol_window).and_then(|(a, b)| slope(&a, &b)),
                };
                if let Some(s) = score.filter(|s| s.is_finite()) {
                    members.push(i);
                    // low risk ranks high
                    scores.push(-s);
                }
            }
            if members.len() < 2 {
                return Ok((f64::NAN, 0.0));
            }
            let s = rank_signal(&scores)?;
            let sum: f64 = s.iter().sum();
            let f = members
                .iter()
                .zip(&s)
                .map(|(&i, w)| {
                    let x = r[(i, t)];
                    if is_present(x) {
                        w * x
                    } else {
                        0.0
                    }
                })
                .sum();
            Ok((f, sum.abs()))
        })
        .collect::<Result<_>>()?;
    let max_signal_sum = raw.iter().map(|x| x.1).fold(0.0, f64::max);
    let raw: Vec<f64> = raw.into_iter().map(|x| x.0).collect();

    let beta = lagged_rolling_beta(&raw, benchmark, h, cfg.hedge_beta_window, cfg.hedge_lag);
    let hedged: Vec<f64> = (0..t_len).map(|t| raw[t] - beta[t] * benchmark[t]).collect();

    let daily_target = cfg.vol_target / 252f64.sqrt();
    let mut out = FactorSeries {
        kind,
        dates: Vec::new(),
        returns: Vec::new(),
        raw: Vec::new(),
        hedge_beta: Vec::new(),
        scale: Vec::new(),
        realized_vol: Vec::new(),
        max_signal_sum,
    };
    let mut previous_scale: Option<f64> = None;
    for t in 0..t_len {
        let vol = t
            .checked_sub(cfg.hedge_lag)
            .and_then(|e| window_values(&hedged, e, cfg.vol_estimate_window))
            .map(|v| std_dev(&v));
        let started = !out.dates.is_empty();
        let Some(vol) = vol.filter(|_| is_present(hedged[t])) else {
            if started {
                return Err(AgalError::Coverage(format!(
                    "factor undefined on {} after it started",
                    returns.dates()[t]
                )));
            }
            continue;
        };
        let scale = if vol > 0.0 {
            daily_target / vol
        } else if let Some(s) = previous_scale {
            log::warn!("zero rolling vol on {}; keeping the previous scale", returns.dates()[t]);
            s
        } else {
            continue;
        };
        previous_scale = Some(scale);
        out.dates.push(returns.dates()[t]);
        out.returns.push(scale * hedged[t]);
        out.raw.push(raw[t]);
        out.hedge_beta.push(beta[t]);
        out.scale.push(scale);
        out.realized_vol.push(vol * 252f64.sqrt());
    }
    if out.dates.is_empty() {
        return Err(AgalError::Coverage("no date has enough history for the factor".into()));
    }
    Ok(out)
}

/// One method's correlations to the two factors, raw and after removing the
/// lagged rolling-beta market component.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExposureRow {
    pub method: String,
    pub rho_low_vol: f64,
    pub rho_star_low_vol: f64,
    pub rho_low_beta: f64,
    pub rho_star_low_beta: f64,
    /// The residual over the benchmark vanished; starred values are reported as 0.
    pub residual_degenerate: bool,
}

/// Daily series on a shared date axis.
#[derive(Debug, Clone, PartialEq)]
pub struct MethodSeries {
    pub label: String,
    pub returns: Vec<f64>,
}

fn aligned(dates: &[NaiveDate], series: &[f64], factor: &FactorSeries) -> (Vec<f64>, Vec<f64>) {
    let mut a = Vec::new();
    let mut b = Vec::new();
    let mut j = 0;
    for (t, d) in dates.iter().enumerate() {
        while j < factor.dates.len() && factor.dates[j] < *d {
            j += 1;
        }
        if j < factor.dates.len() && factor.dates[j] == *d && is_present(series[t]) {
            a.push(series[t]);
            b.push(factor.returns[j]);
        }
    }
    (a, b)
}

fn corr(a: &[f64], b: &[f64]) -> Result<f64> {
    correlation(a, b).ok_or_else(|| AgalError::Undefined("correlation with a zero-variance series".into()))
}

/// `dates` is the axis of `benchmark` and every method series.
pub fn exposure_table(
    dates: &[NaiveDate],
    methods: &[MethodSeries],
    benchmark: &[f64],
    low_vol: &FactorSeries,
    low_beta: &FactorSeries,
    cfg: &FactorConfig,
) -> Result<Vec<ExposureRow>> {
    if benchmark.len() != dates.len() || methods.iter().any(|m| m.returns.len() != dates.len()) {
        return Err(AgalError::invalid("method and benchmark series must share the date axis"));
    }
    methods
        .iter()
        .map(|m| {
            let beta = lagged_rolling_beta(
                &m.returns,
                benchmark,
                cfg.return_horizon,
                cfg.hedge_beta_window,
                cfg.hedge_lag,
            );
            let resid: Vec<f64> = (0..dates.len()).map(|t| m.returns[t] - beta[t] * benchmark[t]).collect();
            let present: Vec<f64> = resid.iter().copied().filter(|x| is_present(*x)).collect();
            let kept: Vec<f64> = m.returns.iter().copied().filter(|x| is_present(*x)).collect();
            let degenerate = std_dev(&present) <= 1e-8 * std_dev(&kept);
            let star = |f: &FactorSeries| -> Result<f64> {
                if degenerate {
                    return Ok(0.0);
                }
                let (a, b) = aligned(dates, &resid, f);
                corr(&a, &b)
            };
            let plain = |f: &FactorSeries| -> Result<f64> {
                let (a, b) = aligned(dates, &m.returns, f);
                corr(&a, &b)
            };
            Ok(ExposureRow {
                method: m.label.clone(),
                rho_low_vol: plain(low_vol)?,
                rho_star_low_vol: star(low_vol)?,
                rho_low_beta: plain(low_beta)?,
                rho_star_low_beta: star(low_beta)?,
                residual_degenerate: degenerate,
            })
            .map_err(|e: AgalError| e.context(format!("exposures of {}", m.label)))
        })
        .collect()
}

/// Rows are measures, columns are methods.
pub fn write_exposure_csv<W: Write>(writer: W, zone: &str, rows: &[ExposureRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["zone".to_string(), "measure".to_string()];
    header.extend(rows.iter().map(|r| r.method.clone()));
    w.write_record(&header)?;
    let measures: [(&str, fn(&ExposureRow) -> f64); 4] = [
        ("rho_LV", |r| r.rho_low_vol),
        ("rho*_LV", |r| r.rho_star_low_vol),
        ("rho_LB", |r| r.rho_low_beta),
        ("rho*_LB", |r| r.rho_star_low_beta),
    ];
    for (name, f) in measures {
        let mut rec = vec![zone.to_string(), name.to_string()];
        rec.extend(rows.iter().map(|r| f(r).to_string()));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}
