//! Concentration, turnover and performance statistics.

use std::io::Write;

use chrono::NaiveDate;
use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{AgalError, Result};
use crate::stats;

/// Weekly periods per year.
pub const WEEKS_PER_YEAR: f64 = 52.0;
/// Bi-monthly rebalancing.
pub const REBALANCES_PER_YEAR: f64 = 6.0;

/// `(H, N_eff)` with `H = sum w_i^2`.
pub fn herfindahl_neff(weights: &[f64]) -> Result<(f64, f64)> {
    let h: f64 = weights.iter().map(|w| w * w).sum();
    if !(h > 0.0) {
        return Err(AgalError::invalid("Herfindahl index of a zero portfolio"));
    }
    Ok((h, 1.0 / h))
}

/// Rebalance dates, the weights set at each, and the per-asset compounding factor
/// accumulated since the previous rebalance. All vectors are indexed by
/// `asset_ids`; names outside the pool carry zero weight.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RebalanceTrail {
    pub asset_ids: Vec<String>,
    pub dates: Vec<NaiveDate>,
    pub weights: Vec<DVector<f64>>,
    /// `growth[n][i]`: value of one unit held in asset `i` from rebalance `n-1` to
    /// `n` (1 for the first rebalance).
    pub growth: Vec<DVector<f64>>,
}

impl RebalanceTrail {
    pub fn new(asset_ids: Vec<String>) -> Self {
        Self {
            asset_ids,
            dates: Vec::new(),
            weights: Vec::new(),
            growth: Vec::new(),
        }
    }

    pub fn push(&mut self, date: NaiveDate, weights: DVector<f64>, growth: DVector<f64>) {
        self.dates.push(date);
        self.weights.push(weights);
        self.growth.push(growth);
    }

    pub fn len(&self) -> usize {
        self.dates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dates.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.asset_ids.len();
        if self.weights.len() != self.dates.len() || self.growth.len() != self.dates.len() {
            return Err(AgalError::invalid("trail vectors are misaligned"));
        }
        if self.dates.windows(2).any(|d| d[0] >= d[1]) {
            return Err(AgalError::invalid("rebalance dates must increase"));
        }
        for (w, z) in self.weights.iter().zip(&self.growth) {
            if w.len() != n || z.len() != n {
                return Err(AgalError::invalid("trail vector has the wrong length"));
            }
            if z.iter().any(|x| !(*x > 0.0 && x.is_finite())) {
                return Err(AgalError::invalid("compounding factors must be positive"));
            }
        }
        Ok(())
    }
}

/// Mean L1 distance between consecutive weight vectors.
pub fn portfolio_speed(trail: &RebalanceTrail) -> Result<f64> {
    speed(&trail.weights)
}

pub fn speed(weights: &[DVector<f64>]) -> Result<f64> {
    if weights.len() < 2 {
        return Err(AgalError::invalid("speed needs at least two portfolios"));
    }
    let total: f64 = weights.windows(2).map(|p| (&p[1] - &p[0]).lp_norm(1)).sum();
    Ok(total / (weights.len() - 1) as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ZMode {
    /// `Z = sum_i w_i(n-1) z_i(n)`, the growth of the previous portfolio.
    #[default]
    PortfolioWeighted,
    /// `Z = sum_i z_i(n) / N`.
    EqualWeight,
}

/// Mean over rebalances of `sum_i |Z w_i(n) - z_i(n) w_i(n-1)|`, times
/// `per_year`.
pub fn annualized_turnover(trail: &RebalanceTrail, z_mode: ZMode, per_year: f64) -> Result<f64> {
    trail.validate()?;
    if trail.len() < 2 {
        return Err(AgalError::invalid("turnover needs at least two rebalances"));
    }
    let mut total = 0.0;
    for n in 1..trail.len() {
        let prev = &trail.weights[n - 1];
        let z = &trail.growth[n];
        let big_z = match z_mode {
            ZMode::PortfolioWeighted => prev.dot(z),
            ZMode::EqualWeight => z.mean(),
        };
        let cost: f64 = trail.weights[n]
            .iter()
            .zip(prev.iter().zip(z.iter()))
            .map(|(w, (p, zi))| (big_z * w - zi * p).abs())
            .sum();
        total += cost;
    }
    Ok(per_year * total / (trail.len() - 1) as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Annualization {
    /// `(prod (1 + r))^(P/n) - 1`.
    #[default]
    Geometric,
    /// `P * mean(r)`.
    Arithmetic,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReturnStats {
    pub total_return: f64,
    pub excess_return: f64,
    pub volatility: f64,
    /// NaN when the volatility is zero.
    pub sharpe: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkStats {
    pub rho: f64,
    pub beta: f64,
    pub alpha: f64,
}

fn annualize(r: &[f64], periods: f64, mode: Annualization) -> f64 {
    match mode {
        Annualization::Geometric => {
            let growth: f64 = r.iter().map(|x| (1.0 + x).ln()).sum();
            (growth * periods / r.len() as f64).exp() - 1.0
        }
        Annualization::Arithmetic => periods * stats::mean(r),
    }
}

pub fn return_stats(r: &[f64], rf: &[f64], periods: f64, mode: Annualization) -> Result<ReturnStats> {
    if r.len() != rf.len() {
        return Err(AgalError::invalid("return and risk-free series differ in length"));
    }
    if r.len() < 8 {
        return Err(AgalError::invalid("performance statistics need at least 8 periods"));
    }
    let total_return = annualize(r, periods, mode);
    let excess_return = total_return - annualize(rf, periods, mode);
    let volatility = stats::std_dev(r) * periods.sqrt();
    let sharpe = if volatility > 0.0 {
        excess_return / volatility
    } else {
        f64::NAN
    };
    Ok(ReturnStats {
        total_return,
        excess_return,
        volatility,
        sharpe,
    })
}

pub fn benchmark_stats(r: &[f64], rf: &[f64], bench: &[f64], periods: f64) -> Result<BenchmarkStats> {
    if r.len() != bench.len() || r.len() != rf.len() {
        return Err(AgalError::invalid("series are not aligned"));
    }
    let var_b = stats::variance(bench);
    if !(var_b > 0.0) {
        return Err(AgalError::Undefined("beta against a zero-variance benchmark".into()));
    }
    let beta = stats::covariance(r, bench) / var_b;
    let rho = stats::correlation(r, bench).unwrap_or(f64::NAN);
    let resid: Vec<f64> = (0..r.len()).map(|t| r[t] - rf[t] - beta * (bench[t] - rf[t])).collect();
    let alpha = periods * stats::mean(&resid);
    Ok(BenchmarkStats { rho, beta, alpha })
}

/// Weekly statistics against a benchmark, annualized over 52 periods.
pub fn performance_stats(r: &[f64], rf: &[f64], bench: &[f64]) -> Result<(ReturnStats, BenchmarkStats)> {
    Ok((
        return_stats(r, rf, WEEKS_PER_YEAR, Annualization::Geometric)?,
        benchmark_stats(r, rf, bench, WEEKS_PER_YEAR)?,
    ))
}

/// One row of the method comparison table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub method: String,
    pub excess_return: f64,
    pub total_return: f64,
    pub volatility: f64,
    pub sharpe: f64,
    pub n_positions: f64,
    pub n_eff: f64,
    pub turnover: f64,
    pub rho: f64,
    pub beta: f64,
    pub alpha: f64,
}

impl MetricsReport {
    pub fn from_parts(
        method: &str,
        ret: ReturnStats,
        bench: BenchmarkStats,
        trail: &RebalanceTrail,
        turnover: f64,
    ) -> Result<Self> {
        let mut n_pos = 0.0;
        let mut n_eff = 0.0;
        for w in &trail.weights {
            n_pos += w.iter().filter(|x| **x != 0.0).count() as f64;
            n_eff += herfindahl_neff(w.as_slice())?.1;
        }
        let k = trail.len().max(1) as f64;
        Ok(Self {
            method: method.to_string(),
            excess_return: ret.excess_return,
            total_return: ret.total_return,
            volatility: ret.volatility,
            sharpe: ret.sharpe,
            n_positions: n_pos / k,
            n_eff: n_eff / k,
            turnover,
            rho: bench.rho,
            beta: bench.beta,
            alpha: bench.alpha,
        })
    }
}

pub const TABLE_HEADER: [&str; 11] = [
    "method", "ER", "TR", "Vol", "SR", "NPos", "Neff", "Turnover", "rho", "beta", "alpha",
];

pub fn write_metrics_csv<W: Write>(writer: W, rows: &[MetricsReport]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(TABLE_HEADER)?;
    for r in rows {
        w.write_record([
            r.method.clone(),
            r.excess_return.to_string(),
            r.total_return.to_string(),
            r.volatility.to_string(),
            r.sharpe.to_string(),
            r.n_positions.to_string(),
            r.n_eff.to_string(),
            r.turnover.to_string(),
            r.rho.to_string(),
            r.beta.to_string(),
            r.alpha.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
