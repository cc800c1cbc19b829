//! Rolling-pool, bi-monthly rebalanced method comparison.
//!
//! At each rebalance date `t` the pool is refreshed (liquidity ranking once per
//! calendar year, coverage and tradability every time), one covariance is estimated
//! from cross-sectionally normalized pool returns over `[t - lag - lookback, t - lag)`
//! and shared by every method. Each method's target is projected onto the long-only
//! capped set; the market-cap benchmark is held as is. Holdings then drift daily
//! with returns until the next rebalance.

mod calendar;
mod report;

use chrono::{Datelike, NaiveDate};
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::{
    compute_returns, coverage, cross_sectional_normalize, is_present, liquidity_pool, MarketCapPanel, PoolConfig, PricePanel,
    ReturnsPanel,
};
use crate::error::{AgalError, Result};
use crate::metrics::{annualized_turnover, benchmark_stats, return_stats, Annualization, MetricsReport, RebalanceTrail, ZMode};
use crate::optimizer::{solve_tracking_weights, OptimizerConfig};
use crate::spectrum::{cross_validated_clean, empirical_covariance, CleaningConfig, SpectralCovariance};
use crate::targets::{named_target, TargetSpec};

pub use calendar::{compound_by_period, month_ends, rebalance_schedule, Frequency};
pub use report::{read_daily_returns_csv, write_report, DailyReturnsTable};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CovarianceMode {
    Raw,
    #[default]
    CrossValidated,
}

fn default_methods() -> Vec<TargetSpec> {
    vec![
        TargetSpec::MarketCap,
        TargetSpec::EqualWeight,
        TargetSpec::Mvp,
        TargetSpec::Mdp,
        TargetSpec::Erc,
        TargetSpec::Aap,
        TargetSpec::SparseAap { k_star_fraction: 0.05 },
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BacktestConfig {
    pub lookback_days: usize,
    pub lag_days: usize,
    /// Rebalance on every `n`-th month-end.
    pub rebalance_every_months: usize,
    pub methods: Vec<TargetSpec>,
    pub covariance: CovarianceMode,
    pub cleaning: CleaningConfig,
    pub optimizer: OptimizerConfig,
    /// Pool rules; coverage is measured over the covariance window.
    pub pool: PoolConfig,
    pub frequency: Frequency,
    pub z_mode: ZMode,
    /// Annual risk-free rate, also earned by cash.
    pub risk_free_rate: f64,
    /// Start each solve from the method's previous weights.
    pub warm_start: bool,
}

impl Default for BacktestConfig {
    fn default() -> Self {
        Self {
            lookback_days: 1000,
            lag_days: 2,
            rebalance_every_months: 2,
            methods: default_methods(),
            covariance: CovarianceMode::CrossValidated,
            cleaning: CleaningConfig::default(),
            optimizer: OptimizerConfig::default(),
            pool: PoolConfig::default(),
            frequency: Frequency::Weekly,
            z_mode: ZMode::PortfolioWeighted,
            risk_free_rate: 0.0,
            warm_start: true,
        }
    }
}

impl BacktestConfig {
    pub fn validate(&self) -> Result<()> {
        if self.lookback_days < 10 {
            return Err(AgalError::invalid("lookback_days must be at least 10"));
        }
        if self.rebalance_every_months == 0 {
            return Err(AgalError::invalid("rebalance_every_months must be positive"));
        }
        if !(self.risk_free_rate > -1.0 && self.risk_free_rate.is_finite()) {
            return Err(AgalError::invalid("risk_free_rate must exceed -100%"));
        }
        for m in &self.methods {
            m.validate()?;
        }
        self.cleaning.validate()?;
        self.optimizer.validate()?;
        self.pool.validate()?;
        if self.lookback_days < self.pool.pool_size {
            log::warn!(
                "lookback of {} days is shorter than the pool size {}; the raw covariance will be singular",
                self.lookback_days,
                self.pool.pool_size
            );
        }
        Ok(())
    }

    /// Methods to run, benchmark first.
    fn method_list(&self) -> Vec<TargetSpec> {
        let mut out = vec![TargetSpec::MarketCap];
        for m in &self.methods {
            if !out.contains(m) {
                out.push(*m);
            }
        }
        out
    }
}

/// `w_i z_i / sum_j w_j z_j`.
pub fn drift_weights(weights: &DVector<f64>, growth: &DVector<f64>) -> Result<DVector<f64>> {
    let v = weights.component_mul(growth);
    let total = v.sum();
    if !(total > 0.0) {
        return Err(AgalError::invalid("drifted portfolio has no value"));
    }
    Ok(v / total)
}

/// Hex SHA-256 of the matrix entries (column-major, little-endian).
pub fn matrix_digest(m: &DMatrix<f64>) -> String {
    let mut h = Sha256::new();
    h.update((m.nrows() as u64).to_le_bytes());
    h.update((m.ncols() as u64).to_le_bytes());
    for x in m.iter() {
        h.update(x.to_le_bytes());
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

/// Covariance of the cross-sectionally normalized returns of `assets` over
/// `[t0, t1)`.
pub fn window_covariance(
    returns: &ReturnsPanel,
    assets: &[usize],
    t0: usize,
    t1: usize,
    mode: CovarianceMode,
    cleaning: &CleaningConfig,
) -> Result<SpectralCovariance> {
    let sub = returns.select_assets(assets).select_dates(t0, t1)?;
    let norm = cross_sectional_normalize(&sub)?.panel;
    let len = norm.n_dates();
    match mode {
        CovarianceMode::Raw => empirical_covariance(&norm, 0, len),
        CovarianceMode::CrossValidated => cross_validated_clean(&norm, 0, len, cleaning),
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MethodResult {
    pub label: String,
    pub spec: TargetSpec,
    pub trail: RebalanceTrail,
    pub daily_returns: Vec<f64>,
    pub period_returns: Vec<f64>,
    pub metrics: MetricsReport,
    /// Unconstrained targets over the full universe, one per rebalance.
    pub targets: Vec<DVector<f64>>,
    /// Short positions in the unconstrained target at each rebalance.
    pub target_shorts: Vec<usize>,
    pub tracking_objective: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BacktestReport {
    pub asset_ids: Vec<String>,
    pub rebalance_dates: Vec<NaiveDate>,
    pub pools: Vec<Vec<String>>,
    pub covariance_digests: Vec<String>,
    pub daily_dates: Vec<NaiveDate>,
    pub period_dates: Vec<NaiveDate>,
    pub frequency: Frequency,
    pub methods: Vec<MethodResult>,
}

impl BacktestReport {
    pub fn method(&self, label: &str) -> Option<&MethodResult> {
        self.methods.iter().find(|m| m.label == label)
    }

    pub fn benchmark(&self) -> &MethodResult {
        &self.methods[0]
    }
}

struct Decision {
    weights: DVector<f64>,
    target: DVector<f64>,
    shorts: usize,
    objective: f64,
}

fn decide(
    spec: TargetSpec,
    cov: &SpectralCovariance,
    pool: &[usize],
    caps_t: &DVector<f64>,
    previous: Option<&DVector<f64>>,
    cfg: &BacktestConfig,
    n_universe: usize,
) -> Result<Decision> {
    let mut full = DVector::zeros(n_universe);
    if spec == TargetSpec::MarketCap {
        // the benchmark is held uncapped and never optimized
        let total = caps_t.sum();
        for (k, &i) in pool.iter().enumerate() {
            full[i] = caps_t[k] / total;
        }
        return Ok(Decision {
            target: full.clone(),
            weights: full,
            shorts: 0,
            objective: 0.0,
        });
    }
    let target = named_target(spec, cov, None, Some(caps_t))?;
    let warm = previous
        .map(|p| DVector::from_fn(pool.len(), |k, _| p[pool[k]]))
        .filter(|w| w.sum() > 0.0);
    let warm = if cfg.warm_start { warm } else { None };
    let sol = solve_tracking_weights(cov, &target.weights, &cfg.optimizer, warm.as_ref())?;
    let mut target_full = DVector::zeros(n_universe);
    for (k, &i) in pool.iter().enumerate() {
        full[i] = sol.weights[k];
        target_full[i] = target.weights[k];
    }
    Ok(Decision {
        weights: full,
        target: target_full,
        shorts: target.n_short(),
        objective: sol.objective_value,
    })
}

fn label_of(spec: &TargetSpec) -> String {
    spec.label()
}

/// Runs the protocol over the whole history of `prices`.
pub fn run_backtest(prices: &PricePanel, caps: &MarketCapPanel, cfg: &BacktestConfig) -> Result<BacktestReport> {
    cfg.validate()?;
    let returns = compute_returns(prices)?;
    let caps = caps.align_to(returns.asset_ids(), returns.dates());
    let n = returns.n_assets();
    let dates = returns.dates().to_vec();
    let n_dates = dates.len();
    let lag = cfg.lag_days;
    let lookback = cfg.lookback_days;

    let schedule = rebalance_schedule(&dates, lookback + lag, cfg.rebalance_every_months);
    if schedule.len() < 2 {
        return Err(AgalError::Coverage(format!(
            "history of {n_dates} return dates yields {} rebalance(s) after a {lookback}+{lag} day warm-up; need at least 2",
            schedule.len()
        )));
    }

    let methods = cfg.method_list();
    let labels: Vec<String> = methods.iter().map(label_of).collect();
    let mut trails: Vec<RebalanceTrail> = methods
        .iter()
        .map(|_| RebalanceTrail::new(returns.asset_ids().to_vec()))
        .collect();
    let mut shorts: Vec<Vec<usize>> = vec![Vec::new(); methods.len()];
    let mut targets: Vec<Vec<DVector<f64>>> = vec![Vec::new(); methods.len()];
    let mut objectives: Vec<Vec<f64>> = vec![Vec::new(); methods.len()];
    let mut holdings: Vec<DVector<f64>> = vec![DVector::zeros(n); methods.len()];
    let mut daily: Vec<Vec<f64>> = vec![Vec::new(); methods.len()];
    let mut pools = Vec::new();
    let mut digests = Vec::new();
    let mut growth = DVector::from_element(n, 1.0);
    let rf_daily = (1.0 + cfg.risk_free_rate).powf(1.0 / 252.0) - 1.0;

    let mut ranked: Vec<usize> = Vec::new();
    let mut ranked_year: Option<i32> = None;
    let r = returns.returns();
    let p = prices.prices();

    for (n_reb, &t) in schedule.iter().enumerate() {
        let date = dates[t];
        let (t0, t1) = (t - lag - lookback, t - lag);

        if ranked_year != Some(date.year()) {
            ranked = liquidity_pool(&returns, &caps, &cfg.pool, t1 - 1);
            ranked_year = Some(date.year());
        }
        // tradable at t: a price (returns index t is price index t + 1) and a cap
        let pool: Vec<usize> = ranked
            .iter()
            .copied()
            .filter(|&i| coverage(&returns, i, t1 - 1, lookback) >= cfg.pool.min_coverage_fraction)
            .filter(|&i| is_present(p[(i, t + 1)]) && is_present(caps.caps()[(i, t)]))
            .collect();
        if pool.len() < 2 {
            return Err(AgalError::PoolTooSmall {
                date: date.to_string(),
                size: pool.len(),
            });
        }

        let mut cleaning = cfg.cleaning.clone();
        cleaning.seed = cfg.cleaning.seed.wrapping_add(n_reb as u64);
        let cov = window_covariance(&returns, &pool, t0, t1, cfg.covariance, &cleaning)
            .map_err(|e| e.context(format!("covariance on {date}")))?;
        digests.push(matrix_digest(cov.matrix()));
        let caps_t = DVector::from_fn(pool.len(), |k, _| caps.caps()[(pool[k], t)]);

        let previous: Vec<Option<DVector<f64>>> = trails.iter().map(|tr| tr.weights.last().cloned()).collect();
        let decisions: Vec<Decision> = methods
            .par_iter()
            .enumerate()
            .map(|(m, spec)| {
                decide(*spec, &cov, &pool, &caps_t, previous[m].as_ref(), cfg, n)
                    .map_err(|e| e.context(format!("{} on {date}", labels[m])))
            })
            .collect::<Result<_>>()?;

        for (m, d) in decisions.into_iter().enumerate() {
            trails[m].push(date, d.weights.clone(), growth.clone());
            shorts[m].push(d.shorts);
            targets[m].push(d.target);
            objectives[m].push(d.objective);
            holdings[m] = d.weights;
        }
        pools.push(pool.iter().map(|&i| returns.asset_ids()[i].clone()).collect());

        // hold until the next rebalance (or the end of the data)
        growth.fill(1.0);
        let end = schedule.get(n_reb + 1).copied().unwrap_or(n_dates - 1);
        for s in (t + 1)..=end {
            let day = DVector::from_fn(n, |i, _| {
                let x = r[(i, s)];
                if is_present(x) {
                    x
                } else {
                    rf_daily
                }
            });
            growth.zip_apply(&day, |g, x| *g *= 1.0 + x);
            for m in 0..methods.len() {
                let h = &holdings[m];
                let rp = h.dot(&day);
                if !(1.0 + rp > 0.0) {
                    return Err(AgalError::invalid(format!("{} lost all value on {}", labels[m], dates[s])));
                }
                let next = h.component_mul(&day.map(|x| 1.0 + x)) / (1.0 + rp);
                let budget = next.sum();
                if (budget - 1.0).abs() > 1e-10 {
                    return Err(AgalError::invalid(format!("budget drift {budget} on {}", dates[s])));
                }
                holdings[m] = next;
                daily[m].push(rp);
            }
        }
    }

    let first = schedule[0];
    let daily_dates = dates[first + 1..].to_vec();
    let per_year = cfg.frequency.periods_per_year();
    let rf_period = (1.0 + cfg.risk_free_rate).powf(1.0 / per_year) - 1.0;
    let period: Vec<(Vec<NaiveDate>, Vec<f64>)> = daily
        .iter()
        .map(|d| compound_by_period(&daily_dates, d, cfg.frequency))
        .collect();
    let period_dates = period[0].0.clone();
    let rf = vec![rf_period; period_dates.len()];
    let bench = period[0].1.clone();
    let rebalances_per_year = 12.0 / cfg.rebalance_every_months as f64;

    let mut results = Vec::with_capacity(methods.len());
    for (m, spec) in methods.iter().enumerate() {
        let pr = period[m].1.clone();
        let ret = return_stats(&pr, &rf, per_year, Annualization::Geometric)?;
        let bs = benchmark_stats(&pr, &rf, &bench, per_year)?;
        let turnover = annualized_turnover(&trails[m], cfg.z_mode, rebalances_per_year)?;
        let metrics = MetricsReport::from_parts(&labels[m], ret, bs, &trails[m], turnover)?;
        results.push(MethodResult {
            label: labels[m].clone(),
            spec: *spec,
            trail: trails[m].clone(),
            daily_returns: daily[m].clone(),
            period_returns: pr,
            metrics,
            targets: std::mem::take(&mut targets[m]),
            target_shorts: shorts[m].clone(),
            tracking_objective: objectives[m].clone(),
        });
    }

    Ok(BacktestReport {
        asset_ids: returns.asset_ids().to_vec(),
        rebalance_dates: schedule.iter().map(|&t| dates[t]).collect(),
        pools,
        covariance_digests: digests,
        daily_dates,
        period_dates,
        frequency: cfg.frequency,
        methods: results,
    })
}
