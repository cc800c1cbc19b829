//! Bootstrap exploration of the `a` continuum and of the residual-predictor
//! projections on the eigenmodes.
//!
//! Each bootstrap draws `sample_size` assets without replacement and runs a
//! fixed-pool backtest in which every grid value of `a` (with `b = c = 0`) is one
//! method; all of them share the covariance of each rebalance date.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::backtest::{run_backtest, BacktestConfig, CovarianceMode};
use crate::data::{is_present, MarketCapPanel, PoolConfig, PricePanel, ReturnsPanel};
use crate::error::{AgalError, Result};
use crate::metrics::{herfindahl_neff, speed};
use crate::optimizer::OptimizerConfig;
use crate::spectrum::{empirical_covariance, CleaningConfig};
use crate::stats::{correlation, covariance, std_dev, variance};
use crate::targets::{residual_projection, TargetSpec};

fn default_grid() -> Vec<f64> {
    (0..=10).map(|k| k as f64 / 10.0).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExploreConfig {
    pub n_boot: usize,
    pub sample_size: usize,
    pub a_grid: Vec<f64>,
    /// Covariance window as a multiple of the sample size.
    pub window_multiple: usize,
    pub lag_days: usize,
    pub rebalance_every_months: usize,
    pub modes: Vec<CovarianceMode>,
    pub cleaning: CleaningConfig,
    pub optimizer: OptimizerConfig,
    pub seed: u64,
}

impl Default for ExploreConfig {
    fn default() -> Self {
        Self {
            n_boot: 10,
            sample_size: 250,
            a_grid: default_grid(),
            window_multiple: 2,
            lag_days: 2,
            rebalance_every_months: 2,
            modes: vec![CovarianceMode::Raw, CovarianceMode::CrossValidated],
            cleaning: CleaningConfig::default(),
            optimizer: OptimizerConfig::with_cap(1.0),
            seed: 42,
        }
    }
}

impl ExploreConfig {
    pub fn validate(&self, universe: usize) -> Result<()> {
        if self.n_boot == 0 {
            return Err(AgalError::invalid("n_boot must be positive"));
        }
        if self.sample_size < 2 || self.sample_size > universe {
            return Err(AgalError::invalid(format!(
                "sample_size {} must lie in [2, {universe}]",
                self.sample_size
            )));
        }
        if self.a_grid.is_empty() || self.a_grid.iter().any(|a| !(0.0..=1.5).contains(a)) {
            return Err(AgalError::invalid("a_grid values must lie in [0, 1.5]"));
        }
        if self.window_multiple == 0 || self.modes.is_empty() {
            return Err(AgalError::invalid("window_multiple and modes must be non-empty"));
        }
        self.cleaning.validate()?;
        self.optimizer.validate()
    }
}

/// Bootstrap-averaged characteristics for one `(mode, a)` cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub mode: CovarianceMode,
    pub a: f64,
    /// Annualized daily volatility of the long-only portfolio.
    pub volatility: f64,
    pub beta: f64,
    pub correlation: f64,
    /// Short positions of the unconstrained target, averaged over dates.
    pub shorts: f64,
    pub n_eff: f64,
    pub n_positions: f64,
    /// Mean L1 distance between consecutive targets.
    pub gamma: f64,
    /// The same distance for the long-only portfolios.
    pub gamma_long_only: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepTable {
    pub sample_size: usize,
    pub n_boot: usize,
    pub rows: Vec<SweepRow>,
}

impl SweepTable {
    pub fn column(&self, mode: CovarianceMode, f: impl Fn(&SweepRow) -> f64) -> Vec<f64> {
        self.rows.iter().filter(|r| r.mode == mode).map(f).collect()
    }

    pub fn row(&self, mode: CovarianceMode, a: f64) -> Option<&SweepRow> {
        self.rows.iter().find(|r| r.mode == mode && r.a == a)
    }
}

fn select_prices(p: &PricePanel, rows: &[usize]) -> Result<PricePanel> {
    PricePanel::new(
        rows.iter().map(|&i| p.asset_ids()[i].clone()).collect(),
        p.dates().to_vec(),
        p.prices().select_rows(rows),
    )
}

fn select_caps(c: &MarketCapPanel, rows: &[usize]) -> Result<MarketCapPanel> {
    MarketCapPanel::new(
        rows.iter().map(|&i| c.asset_ids()[i].clone()).collect(),
        c.dates().to_vec(),
        c.caps().select_rows(rows),
    )
}

/// Draws `n_boot` samples of `size` indices out of `universe`, one stream per sample.
pub fn bootstrap_samples(universe: usize, size: usize, n_boot: usize, seed: u64) -> Vec<Vec<usize>> {
    (0..n_boot)
        .map(|b| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(b as u64);
            let mut s = sample(&mut rng, universe, size).into_vec();
            s.sort_unstable();
            s
        })
        .collect()
}

struct Cell {
    volatility: f64,
    beta: f64,
    correlation: f64,
    shorts: f64,
    n_eff: f64,
    n_positions: f64,
    gamma: f64,
    gamma_long_only: f64,
}

fn run_sample(prices: &PricePanel, caps: &MarketCapPanel, mode: CovarianceMode, cfg: &ExploreConfig) -> Result<Vec<Cell>> {
    let n = prices.n_assets();
    let bt = BacktestConfig {
        lookback_days: cfg.window_multiple * cfg.sample_size,
        lag_days: cfg.lag_days,
        rebalance_every_months: cfg.rebalance_every_months,
        methods: cfg
            .a_grid
            .iter()
            .map(|&a| TargetSpec::Continuum { a, b: 0.0, c: 0.0 })
            .collect(),
        covariance: mode,
        cleaning: cfg.cleaning.clone(),
        optimizer: cfg.optimizer,
        pool: PoolConfig {
            pool_size: n,
            min_coverage_fraction: 1.0,
            ..Default::default()
        },
        ..Default::default()
    };
    let rep = run_backtest(prices, caps, &bt)?;
    let mc = &rep.benchmark().daily_returns;
    let mc_var = variance(mc);
    cfg.a_grid
        .iter()
        .map(|&a| {
            // the benchmark comes first and a = 0 is never mistaken for it: labels differ
            let spec = TargetSpec::Continuum { a, b: 0.0, c: 0.0 };
            let m = rep
                .methods
                .iter()
                .find(|m| m.spec == spec)
                .ok_or_else(|| AgalError::invalid(format!("missing result for a = {a}")))?;
            let r = &m.daily_returns;
            let k = m.trail.len() as f64;
            let mut n_eff = 0.0;
            let mut n_pos = 0.0;
            for w in &m.trail.weights {
                n_eff += herfindahl_neff(w.as_slice())?.1;
                n_pos += w.iter().filter(|x| **x != 0.0).count() as f64;
            }
            Ok(Cell {
                volatility: std_dev(r) * 252f64.sqrt(),
                beta: covariance(r, mc) / mc_var,
                correlation: correlation(r, mc).ok_or(AgalError::Undefined("zero-variance portfolio".into()))?,
                shorts: m.target_shorts.iter().sum::<usize>() as f64 / k,
                n_eff: n_eff / k,
                n_positions: n_pos / k,
                gamma: speed(&m.targets)?,
                gamma_long_only: speed(&m.trail.weights)?,
            })
        })
        .collect()
}

/// Runs every bootstrap sample for every covariance mode and averages the cells.
pub fn sweep_a(prices: &PricePanel, caps: &MarketCapPanel, cfg: &ExploreConfig) -> Result<SweepTable> {
    cfg.validate(prices.n_assets())?;
    if prices.prices().iter().any(|x| !is_present(*x)) {
        return Err(AgalError::Coverage(
            "the exploration needs uninterrupted price histories".into(),
        ));
    }
    let samples = bootstrap_samples(prices.n_assets(), cfg.sample_size, cfg.n_boot, cfg.seed);
    let jobs: Vec<(usize, CovarianceMode)> = cfg
        .modes
        .iter()
        .flat_map(|&m| (0..samples.len()).map(move |b| (b, m)))
        .collect();
    let cells: Vec<Vec<Cell>> = jobs
        .par_iter()
        .map(|&(b, mode)| {
            let p = select_prices(prices, &samples[b])?;
            let c = select_caps(caps, &samples[b])?;
            run_sample(&p, &c, mode, cfg).map_err(|e| e.context(format!("sample {b}, {mode:?} covariance")))
        })
        .collect::<Result<_>>()?;

    let mut rows = Vec::new();
    for &mode in &cfg.modes {
        let mine: Vec<&Vec<Cell>> = jobs.iter().zip(&cells).filter(|(j, _)| j.1 == mode).map(|(_, c)| c).collect();
        let k = mine.len() as f64;
        for (g, &a) in cfg.a_grid.iter().enumerate() {
            let avg = |f: &dyn Fn(&Cell) -> f64| mine.iter().map(|c| f(&c[g])).sum::<f64>() / k;
            rows.push(SweepRow {
                mode,
                a,
                volatility: avg(&|c| c.volatility),
                beta: avg(&|c| c.beta),
                correlation: avg(&|c| c.correlation),
                shorts: avg(&|c| c.shorts),
                n_eff: avg(&|c| c.n_eff),
                n_positions: avg(&|c| c.n_positions),
                gamma: avg(&|c| c.gamma),
                gamma_long_only: avg(&|c| c.gamma_long_only),
            });
        }
    }
    Ok(SweepTable {
        sample_size: cfg.sample_size,
        n_boot: cfg.n_boot,
        rows,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProjectionConfig {
    pub n_boot: usize,
    pub sample_size: usize,
    pub seed: u64,
}

impl Default for ProjectionConfig {
    fn default() -> Self {
        Self {
            n_boot: 300,
            sample_size: 500,
            seed: 42,
        }
    }
}

/// Averaged `(lambda_k, P_res(k))` pairs, indexed from the top mode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectionStudy {
    pub eigenvalues: Vec<f64>,
    pub projections: Vec<f64>,
    /// `1 / N`.
    pub null_level: f64,
    /// `(1 + sqrt 2) / N`.
    pub band: f64,
    /// One-based index of the last mode whose averaged projection reaches the band.
    pub k_star: usize,
    pub samples_used: usize,
    pub samples_skipped: usize,
}

pub fn projection_band(n: usize) -> f64 {
    (1.0 + 2f64.sqrt()) / n as f64
}

/// Projections of the residual uniform predictor on the full-history covariance of
/// each bootstrap sample.
pub fn projection_study(returns: &ReturnsPanel, cfg: &ProjectionConfig) -> Result<ProjectionStudy> {
    let n = cfg.sample_size;
    if cfg.n_boot == 0 || n < 3 || n > returns.n_assets() {
        return Err(AgalError::invalid(format!(
            "need n_boot > 0 and 3 <= sample_size <= {}",
            returns.n_assets()
        )));
    }
    if returns.returns().iter().any(|x| !is_present(*x)) {
        return Err(AgalError::Coverage("the projection study needs complete returns".into()));
    }
    let samples = bootstrap_samples(returns.n_assets(), n, cfg.n_boot, cfg.seed);
    let t = returns.n_dates();
    let results: Vec<Option<(DVector<f64>, Vec<f64>)>> = samples
        .par_iter()
        .map(|s| {
            let c = empirical_covariance(&returns.select_assets(s), 0, t)?;
            match residual_projection(&c) {
                Ok(p) => Ok(Some((c.eigenvalues().clone(), p))),
                Err(AgalError::DegenerateResidual) => Ok(None),
                Err(e) => Err(e),
            }
        })
        .collect::<Result<_>>()?;
    let used: Vec<&(DVector<f64>, Vec<f64>)> = results.iter().flatten().collect();
    if used.is_empty() {
        return Err(AgalError::DegenerateResidual);
    }
    let k = used.len() as f64;
    let mut lam = vec![0.0; n];
    let mut proj = vec![0.0; n];
    for (l, p) in &used {
        for j in 0..n {
            lam[j] += l[j] / k;
            proj[j] += p[j] / k;
        }
    }
    let band = projection_band(n);
    let k_star = proj.iter().rposition(|p| *p >= band).map_or(0, |j| j + 1);
    Ok(ProjectionStudy {
        eigenvalues: lam,
        projections: proj,
        null_level: 1.0 / n as f64,
        band,
        k_star,
        samples_used: used.len(),
        samples_skipped: results.len() - used.len(),
    })
}

/// Writes one sweep statistic per file: rows are `a`, columns are covariance modes.
pub fn write_sweep_csv<W: Write>(writer: W, table: &SweepTable, columns: &[(&str, fn(&SweepRow) -> f64)]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let modes: Vec<CovarianceMode> = {
        let mut m: Vec<CovarianceMode> = Vec::new();
        for r in &table.rows {
            if !m.contains(&r.mode) {
                m.push(r.mode);
            }
        }
        m
    };
    let mut header = vec!["a".to_string()];
    for m in &modes {
        for (name, _) in columns {
            header.push(format!("{name}_{}", mode_name(*m)));
        }
    }
    w.write_record(&header)?;
    let grid: Vec<f64> = table.rows.iter().filter(|r| r.mode == modes[0]).map(|r| r.a).collect();
    for a in grid {
        let mut rec = vec![a.to_string()];
        for m in &modes {
            let row = table.row(*m, a).ok_or_else(|| AgalError::invalid("ragged sweep table"))?;
            rec.extend(columns.iter().map(|(_, f)| f(row).to_string()));
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn mode_name(m: CovarianceMode) -> &'static str {
    match m {
        CovarianceMode::Raw => "raw",
        CovarianceMode::CrossValidated => "clean",
    }
}

pub fn write_projection_csv<W: Write>(writer: W, study: &ProjectionStudy) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["k", "lambda", "p_res", "null_level", "band"])?;
    for k in 0..study.eigenvalues.len() {
        w.write_record([
            (k + 1).to_string(),
            study.eigenvalues[k].to_string(),
            study.projections[k].to_string(),
            study.null_level.to_string(),
            study.band.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Returns without structure: each column is i.i.d. Gaussian noise.
#[doc(hidden)]
pub fn white_noise_returns(n: usize, t: usize, seed: u64) -> Result<ReturnsPanel> {
    use rand_distr::{Distribution, StandardNormal};
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let m = DMatrix::from_fn(n, t, |_, _| {
        0.01 * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng)
    });
    let dates = crate::data::synth::business_days(chrono::NaiveDate::from_ymd_opt(2000, 1, 3).unwrap(), t);
    ReturnsPanel::new((0..n).map(|i| format!("W{i:04}")).collect(), dates, m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::generate_synthetic_universe;

    #[test]
    fn band_value() {
        assert!((projection_band(500) - 4.828427e-3).abs() < 1e-8);
    }

    #[test]
    fn samples_are_without_replacement_and_reproducible() {
        let a = bootstrap_samples(50, 20, 3, 9);
        assert_eq!(a, bootstrap_samples(50, 20, 3, 9));
        for s in &a {
            let mut d = s.clone();
            d.dedup();
            assert_eq!(d.len(), 20);
        }
        assert_ne!(a[0], a[1]);
    }

    #[test]
    fn white_noise_projections_sit_at_the_null_level() {
        let r = white_noise_returns(40, 2000, 5).unwrap();
        let s = projection_study(
            &r,
            &ProjectionConfig {
                n_boot: 30,
                sample_size: 30,
                seed: 1,
            },
        )
        .unwrap();
        let tail = &s.projections[1..];
        let avg = tail.iter().sum::<f64>() / tail.len() as f64;
        // the residual is a unit vector orthogonal to u_1: the rest sums to exactly 1
        assert!((avg - 1.0 / 29.0).abs() < 1e-12);
        assert!(tail.iter().all(|p| *p < 2.5 / 30.0), "{tail:?}");
    }

    #[test]
    fn small_sweep_shapes() {
        let u = generate_synthetic_universe(24, 420, 3, 3).unwrap();
        let cfg = ExploreConfig {
            n_boot: 2,
            sample_size: 12,
            window_multiple: 5,
            a_grid: vec![0.0, 0.5, 1.0],
            modes: vec![CovarianceMode::Raw],
            ..Default::default()
        };
        let t = sweep_a(&u.prices, &u.caps, &cfg).unwrap();
        assert_eq!(t.rows.len(), 3);
        let r0 = t.row(CovarianceMode::Raw, 0.0).unwrap();
        assert!((r0.n_eff - 12.0).abs() < 1e-9);
        assert_eq!(r0.shorts, 0.0);
        assert_eq!(r0.gamma, 0.0);
        assert_eq!(t, sweep_a(&u.prices, &u.caps, &cfg).unwrap());
    }
}
