mod common;

use agal_core::backtest::{drift_weights, run_backtest, BacktestConfig, CovarianceMode};
use agal_core::data::{generate_synthetic_universe, MarketCapPanel, PoolConfig, PricePanel};
use agal_core::optimizer::OptimizerConfig;
use agal_core::targets::TargetSpec;

fn config() -> BacktestConfig {
    BacktestConfig {
        lookback_days: 120,
        covariance: CovarianceMode::Raw,
        optimizer: OptimizerConfig::with_cap(0.2),
        pool: PoolConfig {
            pool_size: 1000,
            ..Default::default()
        },
        methods: vec![TargetSpec::EqualWeight, TargetSpec::Mvp, TargetSpec::Aap, TargetSpec::Erc],
        ..Default::default()
    }
}

fn universe() -> (PricePanel, MarketCapPanel) {
    let u = generate_synthetic_universe(20, 600, 3, 11).unwrap();
    (u.prices, u.caps)
}

#[test]
fn fixed_pool_market_cap_is_buy_and_hold() {
    let (prices, caps) = universe();
    let rep = run_backtest(&prices, &caps, &config()).unwrap();
    let mc = rep.benchmark();
    assert_eq!(mc.label, "MC");
    assert!(mc.metrics.turnover.abs() < 1e-12, "turnover {}", mc.metrics.turnover);

    // index return from total capitalization
    let c = caps.caps();
    let first = prices.dates().iter().position(|d| *d == rep.daily_dates[0]).unwrap();
    for (k, r) in mc.daily_returns.iter().enumerate() {
        let s = first + k;
        let index = c.column(s).sum() / c.column(s - 1).sum() - 1.0;
        assert!((r - index).abs() < 1e-13, "day {k}: {r} vs {index}");
    }
}

#[test]
fn compounded_daily_returns_match_dollar_drift() {
    let (prices, caps) = universe();
    let rep = run_backtest(&prices, &caps, &config()).unwrap();
    for m in &rep.methods {
        let tr = &m.trail;
        let mut day = 0;
        for n in 0..tr.len() - 1 {
            let z = &tr.growth[n + 1];
            let value: f64 = tr.weights[n].iter().zip(z.iter()).map(|(w, g)| w * g).sum();
            let oracle = common::dollar_drift(tr.weights[n].as_slice(), z.as_slice());
            let drifted = drift_weights(&tr.weights[n], z).unwrap();
            for (a, b) in drifted.iter().zip(&oracle) {
                assert!((a - b).abs() < 1e-14);
            }
            let until = rep.daily_dates.iter().position(|d| *d == tr.dates[n + 1]).unwrap();
            let compounded: f64 = m.daily_returns[day..=until].iter().map(|r| 1.0 + r).product();
            assert!((compounded - value).abs() < 1e-12 * value, "{} period {n}", m.label);
            day = until + 1;
        }
    }
}

#[test]
fn weights_are_feasible_and_budgeted() {
    let (prices, caps) = universe();
    let cfg = config();
    let rep = run_backtest(&prices, &caps, &cfg).unwrap();
    for m in rep.methods.iter().skip(1) {
        for w in &m.trail.weights {
            assert!((w.sum() - 1.0).abs() < 1e-10);
            assert!(
                w.iter().all(|x| *x >= 0.0 && *x <= cfg.optimizer.position_cap + 1e-12),
                "{}",
                m.label
            );
        }
    }
}

#[test]
fn decisions_ignore_data_after_the_lagged_window() {
    let (prices, caps) = universe();
    let cfg = config();
    let base = run_backtest(&prices, &caps, &cfg).unwrap();
    let k = 1;
    let t = prices.dates().iter().position(|d| *d == base.rebalance_dates[k]).unwrap();
    // returns index t - 2 onwards; price index j carries return j - 1
    let mut p = prices.prices().clone();
    for j in (t - 1)..p.ncols() {
        for i in 0..p.nrows() {
            p[(i, j)] *= 1.0 + 0.05 * ((i * 7 + j) % 5) as f64;
        }
    }
    let shocked = PricePanel::new(prices.asset_ids().to_vec(), prices.dates().to_vec(), p).unwrap();
    let other = run_backtest(&shocked, &caps, &cfg).unwrap();
    assert_eq!(base.covariance_digests[..=k], other.covariance_digests[..=k]);
    assert_ne!(base.covariance_digests[k + 1], other.covariance_digests[k + 1]);
    for (a, b) in base.methods.iter().zip(&other.methods) {
        assert_eq!(a.trail.weights[..=k], b.trail.weights[..=k], "{}", a.label);
    }
}

#[test]
fn shared_covariance_and_deterministic() {
    let (prices, caps) = universe();
    let mut cfg = config();
    cfg.covariance = CovarianceMode::CrossValidated;
    cfg.cleaning.n_folds = 8;
    let a = run_backtest(&prices, &caps, &cfg).unwrap();
    let b = run_backtest(&prices, &caps, &cfg).unwrap();
    assert_eq!(a.covariance_digests, b.covariance_digests);
    for (x, y) in a.methods.iter().zip(&b.methods) {
        assert_eq!(x.daily_returns, y.daily_returns);
    }
    assert_eq!(a.pools.len(), a.rebalance_dates.len());
    assert!(a.pools.iter().all(|p| p.len() == 20));
}

#[test]
fn missing_data_shrinks_the_pool() {
    let (prices, caps) = universe();
    let mut p = prices.prices().clone();
    // asset 3 disappears for good a third of the way in
    for j in 200..p.ncols() {
        p[(3, j)] = f64::NAN;
    }
    let prices = PricePanel::new(prices.asset_ids().to_vec(), prices.dates().to_vec(), p).unwrap();
    let rep = run_backtest(&prices, &caps, &config()).unwrap();
    let last = rep.pools.last().unwrap();
    assert!(!last.contains(&"S0003".to_string()));
    for m in &rep.methods {
        assert_eq!(m.trail.weights.last().unwrap()[3], 0.0);
        assert!(m.daily_returns.iter().all(|r| r.is_finite()));
    }
}
