//! Every study end to end on a synthetic universe.
//!
//! The quick profile finishes in seconds and is what the determinism test runs;
//! `--full` runs at full scale and is far slower.

use std::path::Path;

use agal_core::backtest::{BacktestConfig, CovarianceMode};
use agal_core::data::PoolConfig;
use agal_core::spectrum::CleaningConfig;
use anyhow::{Context, Result};
use serde_json::json;

use crate::commands::{self, BacktestFile, DataSection, Done};
use crate::{
    AlgorithmName, CovArgs, CovMethod, ExploreArgs, FactorsArgs, OptimizeArgs, ReproArgs, SpecName, SynthArgs, TargetArgs,
};

struct Profile {
    assets: usize,
    days: usize,
    cov_days: usize,
    folds: usize,
    pool_size: usize,
    lookback: usize,
    cap: f64,
    n_boot: usize,
    sample_size: usize,
    projection_boots: usize,
    projection_size: usize,
}

const QUICK: Profile = Profile {
    assets: 120,
    days: 1300,
    cov_days: 300,
    folds: 10,
    pool_size: 100,
    lookback: 250,
    cap: 0.05,
    n_boot: 2,
    sample_size: 40,
    projection_boots: 5,
    projection_size: 60,
};

const FULL: Profile = Profile {
    assets: 1000,
    days: 3500,
    cov_days: 1000,
    folds: 100,
    pool_size: 500,
    lookback: 1000,
    cap: 0.03,
    n_boot: 10,
    sample_size: 250,
    projection_boots: 300,
    projection_size: 500,
};

fn dir(out: &Path, name: &str) -> Result<std::path::PathBuf> {
    let d = out.join(name);
    std::fs::create_dir_all(&d).with_context(|| format!("cannot create {}", d.display()))?;
    Ok(d)
}

pub fn repro(a: &ReproArgs, out: &Path, seed: Option<u64>) -> Result<Done> {
    let p = if a.full { FULL } else { QUICK };
    let seed = seed.unwrap_or(commands::DEFAULT_SEED);

    let data = dir(out, "data")?;
    log::info!("synthetic universe: {} assets, {} days", p.assets, p.days);
    commands::synth(
        &SynthArgs {
            assets: p.assets,
            days: p.days,
            factors: 10,
            low_vol_premium: 0.05,
        },
        &data,
        Some(seed),
    )?;
    let prices = data.join("prices.csv");
    let returns = data.join("returns.csv");

    let cov = dir(out, "cov")?;
    let dates = crate::files::read_returns(&returns)?.dates().to_vec();
    commands::cov(
        &CovArgs {
            input: returns.clone(),
            start: Some(dates[dates.len() - p.cov_days]),
            end: None,
            method: CovMethod::CrossValidated,
            normalize: true,
            folds: p.folds,
            holdout: 0.10,
        },
        &cov,
        Some(seed),
    )?;

    let target = dir(out, "target")?;
    commands::target(
        &TargetArgs {
            cov: cov.join("covariance.csv"),
            spec: SpecName::Aap,
            a: 0.5,
            b: 0.0,
            c: 0.0,
            k_star_fraction: 0.05,
            caps: None,
        },
        &target,
    )?;

    let optimize = dir(out, "optimize")?;
    commands::optimize(
        &OptimizeArgs {
            cov: cov.join("covariance.csv"),
            target: target.join("target.csv"),
            cap: p.cap,
            algorithm: AlgorithmName::ActiveSet,
            tolerance: 1e-8,
            max_iterations: 50_000,
        },
        &optimize,
    )?;

    let backtest = dir(out, "backtest")?;
    log::info!("backtest");
    let mut bt = BacktestConfig {
        lookback_days: p.lookback,
        covariance: CovarianceMode::CrossValidated,
        cleaning: CleaningConfig {
            n_folds: p.folds,
            seed,
            ..CleaningConfig::default()
        },
        pool: PoolConfig {
            pool_size: p.pool_size,
            ..PoolConfig::default()
        },
        ..BacktestConfig::default()
    };
    bt.optimizer.position_cap = p.cap;
    let file = BacktestFile {
        data: DataSection {
            prices: Some("../data/prices.csv".into()),
            ..DataSection::default()
        },
        backtest: bt,
    };
    std::fs::write(backtest.join("config.toml"), toml::to_string(&file)?)?;
    commands::run_backtest_file(&file, &backtest, &backtest)?;

    let factors = dir(out, "factors")?;
    commands::factors(
        &FactorsArgs {
            returns: returns.clone(),
            backtest: backtest.clone(),
            zone: "synthetic".into(),
        },
        &factors,
    )?;

    let explore = dir(out, "explore")?;
    log::info!("exploration");
    commands::explore(
        &ExploreArgs {
            input: prices,
            n_boot: p.n_boot,
            sample_size: p.sample_size,
            a_grid: (0..=10).map(|k| k as f64 / 10.0).collect(),
            window_multiple: 2,
            folds: p.folds,
            raw_only: false,
            projection_boots: p.projection_boots,
            projection_size: p.projection_size,
        },
        &explore,
        Some(seed),
    )?;

    Ok(Done {
        config: json!({
            "profile": if a.full { "full" } else { "quick" },
            "assets": p.assets,
            "days": p.days,
            "folds": p.folds,
            "pool_size": p.pool_size,
            "lookback_days": p.lookback,
            "position_cap": p.cap,
            "n_boot": p.n_boot,
            "sample_size": p.sample_size,
        }),
        seeds: vec![seed],
        inputs: vec![],
    })
}
