use std::io::Write;
use std::path::{Path, PathBuf};

use agal_core::backtest::{read_daily_returns_csv, run_backtest, write_report, BacktestConfig, CovarianceMode};
use agal_core::data::io::{read_caps_csv, write_long_csv, write_returns_csv};
use agal_core::data::{compute_returns, cross_sectional_normalize, synth::generate, SyntheticConfig};
use agal_core::explore::{
    mode_name, projection_study, sweep_a, write_projection_csv, write_sweep_csv, ExploreConfig, ProjectionConfig, SweepRow,
};
use agal_core::factors::{
    build_low_risk_factor, exposure_table, write_exposure_csv, FactorConfig, FactorKind, FactorSeries, MethodSeries,
};
use agal_core::optimizer::{solve_tracking_weights, Algorithm, OptimizerConfig};
use agal_core::spectrum::{cross_validated_clean, empirical_covariance, CleaningConfig};
use agal_core::targets::{named_target, TargetSpec};
use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::files::{
    create, open, read_covariance, read_prices, read_returns, read_vector, write_json, write_matrix, write_spectrum, write_vector,
};
use crate::manifest::Recorder;
use crate::{
    AlgorithmName, BacktestArgs, Cli, Command, CovArgs, CovMethod, DataCommand, ExploreArgs, FactorsArgs, IngestArgs,
    OptimizeArgs, SpecName, SynthArgs, TargetArgs,
};

pub const DEFAULT_SEED: u64 = 42;

/// What a command read and how it was configured, for the manifest.
pub struct Done {
    pub config: serde_json::Value,
    pub seeds: Vec<u64>,
    pub inputs: Vec<PathBuf>,
}

pub fn run(cli: &Cli) -> Result<()> {
    let out = &cli.out;
    std::fs::create_dir_all(out).with_context(|| format!("cannot create {}", out.display()))?;
    let name = match &cli.command {
        Command::Data(DataCommand::Synth(_)) => "data synth",
        Command::Data(DataCommand::Ingest(_)) => "data ingest",
        Command::Cov(_) => "cov",
        Command::Target(_) => "target",
        Command::Optimize(_) => "optimize",
        Command::Backtest(_) => "backtest",
        Command::Explore(_) => "explore",
        Command::Factors(_) => "factors",
        Command::Repro(_) => "repro",
    };
    let rec = Recorder::start(name);
    let done = match &cli.command {
        Command::Data(DataCommand::Synth(a)) => synth(a, out, cli.seed)?,
        Command::Data(DataCommand::Ingest(a)) => ingest(a, out)?,
        Command::Cov(a) => cov(a, out, cli.seed)?,
        Command::Target(a) => target(a, out)?,
        Command::Optimize(a) => optimize(a, out)?,
        Command::Backtest(a) => backtest(a, out, cli.seed)?,
        Command::Explore(a) => explore(a, out, cli.seed)?,
        Command::Factors(a) => factors(a, out)?,
        Command::Repro(a) => crate::repro::repro(a, out, cli.seed)?,
    };
    rec.finish(out, done.config, done.seeds, &done.inputs)
}

pub fn synth(a: &SynthArgs, out: &Path, seed: Option<u64>) -> Result<Done> {
    let cfg = SyntheticConfig {
        n_assets: a.assets,
        n_days: a.days,
        n_factors: a.factors,
        low_vol_premium: a.low_vol_premium,
        seed: seed.unwrap_or(DEFAULT_SEED),
        ..SyntheticConfig::default()
    };
    let u = generate(&cfg)?;
    let mut f = create(&out.join("prices.csv"))?;
    write_long_csv(&mut f, &u.prices, Some(&u.caps))?;
    f.flush()?;
    let mut f = create(&out.join("returns.csv"))?;
    write_returns_csv(&mut f, &compute_returns(&u.prices)?)?;
    f.flush()?;
    Ok(Done {
        config: serde_json::to_value(&cfg)?,
        seeds: vec![cfg.seed],
        inputs: vec![],
    })
}

pub fn ingest(a: &IngestArgs, out: &Path) -> Result<Done> {
    let (prices, mut caps) = read_prices(&a.prices)?;
    let mut inputs = vec![a.prices.clone()];
    if let Some(path) = &a.caps {
        let c = read_caps_csv(open(path)?).with_context(|| format!("reading caps from {}", path.display()))?;
        caps = Some(c.align_to(prices.asset_ids(), prices.dates()));
        inputs.push(path.clone());
    }
    let returns = compute_returns(&prices)?;
    let mut f = create(&out.join("prices.csv"))?;
    write_long_csv(&mut f, &prices, caps.as_ref())?;
    f.flush()?;
    let mut f = create(&out.join("returns.csv"))?;
    write_returns_csv(&mut f, &returns)?;
    f.flush()?;
    let present = returns.returns().iter().filter(|x| x.is_finite()).count();
    write_json(
        &out.join("summary.json"),
        &json!({
            "n_assets": prices.n_assets(),
            "n_dates": prices.n_dates(),
            "first_date": prices.dates().first(),
            "last_date": prices.dates().last(),
            "return_coverage": present as f64 / returns.returns().len().max(1) as f64,
            "has_caps": caps.is_some(),
        }),
    )?;
    Ok(Done {
        config: json!({}),
        seeds: vec![],
        inputs,
    })
}

pub fn cov(a: &CovArgs, out: &Path, seed: Option<u64>) -> Result<Done> {
    let returns = read_returns(&a.input)?;
    let dates = returns.dates();
    let t0 = match a.start {
        Some(d) => dates.iter().position(|x| *x >= d).context("--start is after the last date")?,
        None => 0,
    };
    let t1 = match a.end {
        Some(d) => {
            dates
                .iter()
                .rposition(|x| *x <= d)
                .context("--end is before the first date")?
                + 1
        }
        None => dates.len(),
    };
    if t1 <= t0 {
        bail!("empty date window");
    }
    let mut window = returns.select_dates(t0, t1)?;
    if a.normalize {
        window = cross_sectional_normalize(&window)?.panel;
    }
    let len = window.n_dates();
    let cleaning = CleaningConfig {
        n_folds: a.folds,
        holdout_fraction: a.holdout,
        seed: seed.unwrap_or(CleaningConfig::default().seed),
        ..CleaningConfig::default()
    };
    let c = match a.method {
        CovMethod::Raw => empirical_covariance(&window, 0, len)?,
        CovMethod::CrossValidated => cross_validated_clean(&window, 0, len, &cleaning)?,
    };
    write_matrix(&out.join("covariance.csv"), returns.asset_ids(), c.matrix())?;
    write_spectrum(&out.join("spectrum.csv"), &c)?;
    Ok(Done {
        config: json!({
            "method": format!("{:?}", a.method),
            "start": dates[t0],
            "end": dates[t1 - 1],
            "normalize": a.normalize,
            "cleaning": cleaning,
        }),
        seeds: vec![cleaning.seed],
        inputs: vec![a.input.clone()],
    })
}

fn spec_of(a: &TargetArgs) -> TargetSpec {
    match a.spec {
        SpecName::Mc => TargetSpec::MarketCap,
        SpecName::EqualWeight => TargetSpec::EqualWeight,
        SpecName::EqualVol => TargetSpec::EqualVol,
        SpecName::Mvp => TargetSpec::Mvp,
        SpecName::Mdp => TargetSpec::Mdp,
        SpecName::Erc => TargetSpec::Erc,
        SpecName::Aap => TargetSpec::Aap,
        SpecName::SparseAap => TargetSpec::SparseAap {
            k_star_fraction: a.k_star_fraction,
        },
        SpecName::Continuum => TargetSpec::Continuum { a: a.a, b: a.b, c: a.c },
    }
}

#[derive(Serialize)]
struct TargetReport<'a> {
    spec: TargetSpec,
    label: String,
    omega: f64,
    n_short: usize,
    asset_ids: &'a [String],
    risk_contributions: &'a [f64],
}

pub fn target(a: &TargetArgs, out: &Path) -> Result<Done> {
    let (ids, c) = read_covariance(&a.cov)?;
    let mut inputs = vec![a.cov.clone()];
    let caps = match &a.caps {
        Some(p) => {
            inputs.push(p.clone());
            Some(read_vector(p, &ids)?)
        }
        None => None,
    };
    let spec = spec_of(a);
    let t = named_target(spec, &c, None, caps.as_ref())?;
    write_vector(&out.join("target.csv"), "weight", &ids, t.weights.as_slice())?;
    write_json(
        &out.join("target.json"),
        &TargetReport {
            spec,
            label: spec.label(),
            omega: t.omega,
            n_short: t.n_short(),
            asset_ids: &ids,
            risk_contributions: &t.risk_contributions,
        },
    )?;
    Ok(Done {
        config: serde_json::to_value(spec)?,
        seeds: vec![],
        inputs,
    })
}

pub fn optimize(a: &OptimizeArgs, out: &Path) -> Result<Done> {
    let (ids, c) = read_covariance(&a.cov)?;
    let wt = read_vector(&a.target, &ids)?;
    let cfg = OptimizerConfig {
        position_cap: a.cap,
        kkt_tolerance: a.tolerance,
        max_iterations: a.max_iterations,
        algorithm: match a.algorithm {
            AlgorithmName::ActiveSet => Algorithm::ActiveSet,
            AlgorithmName::ProjectedGradient => Algorithm::ProjectedGradient,
        },
    };
    let sol = solve_tracking_weights(&c, &wt, &cfg, None)?;
    write_vector(&out.join("weights.csv"), "weight", &ids, &sol.weights)?;
    write_json(&out.join("solution.json"), &json!({ "asset_ids": ids, "solution": sol }))?;
    Ok(Done {
        config: serde_json::to_value(cfg)?,
        seeds: vec![],
        inputs: vec![a.cov.clone(), a.target.clone()],
    })
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSection {
    /// Long CSV with prices and market caps.
    pub prices: Option<PathBuf>,
    /// Optional separate long cap file.
    pub caps: Option<PathBuf>,
    pub synthetic: Option<SyntheticConfig>,
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BacktestFile {
    pub data: DataSection,
    pub backtest: BacktestConfig,
}

pub fn run_backtest_file(file: &BacktestFile, base: &Path, out: &Path) -> Result<Vec<PathBuf>> {
    let mut inputs = Vec::new();
    let (prices, caps) = match (&file.data.prices, &file.data.synthetic) {
        (Some(p), None) => {
            let path = base.join(p);
            let (prices, caps) = read_prices(&path)?;
            inputs.push(path);
            let caps = match &file.data.caps {
                Some(c) => {
                    let path = base.join(c);
                    let caps = read_caps_csv(open(&path)?).with_context(|| format!("reading caps from {}", path.display()))?;
                    inputs.push(path);
                    caps.align_to(prices.asset_ids(), prices.dates())
                }
                None => caps.context("the price file has no market caps and no caps file is given")?,
            };
            (prices, caps)
        }
        (None, Some(s)) => {
            let u = generate(s)?;
            (u.prices, u.caps)
        }
        _ => bail!("[data] needs exactly one of `prices` or `synthetic`"),
    };
    let report = run_backtest(&prices, &caps, &file.backtest)?;
    write_report(&report, out)?;
    let rows: Vec<_> = report.methods.iter().map(|m| &m.metrics).collect();
    write_json(&out.join("metrics.json"), &rows)?;
    Ok(inputs)
}

pub fn backtest(a: &BacktestArgs, out: &Path, seed: Option<u64>) -> Result<Done> {
    let text = std::fs::read_to_string(&a.config).with_context(|| format!("cannot read {}", a.config.display()))?;
    let mut file: BacktestFile = toml::from_str(&text).with_context(|| format!("parsing {}", a.config.display()))?;
    if let Some(s) = seed {
        file.backtest.cleaning.seed = s;
        if let Some(syn) = &mut file.data.synthetic {
            syn.seed = s;
        }
    }
    let base = a.config.parent().unwrap_or(Path::new("."));
    let mut inputs = vec![a.config.clone()];
    inputs.extend(run_backtest_file(&file, base, out)?);
    let mut seeds = vec![file.backtest.cleaning.seed];
    if let Some(s) = &file.data.synthetic {
        seeds.push(s.seed);
    }
    Ok(Done {
        config: serde_json::to_value(&file)?,
        seeds,
        inputs,
    })
}

type Column = (&'static str, fn(&SweepRow) -> f64);

const FIGURES: [(&str, &[Column]); 4] = [
    (
        "fig1_vol_beta_corr.csv",
        &[("vol", |r| r.volatility), ("beta", |r| r.beta), ("corr", |r| r.correlation)],
    ),
    ("fig2_shorts.csv", &[("shorts", |r| r.shorts)]),
    ("fig3_neff.csv", &[("neff", |r| r.n_eff), ("npos", |r| r.n_positions)]),
    (
        "fig4_gamma.csv",
        &[("gamma", |r| r.gamma), ("gamma_long_only", |r| r.gamma_long_only)],
    ),
];

pub fn explore(a: &ExploreArgs, out: &Path, seed: Option<u64>) -> Result<Done> {
    let (prices, caps) = read_prices(&a.input)?;
    let caps = caps.context("the exploration needs market caps in the input file")?;
    let seed = seed.unwrap_or(DEFAULT_SEED);
    let cfg = ExploreConfig {
        n_boot: a.n_boot,
        sample_size: a.sample_size,
        a_grid: a.a_grid.clone(),
        window_multiple: a.window_multiple,
        modes: if a.raw_only {
            vec![CovarianceMode::Raw]
        } else {
            vec![CovarianceMode::Raw, CovarianceMode::CrossValidated]
        },
        cleaning: CleaningConfig {
            n_folds: a.folds,
            seed,
            ..CleaningConfig::default()
        },
        seed,
        ..ExploreConfig::default()
    };
    let table = sweep_a(&prices, &caps, &cfg)?;
    for (name, columns) in FIGURES {
        let mut f = create(&out.join(name))?;
        write_sweep_csv(&mut f, &table, columns)?;
        f.flush()?;
    }
    let pcfg = ProjectionConfig {
        n_boot: a.projection_boots,
        sample_size: a.projection_size,
        seed,
    };
    let study = projection_study(&compute_returns(&prices)?, &pcfg)?;
    let mut f = create(&out.join("fig5_projection.csv"))?;
    write_projection_csv(&mut f, &study)?;
    f.flush()?;
    write_json(
        &out.join("explore.json"),
        &json!({
            "modes": cfg.modes.iter().map(|m| mode_name(*m)).collect::<Vec<_>>(),
            "sweep": table,
            "projection": {
                "k_star": study.k_star,
                "band": study.band,
                "null_level": study.null_level,
                "samples_used": study.samples_used,
                "samples_skipped": study.samples_skipped,
            },
        }),
    )?;
    Ok(Done {
        config: json!({ "sweep": cfg, "projection": pcfg }),
        seeds: vec![seed],
        inputs: vec![a.input.clone()],
    })
}

fn write_factor_csv(path: &Path, f: &FactorSeries) -> Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    w.write_record(["date", "return", "raw", "hedge_beta", "scale", "realized_vol"])?;
    for k in 0..f.dates.len() {
        w.write_record([
            f.dates[k].to_string(),
            f.returns[k].to_string(),
            f.raw[k].to_string(),
            f.hedge_beta[k].to_string(),
            f.scale[k].to_string(),
            f.realized_vol[k].to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn factors(a: &FactorsArgs, out: &Path) -> Result<Done> {
    let returns = read_returns(&a.returns)?;
    let daily_path = a.backtest.join("daily_returns.csv");
    let table = read_daily_returns_csv(open(&daily_path)?).with_context(|| format!("reading {}", daily_path.display()))?;
    let dates = returns.dates();
    let on_axis = |series: &[f64]| -> Result<Vec<f64>> {
        let mut v = vec![f64::NAN; dates.len()];
        for (d, x) in table.dates.iter().zip(series) {
            let t = returns
                .date_index(*d)
                .with_context(|| format!("report date {d} is not in the returns file"))?;
            v[t] = *x;
        }
        Ok(v)
    };
    let mc = on_axis(table.series("MC").context("the report has no MC column")?)?;
    let cfg = FactorConfig::default();
    let lv = build_low_risk_factor(&returns, &mc, FactorKind::LowVol, &cfg)?;
    let lb = build_low_risk_factor(&returns, &mc, FactorKind::LowBeta, &cfg)?;
    let methods = table
        .labels
        .iter()
        .zip(&table.series)
        .map(|(l, s)| {
            Ok(MethodSeries {
                label: l.clone(),
                returns: on_axis(s)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let rows = exposure_table(dates, &methods, &mc, &lv, &lb, &cfg)?;
    let mut f = create(&out.join("exposures.csv"))?;
    write_exposure_csv(&mut f, &a.zone, &rows)?;
    f.flush()?;
    write_factor_csv(&out.join("factor_low_vol.csv"), &lv)?;
    write_factor_csv(&out.join("factor_low_beta.csv"), &lb)?;
    write_json(&out.join("exposures.json"), &rows)?;
    Ok(Done {
        config: serde_json::to_value(&cfg)?,
        seeds: vec![],
        inputs: vec![a.returns.clone(), daily_path],
    })
}
