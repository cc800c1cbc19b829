//! Synthetic equity universes driven by a linear factor model.
//!
//! Returns are `r_i(t) = mu_i + beta_i f_m(t) + gamma_i f_{s(i)}(t) + sigma_i e_i(t)`
//! with one market factor (all betas positive), `n_factors - 1` sector factors
//! (each asset loads on exactly one sector) and heterogeneous idiosyncratic vols.
//! Sector betas are drawn per sector and jittered per asset, so the market-neutral
//! part of the unit vector lives mostly in the sector subspace.

use chrono::{Datelike, Days, NaiveDate, Weekday};
use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use super::panel::{MarketCapPanel, PricePanel};
use crate::error::{AgalError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticConfig {
    pub n_assets: usize,
    pub n_days: usize,
    pub n_factors: usize,
    pub seed: u64,
    pub start_date: NaiveDate,
    /// Daily vol of the market factor.
    pub market_vol: f64,
    /// Daily vol of each sector factor.
    pub sector_vol: f64,
    /// Median daily idiosyncratic vol.
    pub idio_vol: f64,
    /// Log-normal dispersion of idiosyncratic vols.
    pub idio_dispersion: f64,
    pub beta_range: (f64, f64),
    /// Per-asset beta jitter around the sector beta.
    pub beta_jitter: f64,
    /// Log-normal sigma of initial market caps.
    pub cap_log_sigma: f64,
    /// Daily drift common to all assets.
    pub drift: f64,
    /// Extra annualized return for the lowest-vol names, decreasing linearly in vol rank.
    pub low_vol_premium: f64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            n_assets: 250,
            n_days: 3500,
            n_factors: 10,
            seed: 42,
            start_date: NaiveDate::from_ymd_opt(2005, 8, 1).unwrap(),
            market_vol: 0.010,
            sector_vol: 0.010,
            idio_vol: 0.015,
            idio_dispersion: 0.35,
            beta_range: (0.5, 1.5),
            beta_jitter: 0.1,
            cap_log_sigma: 1.0,
            drift: 0.0003,
            low_vol_premium: 0.0,
        }
    }
}

/// Parameters of the generating model, kept for diagnostics and tests.
#[derive(Debug, Clone)]
pub struct FactorModel {
    pub betas: DVector<f64>,
    /// Sector index per asset, `None` when the model has no sector factors.
    pub sectors: Vec<Option<usize>>,
    pub sector_loadings: DVector<f64>,
    pub idio_vols: DVector<f64>,
    pub drifts: DVector<f64>,
    pub market_vol: f64,
    pub sector_vol: f64,
}

impl FactorModel {
    /// Covariance of daily returns implied by the model.
    pub fn covariance(&self) -> DMatrix<f64> {
        let n = self.betas.len();
        let mv2 = self.market_vol * self.market_vol;
        let sv2 = self.sector_vol * self.sector_vol;
        DMatrix::from_fn(n, n, |i, j| {
            let mut c = self.betas[i] * self.betas[j] * mv2;
            if let (Some(a), Some(b)) = (self.sectors[i], self.sectors[j]) {
                if a == b {
                    c += self.sector_loadings[i] * self.sector_loadings[j] * sv2;
                }
            }
            if i == j {
                c += self.idio_vols[i] * self.idio_vols[i];
            }
            c
        })
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticUniverse {
    pub prices: PricePanel,
    pub caps: MarketCapPanel,
    pub model: FactorModel,
}

/// Weekday calendar starting at the first weekday on or after `start`.
pub fn business_days(start: NaiveDate, n: usize) -> Vec<NaiveDate> {
    let mut out = Vec::with_capacity(n);
    let mut d = start;
    while out.len() < n {
        if !matches!(d.weekday(), Weekday::Sat | Weekday::Sun) {
            out.push(d);
        }
        d = d + Days::new(1);
    }
    out
}

pub fn generate_synthetic_universe(n_assets: usize, n_days: usize, n_factors: usize, seed: u64) -> Result<SyntheticUniverse> {
    generate(&SyntheticConfig {
        n_assets,
        n_days,
        n_factors,
        seed,
        ..SyntheticConfig::default()
    })
}

pub fn generate(cfg: &SyntheticConfig) -> Result<SyntheticUniverse> {
    if cfg.n_assets < 2 || cfg.n_days < 2 || cfg.n_factors < 1 {
        return Err(AgalError::invalid("need n_assets >= 2, n_days >= 2, n_factors >= 1"));
    }
    let n = cfg.n_assets;
    let n_sectors = cfg.n_factors - 1;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    let (lo, hi) = cfg.beta_range;
    let sector_betas: Vec<f64> = (0..n_sectors).map(|_| rng.random_range(lo..hi)).collect();
    let mut sectors: Vec<Option<usize>> = (0..n).map(|i| (n_sectors > 0).then(|| i % n_sectors)).collect();
    sectors.shuffle(&mut rng);

    let jitter = Normal::new(0.0, cfg.beta_jitter.max(0.0)).unwrap();
    let betas = DVector::from_iterator(
        n,
        sectors.iter().map(|s| {
            let b = match s {
                Some(k) => sector_betas[*k] + jitter.sample(&mut rng),
                None => rng.random_range(lo..hi),
            };
            b.max(0.1)
        }),
    );
    let sector_loadings = DVector::from_fn(n, |i, _| {
        if sectors[i].is_some() {
            rng.random_range(0.7..1.3)
        } else {
            0.0
        }
    });
    let idio_vols = DVector::from_fn(n, |_, _| {
        let z: f64 = rng.sample(StandardNormal);
        cfg.idio_vol * (cfg.idio_dispersion * z).exp()
    });

    // premium decreasing linearly in vol rank: rank 0 (lowest vol) earns the full premium
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| idio_vols[a].total_cmp(&idio_vols[b]));
    let mut drifts = DVector::from_element(n, cfg.drift);
    for (rank, &i) in order.iter().enumerate() {
        let frac = 1.0 - rank as f64 / (n - 1) as f64;
        drifts[i] += cfg.low_vol_premium / 252.0 * (frac - 0.5);
    }

    let shares = DVector::from_fn(n, |_, _| {
        let z: f64 = rng.sample(StandardNormal);
        (20.0f64.ln() + cfg.cap_log_sigma * z).exp() * 1e7 / 100.0
    });

    let dates = business_days(cfg.start_date, cfg.n_days);
    let mut prices = DMatrix::zeros(n, cfg.n_days);
    let mut level = DVector::from_element(n, 100.0);
    prices.set_column(0, &level);
    let mut sector_draw = vec![0.0; n_sectors];
    for t in 1..cfg.n_days {
        let fm = cfg.market_vol * rng.sample::<f64, _>(StandardNormal);
        for s in sector_draw.iter_mut() {
            *s = cfg.sector_vol * rng.sample::<f64, _>(StandardNormal);
        }
        for i in 0..n {
            let e: f64 = rng.sample(StandardNormal);
            let mut r = drifts[i] + betas[i] * fm + idio_vols[i] * e;
            if let Some(k) = sectors[i] {
                r += sector_loadings[i] * sector_draw[k];
            }
            level[i] *= 1.0 + r.max(-0.95);
        }
        prices.set_column(t, &level);
    }
    let caps = DMatrix::from_fn(n, cfg.n_days, |i, t| shares[i] * prices[(i, t)]);
    let ids: Vec<String> = (0..n).map(|i| format!("S{i:04}")).collect();

    Ok(SyntheticUniverse {
        prices: PricePanel::new(ids.clone(), dates.clone(), prices)?,
        caps: MarketCapPanel::new(ids, dates, caps)?,
        model: FactorModel {
            betas,
            sectors,
            sector_loadings,
            idio_vols,
            drifts,
            market_vol: cfg.market_vol,
            sector_vol: cfg.sector_vol,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_given_seed() {
        let a = generate_synthetic_universe(20, 50, 3, 7).unwrap();
        let b = generate_synthetic_universe(20, 50, 3, 7).unwrap();
        assert_eq!(a.prices, b.prices);
        assert_eq!(a.caps, b.caps);
        let c = generate_synthetic_universe(20, 50, 3, 8).unwrap();
        assert_ne!(a.prices, c.prices);
    }

    #[test]
    fn business_calendar_skips_weekends() {
        let days = business_days(NaiveDate::from_ymd_opt(2024, 1, 5).unwrap(), 3);
        let wd: Vec<_> = days.iter().map(|d| d.weekday()).collect();
        assert_eq!(wd, vec![Weekday::Fri, Weekday::Mon, Weekday::Tue]);
    }

    #[test]
    fn rejects_bad_sizes() {
        assert!(generate_synthetic_universe(1, 10, 1, 0).is_err());
        assert!(generate_synthetic_universe(5, 1, 1, 0).is_err());
        assert!(generate_synthetic_universe(5, 10, 0, 0).is_err());
    }

    #[test]
    fn betas_positive_and_caps_move_with_prices() {
        let u = generate_synthetic_universe(30, 20, 4, 1).unwrap();
        assert!(u.model.betas.iter().all(|b| *b > 0.0));
        let p = u.prices.prices();
        let c = u.caps.caps();
        for i in 0..30 {
            let ratio0 = c[(i, 0)] / p[(i, 0)];
            let ratio1 = c[(i, 19)] / p[(i, 19)];
            assert!(((ratio0 - ratio1) / ratio0).abs() < 1e-12);
        }
    }
}
