//! Cross-validated eigenvalue cleaning.
//!
//! Each fold withholds a random subset of days, diagonalizes the covariance of the
//! remaining days (obtained by subtracting the withheld outer products from the
//! full-sample sum), and measures the variance of each in-sample eigenvector on the
//! withheld days. Out-of-sample variances are averaged rank by rank over folds,
//! optionally smoothed by an isotonic fit against the in-sample eigenvalues, and
//! re-attached to the full-sample eigenvectors.

use nalgebra::{DMatrix, DVector};
use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{eigendecompose, gram, isotonic::IsotonicFit, CleaningTag, SpectralCovariance};
use crate::data::{zero_filled, ReturnsPanel};
use crate::error::{AgalError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CleaningConfig {
    pub holdout_fraction: f64,
    pub n_folds: usize,
    pub seed: u64,
    pub isotonic: bool,
    pub preserve_trace: bool,
    /// Divide each asset's returns by its window RMS before cleaning; the result is
    /// mapped back to the original units.
    pub standardize: bool,
}

impl Default for CleaningConfig {
    fn default() -> Self {
        Self {
            holdout_fraction: 0.10,
            n_folds: 100,
            seed: 7,
            isotonic: true,
            preserve_trace: true,
            standardize: false,
        }
    }
}

impl CleaningConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.holdout_fraction > 0.0 && self.holdout_fraction < 0.5) {
            return Err(AgalError::invalid("holdout_fraction must lie in (0, 0.5)"));
        }
        if self.n_folds == 0 {
            return Err(AgalError::invalid("n_folds must be at least 1"));
        }
        Ok(())
    }
}

/// Intermediate spectra, for plotting cleaned against in-sample eigenvalues.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CleaningDiagnostics {
    /// Full-sample eigenvalues, non-increasing.
    pub raw: Vec<f64>,
    /// Fold-averaged in-sample eigenvalues by rank.
    pub in_sample: Vec<f64>,
    /// Fold-averaged out-of-sample variances by rank.
    pub cross_validated: Vec<f64>,
    /// Final eigenvalues attached to the full-sample eigenvectors.
    pub cleaned: Vec<f64>,
    pub folds_used: usize,
}

struct FoldResult {
    in_sample: DVector<f64>,
    out_of_sample: DVector<f64>,
}

fn run_fold(r: &DMatrix<f64>, full: &DMatrix<f64>, t_out: usize, seed: u64, fold: usize) -> Result<Option<FoldResult>> {
    let t = r.ncols();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(fold as u64);
    let mut held = index::sample(&mut rng, t, t_out).into_vec();
    held.sort_unstable();
    let r_out = r.select_columns(held.iter());
    if r_out.iter().all(|x| *x == 0.0) {
        return Ok(None);
    }
    let c_in = (full - gram(&r_out)) / (t - t_out) as f64;
    let (in_sample, u_in) = eigendecompose(&c_in)?;
    let proj = u_in.tr_mul(&r_out);
    let out_of_sample = DVector::from_fn(proj.nrows(), |k, _| {
        proj.row(k).iter().map(|x| x * x).sum::<f64>() / t_out as f64
    });
    Ok(Some(FoldResult {
        in_sample,
        out_of_sample,
    }))
}

pub fn cross_validated_clean(returns: &ReturnsPanel, t0: usize, t1: usize, cfg: &CleaningConfig) -> Result<SpectralCovariance> {
    cross_validated_clean_with_diagnostics(returns, t0, t1, cfg).map(|(c, _)| c)
}

/// Cleans the covariance of date indices `[t0, t1)`.
pub fn cross_validated_clean_with_diagnostics(
    returns: &ReturnsPanel,
    t0: usize,
    t1: usize,
    cfg: &CleaningConfig,
) -> Result<(SpectralCovariance, CleaningDiagnostics)> {
    cfg.validate()?;
    if t1 > returns.n_dates() || t1 < t0 + 10 {
        return Err(AgalError::InvalidWindow(format!(
            "[{t0}, {t1}) needs at least 10 dates within 0..{}",
            returns.n_dates()
        )));
    }
    if returns.n_assets() < 2 {
        return Err(AgalError::invalid("cleaning needs at least 2 assets"));
    }
    let mut r = zero_filled(&returns.select_dates(t0, t1)?);
    let t = r.ncols();
    let scales = if cfg.standardize {
        let s = DVector::from_fn(r.nrows(), |i, _| {
            let rms = (r.row(i).iter().map(|x| x * x).sum::<f64>() / t as f64).sqrt();
            if rms > 0.0 {
                rms
            } else {
                1.0
            }
        });
        for (i, mut row) in r.row_iter_mut().enumerate() {
            row /= s[i];
        }
        Some(s)
    } else {
        None
    };

    let t_out = ((cfg.holdout_fraction * t as f64).ceil() as usize).clamp(1, t - 1);
    let full = gram(&r);
    let folds: Vec<Option<FoldResult>> = (0..cfg.n_folds)
        .into_par_iter()
        .map(|f| run_fold(&r, &full, t_out, cfg.seed, f))
        .collect::<Result<_>>()?;

    let n = r.nrows();
    let mut in_sample = DVector::zeros(n);
    let mut cv = DVector::zeros(n);
    let mut used = 0usize;
    for f in folds.into_iter().flatten() {
        in_sample += f.in_sample;
        cv += f.out_of_sample;
        used += 1;
    }
    if used == 0 {
        return Err(AgalError::CleaningFailed("every holdout fold had zero variance".into()));
    }
    in_sample /= used as f64;
    cv /= used as f64;

    let raw_matrix = &full / t as f64;
    let (raw, u_full) = eigendecompose(&raw_matrix)?;

    let mut cleaned = if cfg.isotonic {
        let fit = IsotonicFit::new(in_sample.as_slice(), cv.as_slice());
        raw.map(|l| fit.evaluate(l))
    } else {
        cv.clone()
    };

    let mean = cleaned.mean();
    if !(mean > 0.0) {
        return Err(AgalError::CleaningFailed("out-of-sample variances are all zero".into()));
    }
    let floor = 1e-12 * mean;
    cleaned.apply(|l| *l = l.max(floor));
    if cfg.preserve_trace {
        let target = raw_matrix.trace();
        let total = cleaned.sum();
        if target > 0.0 {
            cleaned *= target / total;
        }
    }

    // restore the non-increasing order required by the spectral representation
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| cleaned[b].total_cmp(&cleaned[a]).then(a.cmp(&b)));
    let values = DVector::from_fn(n, |k, _| cleaned[order[k]]);
    let vectors = u_full.select_columns(order.iter());

    let mut cov = SpectralCovariance::from_spectrum(values, vectors, CleaningTag::CrossValidated)?;
    if let Some(s) = scales {
        // C = D C_std D; the eigen-decomposition has to be recomputed in original units
        let d = DMatrix::from_diagonal(&s);
        let m = &d * cov.matrix() * &d;
        let (l, u) = eigendecompose(&m)?;
        let l = l.map(|x| x.max(floor * s.min() * s.min()));
        cov = SpectralCovariance::from_spectrum(l, u, CleaningTag::CrossValidated)?;
    }
    let diagnostics = CleaningDiagnostics {
        raw: raw.as_slice().to_vec(),
        in_sample: in_sample.as_slice().to_vec(),
        cross_validated: cv.as_slice().to_vec(),
        cleaned: cov.eigenvalues().as_slice().to_vec(),
        folds_used: used,
    };
    Ok((cov, diagnostics))
}
