use nalgebra::DVector;

use crate::error::{AgalError, Result};
use crate::spectrum::SpectralCovariance;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErcConfig {
    /// Bound on `(max RC - min RC) / mean RC`.
    pub tolerance: f64,
    pub max_sweeps: usize,
}

impl Default for ErcConfig {
    fn default() -> Self {
        Self {
            tolerance: 1e-10,
            max_sweeps: 10_000,
        }
    }
}

fn contribution_spread(c: &SpectralCovariance, w: &DVector<f64>) -> f64 {
    let cw = c.matrix() * w;
    let rc = w.component_mul(&cw);
    let mean = rc.mean();
    (rc.max() - rc.min()) / mean
}

pub fn erc_weights(c: &SpectralCovariance) -> Result<DVector<f64>> {
    erc_weights_with(c, &ErcConfig::default())
}

/// Long-only weights with equal Euler risk contributions `w_i (C w)_i`.
///
/// Cyclical coordinate descent on `w^T C w / 2 - (1/N) sum log w_i`; each
/// coordinate step solves its quadratic exactly. The minimizer has contributions
/// all equal to `1/N` and is rescaled to unit sum at the end.
pub fn erc_weights_with(c: &SpectralCovariance, cfg: &ErcConfig) -> Result<DVector<f64>> {
    let n = c.dim();
    if n == 0 {
        return Err(AgalError::invalid("empty covariance"));
    }
    let m = c.matrix();
    if (0..n).any(|i| !(m[(i, i)] > 0.0)) {
        return Err(AgalError::invalid("ERC needs strictly positive variances"));
    }
    let budget = 1.0 / n as f64;
    let mut w = DVector::from_fn(n, |i, _| 1.0 / m[(i, i)].sqrt());
    w /= w.sum();
    // cross terms s_i = sum_{j != i} C_ij w_j, kept in sync incrementally
    let mut cw = m * &w;
    let mut spread = contribution_spread(c, &w);
    for sweep in 0..cfg.max_sweeps {
        if spread <= cfg.tolerance {
            log::debug!("ERC converged after {sweep} sweeps");
            return Ok(&w / w.sum());
        }
        for i in 0..n {
            let cii = m[(i, i)];
            let s = cw[i] - cii * w[i];
            let new = (-s + (s * s + 4.0 * cii * budget).sqrt()) / (2.0 * cii);
            let delta = new - w[i];
            if delta != 0.0 {
                cw.axpy(delta, &m.column(i), 1.0);
                w[i] = new;
            }
        }
        // refresh to stop drift in the running product
        cw = m * &w;
        spread = contribution_spread(c, &w);
    }
    if spread <= cfg.tolerance {
        return Ok(&w / w.sum());
    }
    Err(AgalError::Convergence {
        iterations: cfg.max_sweeps,
        residual: spread,
    })
}
