//! Covariance estimation, eigen-decomposition, matrix powers and cross-validated
//! eigenvalue cleaning.

mod clean;
mod eigen;
mod isotonic;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

pub use clean::{cross_validated_clean, cross_validated_clean_with_diagnostics, CleaningConfig, CleaningDiagnostics};
pub use eigen::{asymmetry, eigendecompose};
pub use isotonic::IsotonicFit;

use crate::data::{zero_filled, ReturnsPanel};
use crate::error::{AgalError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CleaningTag {
    Raw,
    CrossValidated,
}

/// Relative eigenvalue floor applied when inverting a non-positive-definite matrix.
pub const EIGEN_FLOOR: f64 = 1e-10;

/// Symmetric covariance with its cached eigen-decomposition.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralCovariance {
    matrix: DMatrix<f64>,
    eigenvalues: DVector<f64>,
    eigenvectors: DMatrix<f64>,
    cleaning_tag: CleaningTag,
}

impl SpectralCovariance {
    /// Decomposes `matrix`; tagged raw.
    pub fn from_matrix(matrix: DMatrix<f64>) -> Result<Self> {
        let (eigenvalues, eigenvectors) = eigendecompose(&matrix)?;
        let mut matrix = matrix;
        symmetrize(&mut matrix);
        Ok(Self {
            matrix,
            eigenvalues,
            eigenvectors,
            cleaning_tag: CleaningTag::Raw,
        })
    }

    /// Builds `sum_k lambda_k u_k u_k^T` from a spectrum. Eigenvalues must be sorted
    /// non-increasing and eigenvectors orthonormal columns.
    pub fn from_spectrum(eigenvalues: DVector<f64>, eigenvectors: DMatrix<f64>, cleaning_tag: CleaningTag) -> Result<Self> {
        let n = eigenvalues.len();
        if eigenvectors.nrows() != n || eigenvectors.ncols() != n {
            return Err(AgalError::invalid("eigenvector matrix must be N x N"));
        }
        if eigenvalues.as_slice().windows(2).any(|w| w[0] < w[1]) {
            return Err(AgalError::invalid("eigenvalues must be sorted non-increasing"));
        }
        if cleaning_tag == CleaningTag::CrossValidated && eigenvalues.iter().any(|l| *l <= 0.0) {
            return Err(AgalError::invalid("cleaned eigenvalues must be strictly positive"));
        }
        let scaled = DMatrix::from_fn(n, n, |i, k| eigenvectors[(i, k)] * eigenvalues[k]);
        let mut matrix = scaled * eigenvectors.transpose();
        symmetrize(&mut matrix);
        Ok(Self {
            matrix,
            eigenvalues,
            eigenvectors,
            cleaning_tag,
        })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn eigenvalues(&self) -> &DVector<f64> {
        &self.eigenvalues
    }

    pub fn eigenvectors(&self) -> &DMatrix<f64> {
        &self.eigenvectors
    }

    pub fn cleaning_tag(&self) -> CleaningTag {
        self.cleaning_tag
    }

    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn trace(&self) -> f64 {
        self.matrix.trace()
    }

    /// `sqrt(C_ii)`.
    pub fn vols(&self) -> DVector<f64> {
        DVector::from_fn(self.dim(), |i, _| self.matrix[(i, i)].max(0.0).sqrt())
    }

    /// Same eigenvectors, eigenvalues multiplied by `factor > 0`.
    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            matrix: &self.matrix * factor,
            eigenvalues: &self.eigenvalues * factor,
            eigenvectors: self.eigenvectors.clone(),
            cleaning_tag: self.cleaning_tag,
        }
    }

    /// Eigenvalues prepared for raising to `exponent`. Negative exponents need a
    /// positive spectrum: with `floor` set, eigenvalues below `1e-10 * lambda_1` are
    /// lifted to that level, otherwise a singular-matrix error is returned.
    fn powered_eigenvalues(&self, exponent: f64, floor: bool) -> Result<DVector<f64>> {
        if exponent == 0.0 {
            return Ok(DVector::from_element(self.dim(), 1.0));
        }
        let top = self.eigenvalues.max();
        let level = EIGEN_FLOOR * top.max(0.0);
        let lifted = |l: f64| -> Result<f64> {
            if exponent < 0.0 && l <= level {
                if floor && level > 0.0 {
                    Ok(level)
                } else {
                    Err(AgalError::Singular(format!(
                        "eigenvalue {l:e} cannot be raised to {exponent}"
                    )))
                }
            } else {
                Ok(l.max(0.0))
            }
        };
        let mut out = DVector::zeros(self.dim());
        for (o, l) in out.iter_mut().zip(self.eigenvalues.iter()) {
            *o = lifted(*l)?.powf(exponent);
        }
        Ok(out)
    }

    /// `C^exponent = sum_k lambda_k^exponent u_k u_k^T`.
    pub fn power(&self, exponent: f64, floor: bool) -> Result<DMatrix<f64>> {
        let n = self.dim();
        if exponent == 0.0 {
            return Ok(DMatrix::identity(n, n));
        }
        let p = self.powered_eigenvalues(exponent, floor)?;
        let u = &self.eigenvectors;
        let scaled = DMatrix::from_fn(n, n, |i, k| u[(i, k)] * p[k]);
        let mut m = scaled * u.transpose();
        symmetrize(&mut m);
        Ok(m)
    }

    /// `C^exponent v` evaluated in the eigenbasis.
    pub fn apply_power(&self, v: &DVector<f64>, exponent: f64, floor: bool) -> Result<DVector<f64>> {
        if exponent == 0.0 {
            return Ok(v.clone());
        }
        let p = self.powered_eigenvalues(exponent, floor)?;
        let proj = self.eigenvectors.tr_mul(v).component_mul(&p);
        Ok(&self.eigenvectors * proj)
    }
}

fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for j in 0..n {
        for i in (j + 1)..n {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

/// `C^exponent`; see [`SpectralCovariance::power`].
pub fn matrix_power(c: &SpectralCovariance, exponent: f64, floor: bool) -> Result<DMatrix<f64>> {
    c.power(exponent, floor)
}

/// `R R^T` for a zero-filled returns matrix, exactly symmetric.
pub(crate) fn gram(r: &DMatrix<f64>) -> DMatrix<f64> {
    let mut g = r * r.transpose();
    symmetrize(&mut g);
    g
}

/// `C_ij = (1/T_w) sum_t r_i(t) r_j(t)` over date indices `[t0, t1)`, without mean
/// subtraction; missing returns count as zero.
pub fn empirical_covariance(returns: &ReturnsPanel, t0: usize, t1: usize) -> Result<SpectralCovariance> {
    if t1 > returns.n_dates() || t1 < t0 + 2 {
        return Err(AgalError::InvalidWindow(format!(
            "[{t0}, {t1}) needs at least 2 dates within 0..{}",
            returns.n_dates()
        )));
    }
    let window = returns.select_dates(t0, t1)?;
    let r = zero_filled(&window);
    let c = gram(&r) / (t1 - t0) as f64;
    SpectralCovariance::from_matrix(c)
}
