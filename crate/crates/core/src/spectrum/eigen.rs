use nalgebra::{DMatrix, DVector};

use crate::error::{AgalError, Result};

/// Largest absolute asymmetry, relative to the largest entry.
pub fn asymmetry(c: &DMatrix<f64>) -> f64 {
    let scale = c.amax();
    if scale == 0.0 {
        return 0.0;
    }
    let n = c.nrows();
    let mut worst = 0.0f64;
    for j in 0..n {
        for i in (j + 1)..n {
            worst = worst.max((c[(i, j)] - c[(j, i)]).abs());
        }
    }
    worst / scale
}

/// Symmetric eigen-decomposition, eigenvalues sorted non-increasing.
///
/// Each eigenvector's sign is fixed so that its components sum to a non-negative
/// value (largest-magnitude component positive when the sum vanishes), which makes
/// the output reproducible and orients the market mode long.
pub fn eigendecompose(c: &DMatrix<f64>) -> Result<(DVector<f64>, DMatrix<f64>)> {
    if !c.is_square() {
        return Err(AgalError::invalid("matrix is not square"));
    }
    if c.iter().any(|x| !x.is_finite()) {
        return Err(AgalError::invalid("matrix has non-finite entries"));
    }
    let asym = asymmetry(c);
    if asym > 1e-10 {
        return Err(AgalError::invalid(format!(
            "matrix is not symmetric (relative asymmetry {asym:e})"
        )));
    }
    let n = c.nrows();
    if n == 0 {
        return Ok((DVector::zeros(0), DMatrix::zeros(0, 0)));
    }
    let fm = faer::Mat::<f64>::from_fn(n, n, |i, j| 0.5 * (c[(i, j)] + c[(j, i)]));
    let eig = fm
        .self_adjoint_eigen(faer::Side::Lower)
        .map_err(|e| AgalError::invalid(format!("eigen solver failed: {e:?}")))?;
    let s = eig.S().column_vector();
    let u = eig.U();

    // faer returns ascending eigenvalues
    let values = DVector::from_fn(n, |k, _| s[n - 1 - k]);
    let mut vectors = DMatrix::from_fn(n, n, |i, k| u[(i, n - 1 - k)]);
    for mut col in vectors.column_iter_mut() {
        let sum: f64 = col.iter().sum();
        let flip = if sum.abs() > 1e-12 * (n as f64).sqrt() {
            sum < 0.0
        } else {
            let imax = col.iamax();
            col[imax] < 0.0
        };
        if flip {
            col.neg_mut();
        }
    }
    Ok((values, vectors))
}
