use nalgebra::DVector;

use super::{floored_eigenvalues, mode_risk, normalize_net, TargetPortfolio, TargetSpec};
use crate::error::{AgalError, Result};
use crate::spectrum::SpectralCovariance;

/// Number of retained modes: `ceil(fraction * n)`, at least 1.
pub fn k_star(fraction: f64, n: usize) -> usize {
    // the small offset keeps exact products such as 0.05 * 500 from rounding up
    let k = (fraction * n as f64 - 1e-9).ceil();
    (k.max(1.0) as usize).min(n.max(1))
}

/// Squared projections of the residual unit vector on every eigenmode.
///
/// The residual is the part of `1` orthogonal to the top mode, normalized; mode 1
/// gets exactly zero and the others sum to one.
pub fn residual_projection(c: &SpectralCovariance) -> Result<Vec<f64>> {
    let n = c.dim();
    let u = c.eigenvectors();
    let ones = DVector::from_element(n, 1.0);
    let u1 = u.column(0);
    let resid = &ones - u1 * u1.dot(&ones);
    let norm = resid.norm();
    if norm < 1e-12 {
        return Err(AgalError::DegenerateResidual);
    }
    let resid = resid / norm;
    let proj = u.tr_mul(&resid);
    let mut out: Vec<f64> = proj.iter().map(|p| p * p).collect();
    out[0] = 0.0;
    let total: f64 = out.iter().sum();
    for p in out.iter_mut() {
        *p /= total;
    }
    Ok(out)
}

/// Agnostic portfolio truncated to the top `k*` eigenmodes.
pub fn sparse_aap_target(c: &SpectralCovariance, k_star_fraction: f64) -> Result<TargetPortfolio> {
    if !(k_star_fraction > 0.0 && k_star_fraction <= 1.0) {
        return Err(AgalError::invalid("k_star_fraction must lie in (0, 1]"));
    }
    let n = c.dim();
    let k = k_star(k_star_fraction, n);
    let lambda = floored_eigenvalues(c);
    let u = c.eigenvectors();
    let mut v = DVector::zeros(n);
    for j in 0..k {
        let col = u.column(j);
        let coef = col.sum() / lambda[j].sqrt();
        v.axpy(coef, &col, 1.0);
    }
    let (weights, omega) = normalize_net(v)?;
    let risk_contributions = mode_risk(c, &weights);
    Ok(TargetPortfolio {
        weights,
        omega,
        spec: TargetSpec::SparseAap { k_star_fraction },
        risk_contributions,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectrum::CleaningTag;
    use crate::targets::named_target;
    use nalgebra::DMatrix;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn random_orthonormal(n: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = DMatrix::from_fn(n, n, |_, _| rng.sample::<f64, _>(StandardNormal));
        g.qr().q()
    }

    #[test]
    fn k_star_rounding() {
        assert_eq!(k_star(0.05, 500), 25);
        assert_eq!(k_star(0.05, 10), 1);
        assert_eq!(k_star(0.05, 21), 2);
        assert_eq!(k_star(1.0, 7), 7);
        assert_eq!(k_star(1e-6, 3), 1);
    }

    #[test]
    fn full_fraction_equals_aap() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = DMatrix::from_fn(8, 12, |_, _| rng.random_range(-1.0..1.0));
        let c = SpectralCovariance::from_matrix(&a * a.transpose()).unwrap();
        let s = sparse_aap_target(&c, 1.0).unwrap();
        let aap = named_target(TargetSpec::Aap, &c, None, None).unwrap();
        assert!((&s.weights - &aap.weights).amax() < 1e-10);
    }

    #[test]
    fn single_mode_for_diagonal() {
        let c = SpectralCovariance::from_matrix(DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 3.0, 2.0]))).unwrap();
        let s = sparse_aap_target(&c, 0.1).unwrap();
        assert_eq!(s.weights.as_slice(), &[0.0, 1.0, 0.0]);
    }

    #[test]
    fn residual_sums_to_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let a = DMatrix::from_fn(10, 15, |_, _| rng.random_range(-1.0..1.0));
        let c = SpectralCovariance::from_matrix(&a * a.transpose()).unwrap();
        let p = residual_projection(&c).unwrap();
        assert_eq!(p[0], 0.0);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn unit_vector_along_top_mode_is_degenerate() {
        // 1 1^T + I has top eigenvector exactly 1/sqrt(N)
        let c = SpectralCovariance::from_matrix(DMatrix::from_element(4, 4, 1.0) + DMatrix::identity(4, 4)).unwrap();
        assert!(matches!(residual_projection(&c), Err(AgalError::DegenerateResidual)));
    }

    #[test]
    fn random_rotations_spread_as_chi_square() {
        // for a Haar basis, N * P_res(k) is close to a chi-square(1) draw: mean 1, std sqrt(2)
        let n = 400;
        let u = random_orthonormal(n, 21);
        let lambda = DVector::from_fn(n, |k, _| (n - k) as f64);
        let c = SpectralCovariance::from_spectrum(lambda, u, CleaningTag::Raw).unwrap();
        let p = residual_projection(&c).unwrap();
        let scaled: Vec<f64> = p[1..].iter().map(|x| x * n as f64).collect();
        let mean = crate::stats::mean(&scaled);
        let sd = crate::stats::std_dev(&scaled);
        assert!((mean - n as f64 / (n - 1) as f64).abs() < 1e-9);
        assert!((sd - 2f64.sqrt()).abs() < 0.2, "sd {sd}");
        // mean + 1 sd is the (1 + sqrt 2)/N band
        assert!(((mean + sd) - (1.0 + 2f64.sqrt())).abs() < 0.2);
    }
}
