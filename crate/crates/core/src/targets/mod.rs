//! Unconstrained target portfolios.
//!
//! Every risk-based target here is a member of the family
//! `w = omega * C^{-a} diag(sigma)^b diag(M)^c 1`, with `omega` fixing the net
//! exposure to one. Named methods are fixed points of `(a, b, c)`; equal risk
//! contribution and the eigen-truncated agnostic portfolio have their own solvers.

mod erc;
mod residual;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{AgalError, Result};
use crate::spectrum::{SpectralCovariance, EIGEN_FLOOR};

pub use erc::{erc_weights, erc_weights_with, ErcConfig};
pub use residual::{k_star, residual_projection, sparse_aap_target};

fn default_k_star_fraction() -> f64 {
    0.05
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TargetSpec {
    Continuum {
        a: f64,
        b: f64,
        c: f64,
    },
    MarketCap,
    EqualWeight,
    EqualVol,
    Mvp,
    Mdp,
    Erc,
    Aap,
    SparseAap {
        #[serde(default = "default_k_star_fraction")]
        k_star_fraction: f64,
    },
}

impl TargetSpec {
    /// Continuum coordinates of the method, if it has any.
    pub fn abc(&self) -> Option<(f64, f64, f64)> {
        match *self {
            TargetSpec::Continuum { a, b, c } => Some((a, b, c)),
            TargetSpec::MarketCap => Some((0.0, 0.0, 1.0)),
            TargetSpec::EqualWeight => Some((0.0, 0.0, 0.0)),
            TargetSpec::EqualVol => Some((0.0, -1.0, 0.0)),
            TargetSpec::Mvp => Some((1.0, 0.0, 0.0)),
            TargetSpec::Mdp => Some((1.0, 1.0, 0.0)),
            TargetSpec::Aap => Some((0.5, 0.0, 0.0)),
            TargetSpec::Erc | TargetSpec::SparseAap { .. } => None,
        }
    }

    /// Short label used in reports and file names.
    pub fn label(&self) -> String {
        match *self {
            TargetSpec::Continuum { a, b, c } => format!("continuum({a},{b},{c})"),
            TargetSpec::MarketCap => "MC".into(),
            TargetSpec::EqualWeight => "1/N".into(),
            TargetSpec::EqualVol => "EV".into(),
            TargetSpec::Mvp => "MVP".into(),
            TargetSpec::Mdp => "MDP".into(),
            TargetSpec::Erc => "ERC".into(),
            TargetSpec::Aap => "AAP".into(),
            TargetSpec::SparseAap { .. } => "S-AAP".into(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            TargetSpec::Continuum { a, b, c } if !(a.is_finite() && b.is_finite() && c.is_finite()) => {
                Err(AgalError::invalid("continuum parameters must be finite"))
            }
            TargetSpec::SparseAap { k_star_fraction } if !(k_star_fraction > 0.0 && k_star_fraction <= 1.0) => {
                Err(AgalError::invalid("k_star_fraction must lie in (0, 1]"))
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TargetPortfolio {
    pub weights: DVector<f64>,
    pub omega: f64,
    pub spec: TargetSpec,
    /// `lambda_k (u_k . w)^2` per eigenmode; sums to `w^T C w`.
    pub risk_contributions: Vec<f64>,
}

impl TargetPortfolio {
    pub fn n_short(&self) -> usize {
        self.weights.iter().filter(|w| **w < 0.0).count()
    }
}

/// `lambda_k (u_k . w)^2` for each eigenmode of `c`.
pub fn mode_risk(c: &SpectralCovariance, w: &DVector<f64>) -> Vec<f64> {
    let proj = c.eigenvectors().tr_mul(w);
    proj.iter().zip(c.eigenvalues().iter()).map(|(p, l)| l * p * p).collect()
}

pub fn mode_risk_decomposition(target: &TargetPortfolio, c: &SpectralCovariance) -> Vec<f64> {
    mode_risk(c, &target.weights)
}

/// Rescales `v` to unit net exposure and returns it with `omega`.
pub(crate) fn normalize_net(v: DVector<f64>) -> Result<(DVector<f64>, f64)> {
    let denominator = v.sum();
    let gross: f64 = v.iter().map(|x| x.abs()).sum();
    if !denominator.is_finite() || denominator.abs() <= 1e-12 * gross || gross == 0.0 {
        return Err(AgalError::DegenerateScaling { denominator });
    }
    let omega = 1.0 / denominator;
    Ok((v * omega, omega))
}

/// `w = omega C^{-a} p` for an arbitrary predictor `p` (unit predictor covariance).
///
/// `a = 1` is the Markowitz solution for expected returns `p`; `a = 1/2` spreads
/// the risk over eigenmodes in proportion to `(u_k . p)^2`.
pub fn predictor_target(c: &SpectralCovariance, p: &DVector<f64>, a: f64, spec: TargetSpec) -> Result<TargetPortfolio> {
    if p.len() != c.dim() {
        return Err(AgalError::invalid("predictor length does not match covariance"));
    }
    if !a.is_finite() {
        return Err(AgalError::invalid("exponent must be finite"));
    }
    let v = if a == 0.0 { p.clone() } else { c.apply_power(p, -a, true)? };
    let (weights, omega) = normalize_net(v)?;
    let risk_contributions = mode_risk(c, &weights);
    Ok(TargetPortfolio {
        weights,
        omega,
        spec,
        risk_contributions,
    })
}

pub fn continuum_target(
    c: &SpectralCovariance,
    sigma: &DVector<f64>,
    caps: Option<&DVector<f64>>,
    a: f64,
    b: f64,
    cc: f64,
) -> Result<TargetPortfolio> {
    continuum_with_spec(c, sigma, caps, a, b, cc, TargetSpec::Continuum { a, b, c: cc })
}

fn continuum_with_spec(
    c: &SpectralCovariance,
    sigma: &DVector<f64>,
    caps: Option<&DVector<f64>>,
    a: f64,
    b: f64,
    cc: f64,
    spec: TargetSpec,
) -> Result<TargetPortfolio> {
    let n = c.dim();
    if !(a.is_finite() && b.is_finite() && cc.is_finite()) {
        return Err(AgalError::invalid("continuum parameters must be finite"));
    }
    if sigma.len() != n {
        return Err(AgalError::invalid("volatility vector length does not match covariance"));
    }
    let mut p = DVector::from_element(n, 1.0);
    if b != 0.0 {
        if sigma.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
            return Err(AgalError::invalid("volatilities must be positive when b != 0"));
        }
        p.zip_apply(sigma, |pi, s| *pi *= s.powf(b));
    }
    if cc != 0.0 {
        let m = caps.ok_or_else(|| AgalError::invalid("market caps are required when c != 0"))?;
        if m.len() != n {
            return Err(AgalError::invalid("cap vector length does not match covariance"));
        }
        if m.iter().any(|x| !(*x > 0.0 && x.is_finite())) {
            return Err(AgalError::invalid("market caps must be positive when c != 0"));
        }
        p.zip_apply(m, |pi, x| *pi *= x.powf(cc));
    }
    predictor_target(c, &p, a, spec)
}

/// Dispatches a named method. `sigma` defaults to `sqrt(diag C)` when `None`.
pub fn named_target(
    spec: TargetSpec,
    c: &SpectralCovariance,
    sigma: Option<&DVector<f64>>,
    caps: Option<&DVector<f64>>,
) -> Result<TargetPortfolio> {
    spec.validate()?;
    let own_sigma;
    let sigma = match sigma {
        Some(s) => s,
        None => {
            own_sigma = c.vols();
            &own_sigma
        }
    };
    match spec {
        TargetSpec::Erc => {
            let raw = erc_weights(c)?;
            let omega = 1.0;
            let risk_contributions = mode_risk(c, &raw);
            Ok(TargetPortfolio {
                weights: raw,
                omega,
                spec,
                risk_contributions,
            })
        }
        TargetSpec::SparseAap { k_star_fraction } => sparse_aap_target(c, k_star_fraction),
        _ => {
            let (a, b, cc) = spec.abc().expect("continuum member");
            continuum_with_spec(c, sigma, caps, a, b, cc, spec)
        }
    }
}

/// Eigenvalues as used by every target: lifted to `EIGEN_FLOOR * lambda_1`.
pub(crate) fn floored_eigenvalues(c: &SpectralCovariance) -> DVector<f64> {
    let level = EIGEN_FLOOR * c.eigenvalues().max().max(0.0);
    c.eigenvalues().map(|l| l.max(level))
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn cov(rows: &[f64], n: usize) -> SpectralCovariance {
        SpectralCovariance::from_matrix(DMatrix::from_row_slice(n, n, rows)).unwrap()
    }

    fn random_spd(n: usize, seed: u64) -> SpectralCovariance {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = DMatrix::from_fn(n, n + 3, |_, _| rng.random_range(-1.0..1.0));
        SpectralCovariance::from_matrix(&a * a.transpose() / (n + 3) as f64).unwrap()
    }

    fn close(a: &DVector<f64>, b: &[f64], tol: f64) -> bool {
        a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
    }

    #[test]
    fn continuum_examples() {
        let c = random_spd(4, 1);
        let w = continuum_target(&c, &c.vols(), None, 0.0, 0.0, 0.0).unwrap();
        assert!(w.weights.iter().all(|x| *x == 0.25));

        let c2 = cov(&[1.0, 0.0, 0.0, 4.0], 2);
        let sigma = DVector::from_vec(vec![1.0, 2.0]);
        let ev = continuum_target(&c2, &sigma, None, 0.0, -1.0, 0.0).unwrap();
        assert!(close(&ev.weights, &[2.0 / 3.0, 1.0 / 3.0], 1e-15));

        for rho in [-0.5, 0.0, 0.3, 0.9] {
            let c = cov(&[1.0, rho, rho, 1.0], 2);
            let w = continuum_target(&c, &c.vols(), None, 1.0, 0.0, 0.0).unwrap();
            assert!(close(&w.weights, &[0.5, 0.5], 1e-12));
        }

        let m = DVector::from_vec(vec![1.0, 3.0, 6.0, 10.0]);
        let mc = continuum_target(&c, &c.vols(), Some(&m), 0.0, 0.0, 1.0).unwrap();
        assert!(close(&mc.weights, &[0.05, 0.15, 0.3, 0.5], 1e-15));
    }

    #[test]
    fn named_examples() {
        let c = cov(&[1.0, 0.0, 0.0, 4.0], 2);
        let mvp = named_target(TargetSpec::Mvp, &c, None, None).unwrap();
        assert!(close(&mvp.weights, &[0.8, 0.2], 1e-14));
        let mdp = named_target(TargetSpec::Mdp, &c, None, None).unwrap();
        assert!(close(&mdp.weights, &[2.0 / 3.0, 1.0 / 3.0], 1e-14));
        let i3 = SpectralCovariance::from_matrix(DMatrix::identity(3, 3)).unwrap();
        let aap = named_target(TargetSpec::Aap, &i3, None, None).unwrap();
        assert!(close(&aap.weights, &[1.0 / 3.0; 3], 1e-15));
    }

    #[test]
    fn named_equals_continuum_bitwise() {
        let c = random_spd(6, 2);
        let caps = DVector::from_fn(6, |i, _| 1.0 + i as f64);
        for spec in [
            TargetSpec::MarketCap,
            TargetSpec::EqualWeight,
            TargetSpec::EqualVol,
            TargetSpec::Mvp,
            TargetSpec::Mdp,
            TargetSpec::Aap,
        ] {
            let (a, b, cc) = spec.abc().unwrap();
            let named = named_target(spec, &c, None, Some(&caps)).unwrap();
            let direct = continuum_target(&c, &c.vols(), Some(&caps), a, b, cc).unwrap();
            assert_eq!(named.weights, direct.weights, "{}", spec.label());
            assert_eq!(named.omega, direct.omega);
        }
    }

    #[test]
    fn net_exposure_and_risk_sum() {
        let c = random_spd(7, 3);
        for (a, b) in [(0.0, 0.0), (0.5, 0.0), (1.0, 1.0), (1.0, 0.0), (0.3, -0.5)] {
            let t = continuum_target(&c, &c.vols(), None, a, b, 0.0).unwrap();
            assert!((t.weights.sum() - 1.0).abs() < 1e-8);
            let var = (t.weights.transpose() * c.matrix() * &t.weights)[(0, 0)];
            let total: f64 = t.risk_contributions.iter().sum();
            assert!((total - var).abs() <= 1e-8 * var);
        }
    }

    #[test]
    fn scale_invariance() {
        let c = random_spd(5, 4);
        let caps = DVector::from_fn(5, |i, _| 2.0 + i as f64);
        for spec in [
            TargetSpec::Mvp,
            TargetSpec::Mdp,
            TargetSpec::Aap,
            TargetSpec::EqualVol,
            TargetSpec::Erc,
        ] {
            let base = named_target(spec, &c, None, Some(&caps)).unwrap();
            for s in [1e-6, 3.0, 250.0] {
                let scaled = named_target(spec, &c.scaled(s), None, Some(&caps)).unwrap();
                assert!((&base.weights - &scaled.weights).amax() < 1e-10, "{} at {s}", spec.label());
            }
        }
        let base = sparse_aap_target(&c, 0.4).unwrap();
        let scaled = sparse_aap_target(&c.scaled(17.0), 0.4).unwrap();
        assert!((&base.weights - &scaled.weights).amax() < 1e-10);
    }

    #[test]
    fn degenerate_tie_block_is_basis_free() {
        // eigenvalues 4, 1, 1: any rotation inside the tied block is a valid basis
        let c = cov(&[2.0, 1.0, 1.0, 1.0, 2.0, 1.0, 1.0, 1.0, 2.0], 3);
        let u = c.eigenvectors().clone();
        let (s, co) = (0.6f64, 0.8f64);
        let mut rotated = u.clone();
        for i in 0..3 {
            rotated[(i, 1)] = co * u[(i, 1)] - s * u[(i, 2)];
            rotated[(i, 2)] = s * u[(i, 1)] + co * u[(i, 2)];
        }
        let alt = SpectralCovariance::from_spectrum(c.eigenvalues().clone(), rotated, crate::spectrum::CleaningTag::Raw).unwrap();
        assert!((alt.matrix() - c.matrix()).amax() < 1e-14);
        let caps = DVector::from_vec(vec![1.0, 2.0, 3.0]);
        for spec in [
            TargetSpec::Mvp,
            TargetSpec::Mdp,
            TargetSpec::Aap,
            TargetSpec::Erc,
            TargetSpec::MarketCap,
        ] {
            let x = named_target(spec, &c, None, Some(&caps)).unwrap();
            let y = named_target(spec, &alt, None, Some(&caps)).unwrap();
            assert!((&x.weights - &y.weights).amax() < 1e-12, "{}", spec.label());
        }
    }

    #[test]
    fn degenerate_scaling() {
        // C^{-1} 1 has zero net exposure
        let c = cov(&[1.0, 0.0, 0.0, 1.0], 2);
        let p = DVector::from_vec(vec![1.0, -1.0]);
        assert!(matches!(
            predictor_target(&c, &p, 1.0, TargetSpec::Mvp),
            Err(AgalError::DegenerateScaling { .. })
        ));
    }

    #[test]
    fn bad_inputs() {
        let c = random_spd(3, 5);
        let bad_sigma = DVector::from_vec(vec![1.0, 0.0, 1.0]);
        assert!(continuum_target(&c, &bad_sigma, None, 1.0, 1.0, 0.0).is_err());
        assert!(continuum_target(&c, &bad_sigma, None, 1.0, 0.0, 0.0).is_ok());
        assert!(continuum_target(&c, &c.vols(), None, 0.0, 0.0, 1.0).is_err());
        assert!(named_target(TargetSpec::SparseAap { k_star_fraction: 0.0 }, &c, None, None).is_err());
        assert!(continuum_target(&c, &c.vols(), None, f64::NAN, 0.0, 0.0).is_err());
    }

    #[test]
    fn two_asset_spread_share() {
        for rho in [0.1, 0.5, 0.8] {
            let c = cov(&[1.0, rho, rho, 1.0], 2);
            let p = DVector::from_vec(vec![1.0, 0.0]);
            // modes are sorted: index 0 is the market mode (1+rho), index 1 the spread
            let mk = predictor_target(&c, &p, 1.0, TargetSpec::Mvp).unwrap();
            let total: f64 = mk.risk_contributions.iter().sum();
            assert!((mk.risk_contributions[1] / total - (1.0 + rho) / 2.0).abs() < 1e-12);
            let aap = predictor_target(&c, &p, 0.5, TargetSpec::Aap).unwrap();
            let total: f64 = aap.risk_contributions.iter().sum();
            assert!((aap.risk_contributions[1] / total - 0.5).abs() < 1e-12);
        }
    }

    #[test]
    fn aap_spreads_risk_by_projection() {
        let c = random_spd(6, 6);
        let t = named_target(TargetSpec::Aap, &c, None, None).unwrap();
        let proj = c.eigenvectors().tr_mul(&DVector::from_element(6, 1.0));
        let total: f64 = t.risk_contributions.iter().sum();
        let norm: f64 = proj.iter().map(|x| x * x).sum();
        for k in 0..6 {
            assert!((t.risk_contributions[k] / total - proj[k] * proj[k] / norm).abs() < 1e-10);
        }
        // a predictor with equal projections on all modes gives uniform shares
        let p = c.eigenvectors() * DVector::from_element(6, 1.0);
        let eq = predictor_target(&c, &p, 0.5, TargetSpec::Aap).unwrap();
        let total: f64 = eq.risk_contributions.iter().sum();
        assert!(eq.risk_contributions.iter().all(|r| (r / total - 1.0 / 6.0).abs() < 1e-10));
    }

    #[test]
    fn spec_serde_round_trip() {
        for spec in [
            TargetSpec::Continuum { a: 0.5, b: -1.0, c: 0.0 },
            TargetSpec::SparseAap { k_star_fraction: 0.05 },
            TargetSpec::Erc,
        ] {
            let s = serde_json::to_string(&spec).unwrap();
            assert_eq!(serde_json::from_str::<TargetSpec>(&s).unwrap(), spec);
        }
        let d: TargetSpec = serde_json::from_str(r#"{"kind":"sparse_aap"}"#).unwrap();
        assert_eq!(d, TargetSpec::SparseAap { k_star_fraction: 0.05 });
    }
}
