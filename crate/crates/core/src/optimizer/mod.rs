//! Long-only, cap-constrained tracking of a target portfolio.
//!
//! Solves `min (w - wt)^T C (w - wt)` over `0 <= w_i <= cap * sum_j w_j` and then
//! rescales to unit sum. The constraint set is a cone, so the rescale preserves
//! feasibility.

mod active_set;
mod gradient;
mod projection;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{AgalError, Result};
use crate::spectrum::SpectralCovariance;
use crate::targets::TargetPortfolio;

pub use projection::{project_cone, water_fill};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    ProjectedGradient,
    ActiveSet,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerConfig {
    pub position_cap: f64,
    pub kkt_tolerance: f64,
    pub max_iterations: usize,
    pub algorithm: Algorithm,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            position_cap: 0.03,
            kkt_tolerance: 1e-8,
            max_iterations: 50_000,
            algorithm: Algorithm::ActiveSet,
        }
    }
}

impl OptimizerConfig {
    pub fn with_cap(cap: f64) -> Self {
        Self {
            position_cap: cap,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.position_cap > 0.0 && self.position_cap <= 1.0) {
            return Err(AgalError::invalid("position_cap must lie in (0, 1]"));
        }
        if !(self.kkt_tolerance > 0.0) {
            return Err(AgalError::invalid("kkt_tolerance must be positive"));
        }
        if self.max_iterations == 0 {
            return Err(AgalError::invalid("max_iterations must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstrainedPortfolio {
    /// Long-only weights summing to one.
    pub weights: Vec<f64>,
    /// Tracking variance of the optimum before the final rescale.
    pub objective_value: f64,
    /// Sum of the optimal weights before the final rescale.
    pub gross: f64,
    pub kkt_residual: f64,
    pub iterations_used: usize,
    pub lower_bound: Vec<usize>,
    pub upper_bound: Vec<usize>,
    pub algorithm: Algorithm,
}

impl ConstrainedPortfolio {
    pub fn weights_vector(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.weights)
    }
}

/// Optimality certificate of a candidate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KktReport {
    /// Projected-gradient residual at the best rescaling of the candidate,
    /// relative to `|wt|_inf`.
    pub stationarity: f64,
    /// Most negative bound multiplier, relative to `2 lambda_1 |wt|_inf`.
    pub dual_violation: f64,
    /// Largest bound violation relative to `sum |w|`.
    pub feasibility_violation: f64,
    /// `w_i` for each coordinate.
    pub lower_slack: Vec<f64>,
    /// `cap * sum w - w_i` for each coordinate.
    pub upper_slack: Vec<f64>,
    /// Multiple of the candidate at which the certificate was evaluated.
    pub scale: f64,
}

impl KktReport {
    pub fn is_optimal(&self, tolerance: f64) -> bool {
        self.stationarity <= tolerance && self.feasibility_violation <= 1e-10
    }
}

fn exactly_feasible(w: &DVector<f64>, cap: f64) -> bool {
    let s = w.sum();
    s > 0.0 && w.iter().all(|x| *x >= 0.0 && *x <= cap * s)
}

fn top_eigenvalue(c: &SpectralCovariance) -> f64 {
    let l = c.eigenvalues().max();
    if l > 0.0 {
        l
    } else {
        1.0
    }
}

pub fn solve_tracking(c: &SpectralCovariance, target: &TargetPortfolio, cfg: &OptimizerConfig) -> Result<ConstrainedPortfolio> {
    solve_tracking_weights(c, &target.weights, cfg, None)
}

/// As [`solve_tracking`], optionally starting from `warm` (any non-negative vector).
pub fn solve_tracking_weights(
    c: &SpectralCovariance,
    wt: &DVector<f64>,
    cfg: &OptimizerConfig,
    warm: Option<&DVector<f64>>,
) -> Result<ConstrainedPortfolio> {
    cfg.validate()?;
    let n = c.dim();
    if wt.len() != n {
        return Err(AgalError::invalid("target length does not match covariance"));
    }
    if n == 0 {
        return Err(AgalError::invalid("empty problem"));
    }
    if wt.iter().any(|x| !x.is_finite()) {
        return Err(AgalError::invalid("target has non-finite weights"));
    }
    let cap = cfg.position_cap;
    let ncap = cap * n as f64;
    if ncap < 1.0 - 1e-12 {
        return Err(AgalError::Infeasible(format!("{n} assets with cap {cap} cannot sum to 100%")));
    }

    if exactly_feasible(wt, cap) {
        let gross = wt.sum();
        let weights = wt / gross;
        return Ok(ConstrainedPortfolio {
            weights: weights.as_slice().to_vec(),
            objective_value: 0.0,
            gross,
            kkt_residual: 0.0,
            iterations_used: 0,
            lower_bound: (0..n).filter(|&i| wt[i] == 0.0).collect(),
            upper_bound: (0..n).filter(|&i| wt[i] == cap * gross).collect(),
            algorithm: cfg.algorithm,
        });
    }

    let cm = c.matrix();
    if ncap <= 1.0 + 1e-12 {
        // only multiples of the unit vector are feasible
        let ones = DVector::from_element(n, 1.0);
        let num = ones.dot(&(cm * wt));
        let den = ones.dot(&(cm * &ones));
        let s = if den > 0.0 { (num / den).max(0.0) } else { 1.0 / n as f64 };
        let w = &ones * s;
        return finish(c, wt, cfg, w, 0, None);
    }

    let lambda = top_eigenvalue(c);
    let ridge = 1e-12 * lambda;
    let mut h = cm.clone();
    for i in 0..n {
        h[(i, i)] += ridge;
    }
    let start = warm
        .and_then(|v| water_fill(v, cap))
        .or_else(|| water_fill(wt, cap))
        .unwrap_or_else(|| DVector::from_element(n, 1.0 / n as f64));
    let lipschitz = 2.0 * (lambda + ridge);

    match cfg.algorithm {
        Algorithm::ActiveSet => {
            let out = active_set::solve(&h, wt, cap, start, cfg.max_iterations)?;
            let lower: Vec<usize> = (0..n).filter(|&i| out.bounds[i] == active_set::Bound::Lower).collect();
            let upper: Vec<usize> = (0..n).filter(|&i| out.bounds[i] == active_set::Bound::Upper).collect();
            finish(c, wt, cfg, out.w, out.iterations, Some((lower, upper)))
        }
        Algorithm::ProjectedGradient => {
            // margin for the certificate, which is re-evaluated after rescaling
            let inner = 0.25 * cfg.kkt_tolerance;
            let out = gradient::solve(&h, wt, cap, start, lipschitz, inner, cfg.max_iterations);
            if !out.converged {
                return Err(AgalError::Convergence {
                    iterations: out.iterations,
                    residual: out.residual,
                });
            }
            finish(c, wt, cfg, out.w, out.iterations, None)
        }
    }
}

/// Objective values of the accepted projected-gradient iterates, for diagnostics.
pub fn projected_gradient_history(c: &SpectralCovariance, wt: &DVector<f64>, cfg: &OptimizerConfig) -> Result<Vec<f64>> {
    cfg.validate()?;
    let n = c.dim();
    let cap = cfg.position_cap;
    if cap * (n as f64) < 1.0 - 1e-12 {
        return Err(AgalError::Infeasible(format!("{n} assets with cap {cap} cannot sum to 100%")));
    }
    let lambda = top_eigenvalue(c);
    let start = water_fill(wt, cap).unwrap_or_else(|| DVector::from_element(n, 1.0 / n as f64));
    let out = gradient::solve(
        c.matrix(),
        wt,
        cap,
        start,
        2.0 * lambda,
        cfg.kkt_tolerance,
        cfg.max_iterations,
    );
    Ok(out.history)
}

fn finish(
    c: &SpectralCovariance,
    wt: &DVector<f64>,
    cfg: &OptimizerConfig,
    mut w: DVector<f64>,
    iterations: usize,
    sets: Option<(Vec<usize>, Vec<usize>)>,
) -> Result<ConstrainedPortfolio> {
    w.apply(|x| *x = x.max(0.0));
    let gross = w.sum();
    if !(gross > 1e-14 * wt.amax()) {
        return Err(AgalError::DegenerateScaling { denominator: gross });
    }
    let d = &w - wt;
    let objective_value = d.dot(&(c.matrix() * &d));
    let weights = &w / gross;
    let report = verify_kkt(c, wt, &weights, cfg);
    if !(report.stationarity <= cfg.kkt_tolerance) {
        return Err(AgalError::Convergence {
            iterations,
            residual: report.stationarity,
        });
    }
    let cap = cfg.position_cap;
    let (lower_bound, upper_bound) = sets.unwrap_or_else(|| {
        let n = weights.len();
        (
            (0..n).filter(|&i| weights[i] == 0.0).collect(),
            (0..n).filter(|&i| weights[i] >= cap - 1e-10).collect(),
        )
    });
    Ok(ConstrainedPortfolio {
        weights: weights.as_slice().to_vec(),
        objective_value,
        gross,
        kkt_residual: report.stationarity,
        iterations_used: iterations,
        lower_bound,
        upper_bound,
        algorithm: cfg.algorithm,
    })
}

/// Certifies `candidate` against the tracking problem for target `wt`.
///
/// Solutions are reported after rescaling, so the candidate is first multiplied by
/// the scale that minimizes the objective along its ray; for the true optimum this
/// restores the unscaled solution.
pub fn verify_kkt(c: &SpectralCovariance, wt: &DVector<f64>, candidate: &DVector<f64>, cfg: &OptimizerConfig) -> KktReport {
    let cm = c.matrix();
    let cap = cfg.position_cap;
    let n = candidate.len();
    let cd = cm * candidate;
    let dcd = candidate.dot(&cd);
    let scale = if dcd > 0.0 {
        (candidate.dot(&(cm * wt)) / dcd).max(0.0)
    } else {
        1.0
    };
    let w = candidate * scale;
    let g = 2.0 * (cm * (&w - wt));
    let lambda = top_eigenvalue(c);
    let wt_scale = wt.amax().max(f64::MIN_POSITIVE);
    let stationarity = gradient::pg_residual(&w, &g, 2.0 * lambda, cap, wt_scale);

    let s = candidate.sum();
    let gross_abs: f64 = candidate.iter().map(|x| x.abs()).sum::<f64>().max(f64::MIN_POSITIVE);
    let lower_slack: Vec<f64> = candidate.iter().copied().collect();
    let upper_slack: Vec<f64> = candidate.iter().map(|x| cap * s - x).collect();
    let feasibility_violation = lower_slack
        .iter()
        .chain(upper_slack.iter())
        .fold(0.0f64, |acc, v| acc.max(-v))
        / gross_abs;

    let tight = 1e-10 * candidate.amax().max(f64::MIN_POSITIVE);
    let at_lower: Vec<usize> = (0..n).filter(|&i| lower_slack[i] <= tight).collect();
    let at_upper: Vec<usize> = (0..n).filter(|&i| cap < 1.0 && upper_slack[i] <= tight).collect();
    let free: Vec<usize> = (0..n).filter(|i| !at_lower.contains(i) && !at_upper.contains(i)).collect();
    let m = if !free.is_empty() {
        free.iter().map(|&i| g[i]).sum::<f64>() / free.len() as f64
    } else {
        let d = 1.0 - cap * at_upper.len() as f64;
        if at_upper.is_empty() || d.abs() < 1e-12 {
            0.0
        } else {
            -cap * at_upper.iter().map(|&i| g[i]).sum::<f64>() / d
        }
    };
    let worst = at_lower
        .iter()
        .map(|&i| g[i] - m)
        .chain(at_upper.iter().map(|&i| m - g[i]))
        .fold(0.0f64, |acc, v| acc.max(-v));
    let dual_violation = worst / (2.0 * lambda * wt_scale);

    KktReport {
        stationarity,
        dual_violation,
        feasibility_violation,
        lower_slack,
        upper_slack,
        scale,
    }
}

/// Tracking variance `(w - wt)^T C (w - wt)`.
pub fn tracking_variance(c: &DMatrix<f64>, w: &DVector<f64>, wt: &DVector<f64>) -> f64 {
    let d = w - wt;
    d.dot(&(c * &d))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::targets::{named_target, TargetSpec};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_spd(n: usize, rng: &mut ChaCha8Rng) -> SpectralCovariance {
        let a = DMatrix::from_fn(n, n + 2, |_, _| rng.random_range(-1.0..1.0));
        SpectralCovariance::from_matrix(&a * a.transpose() / (n + 2) as f64 + DMatrix::identity(n, n) * 0.05).unwrap()
    }

    #[test]
    fn feasible_target_returned_exactly() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let c = random_spd(5, &mut rng);
        let wt = DVector::from_vec(vec![0.1, 0.2, 0.3, 0.25, 0.15]);
        let sol = solve_tracking_weights(&c, &wt, &OptimizerConfig::with_cap(0.5), None).unwrap();
        assert_eq!(sol.weights, wt.as_slice());
        assert_eq!(sol.objective_value, 0.0);
    }

    #[test]
    fn identity_projection_example() {
        let c = SpectralCovariance::from_matrix(DMatrix::identity(2, 2)).unwrap();
        let wt = DVector::from_vec(vec![1.5, -0.5]);
        for algorithm in [Algorithm::ActiveSet, Algorithm::ProjectedGradient] {
            let cfg = OptimizerConfig {
                position_cap: 1.0,
                algorithm,
                ..Default::default()
            };
            let sol = solve_tracking_weights(&c, &wt, &cfg, None).unwrap();
            assert!((sol.weights[0] - 1.0).abs() < 1e-12 && sol.weights[1].abs() < 1e-12);
            assert!((sol.gross - 1.5).abs() < 1e-9);
        }
    }

    #[test]
    fn infeasible_cap() {
        let c = SpectralCovariance::from_matrix(DMatrix::identity(100, 100)).unwrap();
        let wt = DVector::from_element(100, 0.01);
        let err = solve_tracking_weights(&c, &wt, &OptimizerConfig::with_cap(0.001), None).unwrap_err();
        assert!(matches!(err, AgalError::Infeasible(_)));
    }

    #[test]
    fn cap_times_n_equal_one_forces_uniform() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let c = random_spd(4, &mut rng);
        let wt = DVector::from_vec(vec![0.7, 0.5, -0.1, -0.1]);
        let sol = solve_tracking_weights(&c, &wt, &OptimizerConfig::with_cap(0.25), None).unwrap();
        assert!(sol.weights.iter().all(|w| (w - 0.25).abs() < 1e-15));
    }

    #[test]
    fn algorithms_agree_and_certify() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for trial in 0..20 {
            let n = 8 + trial % 5;
            let c = random_spd(n, &mut rng);
            let wt = DVector::from_fn(n, |_, _| rng.random_range(-0.5..1.0));
            let wt = &wt / wt.sum();
            for cap in [0.2, 0.35, 1.0] {
                let a = solve_tracking_weights(&c, &wt, &OptimizerConfig::with_cap(cap), None).unwrap();
                let cfg = OptimizerConfig {
                    position_cap: cap,
                    algorithm: Algorithm::ProjectedGradient,
                    kkt_tolerance: 1e-11,
                    ..Default::default()
                };
                let p = solve_tracking_weights(&c, &wt, &cfg, None).unwrap();
                let diff = a
                    .weights
                    .iter()
                    .zip(&p.weights)
                    .map(|(x, y)| (x - y).abs())
                    .fold(0.0, f64::max);
                assert!(diff < 1e-6, "trial {trial} cap {cap}: {diff}");
                assert!(a.kkt_residual <= 1e-8);
                let s: f64 = a.weights.iter().sum();
                assert!((s - 1.0).abs() < 1e-10);
                assert!(a.weights.iter().all(|w| *w >= 0.0 && *w <= cap + 1e-10));
            }
        }
    }

    #[test]
    fn perturbation_breaks_certificate() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let c = random_spd(6, &mut rng);
        let wt = DVector::from_vec(vec![0.5, 0.4, 0.3, -0.1, -0.05, -0.05]);
        let cfg = OptimizerConfig::with_cap(0.4);
        let sol = solve_tracking_weights(&c, &wt, &cfg, None).unwrap();
        let w = sol.weights_vector();
        assert!(verify_kkt(&c, &wt, &w, &cfg).stationarity <= cfg.kkt_tolerance);
        let free = (0..6).find(|&i| w[i] > 1e-6 && w[i] < 0.4 - 1e-6).expect("a free coordinate");
        let mut bumped = w.clone();
        bumped[free] += 1e-3;
        let bumped = &bumped / bumped.sum();
        assert!(verify_kkt(&c, &wt, &bumped, &cfg).stationarity > cfg.kkt_tolerance);
        let rep = verify_kkt(&c, &wt, &wt, &cfg);
        assert!(rep.feasibility_violation > 0.0);
    }

    #[test]
    fn homogeneity() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let c = random_spd(7, &mut rng);
        let wt = DVector::from_fn(7, |_, _| rng.random_range(-0.5..1.0));
        let cfg = OptimizerConfig::with_cap(0.3);
        let base = solve_tracking_weights(&c, &wt, &cfg, None).unwrap();
        for g in [0.01, 7.0, 1e4] {
            let s = solve_tracking_weights(&c, &(&wt * g), &cfg, None).unwrap();
            for (x, y) in base.weights.iter().zip(&s.weights) {
                assert!((x - y).abs() < 1e-8);
            }
            assert!((s.gross / base.gross - g).abs() < 1e-8 * g);
        }
    }

    #[test]
    fn warm_start_gives_same_answer() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let c = random_spd(10, &mut rng);
        let t = named_target(TargetSpec::Mvp, &c, None, None).unwrap();
        let cfg = OptimizerConfig::with_cap(0.2);
        let cold = solve_tracking(&c, &t, &cfg).unwrap();
        let warm = solve_tracking_weights(&c, &t.weights, &cfg, Some(&DVector::from_element(10, 0.1))).unwrap();
        for (x, y) in cold.weights.iter().zip(&warm.weights) {
            assert!((x - y).abs() < 1e-10);
        }
    }

    #[test]
    fn gradient_history_is_monotone() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let c = random_spd(12, &mut rng);
        let wt = DVector::from_fn(12, |_, _| rng.random_range(-0.5..1.0));
        let cfg = OptimizerConfig::with_cap(0.2);
        let h = projected_gradient_history(&c, &wt, &cfg).unwrap();
        assert!(h.len() > 2);
        assert!(h.windows(2).all(|p| p[1] <= p[0] * (1.0 + 1e-12) + 1e-18));
    }
}
