//! Accelerated projected gradient with function-value restarts.

use nalgebra::{DMatrix, DVector};

use super::projection::project_cone;

pub(crate) struct GradientOutcome {
    pub w: DVector<f64>,
    pub iterations: usize,
    pub residual: f64,
    pub converged: bool,
    /// Objective of every accepted iterate.
    pub history: Vec<f64>,
}

fn objective(h: &DMatrix<f64>, w: &DVector<f64>, wt: &DVector<f64>) -> f64 {
    let d = w - wt;
    d.dot(&(h * &d))
}

/// `|w - P(w - g/L)|_inf / |wt|_inf`.
pub(crate) fn pg_residual(w: &DVector<f64>, g: &DVector<f64>, lipschitz: f64, cap: f64, scale: f64) -> f64 {
    let moved = project_cone(&(w - g / lipschitz), cap);
    (w - moved).amax() / scale
}

pub(crate) fn solve(
    h: &DMatrix<f64>,
    wt: &DVector<f64>,
    cap: f64,
    w0: DVector<f64>,
    lipschitz: f64,
    tolerance: f64,
    max_iterations: usize,
) -> GradientOutcome {
    let scale = wt.amax().max(f64::MIN_POSITIVE);
    let mut x = w0;
    let mut fx = objective(h, &x, wt);
    let mut y = x.clone();
    let mut theta = 1.0f64;
    let mut history = vec![fx];
    let mut residual = f64::INFINITY;
    for iter in 0..max_iterations {
        let gx = 2.0 * h * (&x - wt);
        residual = pg_residual(&x, &gx, lipschitz, cap, scale);
        if residual <= tolerance {
            return GradientOutcome {
                w: x,
                iterations: iter,
                residual,
                converged: true,
                history,
            };
        }
        let gy = 2.0 * h * (&y - wt);
        let mut next = project_cone(&(&y - gy / lipschitz), cap);
        let mut fnext = objective(h, &next, wt);
        if fnext > fx {
            // restart: a plain projected step from x never increases the objective
            theta = 1.0;
            next = project_cone(&(&x - &gx / lipschitz), cap);
            fnext = objective(h, &next, wt);
            y = next.clone();
        } else {
            let theta_next = 0.5 * (1.0 + (1.0 + 4.0 * theta * theta).sqrt());
            let beta = (theta - 1.0) / theta_next;
            y = &next + (&next - &x) * beta;
            theta = theta_next;
        }
        x = next;
        fx = fnext;
        history.push(fnext);
    }
    GradientOutcome {
        w: x,
        iterations: max_iterations,
        residual,
        converged: false,
        history,
    }
}
