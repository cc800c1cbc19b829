//! Primal active-set method on the cap cone.
//!
//! The working set splits coordinates into lower-bound (`w_i = 0`), upper-bound
//! (`w_i = cap * S`) and free ones, where `S = sum w`. With `S` kept as an extra
//! variable, every working set defines an equality-constrained QP in `(w_F, S)`
//! that is solved directly; steps are cut by a ratio test, and constraints with a
//! negative multiplier are released one at a time.

use nalgebra::{DMatrix, DVector};

use crate::error::{AgalError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Bound {
    Free,
    Lower,
    Upper,
}

pub(crate) struct ActiveSetOutcome {
    pub w: DVector<f64>,
    pub bounds: Vec<Bound>,
    pub iterations: usize,
}

/// Minimizes `(w - wt)^T H (w - wt)` over the cone starting from feasible `w0`.
pub(crate) fn solve(
    h: &DMatrix<f64>,
    wt: &DVector<f64>,
    cap: f64,
    w0: DVector<f64>,
    max_iterations: usize,
) -> Result<ActiveSetOutcome> {
    let n = wt.len();
    let capped = cap < 1.0;
    let hwt = h * wt;
    let mut w = w0;
    let s0 = w.sum();
    let tiny = 1e-14 * w.amax().max(wt.amax());
    let mut bounds: Vec<Bound> = (0..n)
        .map(|i| {
            if w[i] <= 0.0 {
                Bound::Lower
            } else if capped && w[i] >= cap * s0 - tiny {
                Bound::Upper
            } else {
                Bound::Free
            }
        })
        .collect();
    // the starting point may put more names at the cap than a working set allows
    trim_upper(&mut bounds, cap);

    let lambda_scale = h.diagonal().amax().max(f64::MIN_POSITIVE);
    let mult_tol = 1e-11 * lambda_scale * wt.amax().max(f64::MIN_POSITIVE);

    for iter in 0..max_iterations {
        let target = equality_solution(h, &hwt, &bounds, cap)?;
        let p = &target - &w;
        let step_scale = target.amax().max(w.amax()).max(f64::MIN_POSITIVE);
        if p.amax() > 1e-13 * step_scale {
            let (alpha, blocking) = ratio_test(&w, &p, &bounds, cap);
            w.axpy(alpha, &p, 1.0);
            if let Some((i, b)) = blocking {
                if b == Bound::Lower {
                    w[i] = 0.0;
                }
                bounds[i] = b;
                if b == Bound::Upper {
                    trim_upper(&mut bounds, cap);
                }
                continue;
            }
            w = target;
        }
        // stationary on the working set: check multipliers
        let g = 2.0 * (h * &w - &hwt);
        let m = cap_multiplier(&g, &bounds, cap);
        let mut worst: Option<(usize, f64)> = None;
        for i in 0..n {
            let mult = match bounds[i] {
                Bound::Free => continue,
                Bound::Lower => g[i] - m,
                Bound::Upper => m - g[i],
            };
            if mult < -mult_tol && worst.is_none_or(|(_, v)| mult < v) {
                worst = Some((i, mult));
            }
        }
        match worst {
            None => {
                return Ok(ActiveSetOutcome {
                    w,
                    bounds,
                    iterations: iter + 1,
                })
            }
            Some((i, _)) => bounds[i] = Bound::Free,
        }
    }
    Err(AgalError::Convergence {
        iterations: max_iterations,
        residual: f64::NAN,
    })
}

/// Keeps `cap * |U| <= 1`; extra upper-bound entries are released.
fn trim_upper(bounds: &mut [Bound], cap: f64) {
    let mut count = 0usize;
    for b in bounds.iter_mut() {
        if *b == Bound::Upper {
            if cap * (count + 1) as f64 > 1.0 + 1e-12 {
                *b = Bound::Free;
            } else {
                count += 1;
            }
        }
    }
}

/// `m = cap * sum_U mu`; on free coordinates the gradient equals `m`.
fn cap_multiplier(g: &DVector<f64>, bounds: &[Bound], cap: f64) -> f64 {
    let free: Vec<usize> = (0..g.len()).filter(|&i| bounds[i] == Bound::Free).collect();
    if !free.is_empty() {
        return free.iter().map(|&i| g[i]).sum::<f64>() / free.len() as f64;
    }
    let upper: Vec<usize> = (0..g.len()).filter(|&i| bounds[i] == Bound::Upper).collect();
    let d = 1.0 - cap * upper.len() as f64;
    if upper.is_empty() || d.abs() < 1e-12 {
        return 0.0;
    }
    -cap * upper.iter().map(|&i| g[i]).sum::<f64>() / d
}

/// Minimizer of the objective with the working-set constraints held as equalities.
fn equality_solution(h: &DMatrix<f64>, hwt: &DVector<f64>, bounds: &[Bound], cap: f64) -> Result<DVector<f64>> {
    let n = hwt.len();
    let free: Vec<usize> = (0..n).filter(|&i| bounds[i] == Bound::Free).collect();
    let upper: Vec<usize> = (0..n).filter(|&i| bounds[i] == Bound::Upper).collect();
    let nf = free.len();
    let mut w = DVector::zeros(n);

    if upper.is_empty() {
        if nf == 0 {
            return Ok(w);
        }
        let hff = DMatrix::from_fn(nf, nf, |a, b| h[(free[a], free[b])]);
        let rhs = DVector::from_fn(nf, |a, _| hwt[free[a]]);
        let x = match hff.clone().cholesky() {
            Some(ch) => ch.solve(&rhs),
            None => hff
                .lu()
                .solve(&rhs)
                .ok_or_else(|| AgalError::Singular("reduced tracking Hessian".into()))?,
        };
        for (a, &i) in free.iter().enumerate() {
            w[i] = x[a];
        }
        return Ok(w);
    }

    let d = 1.0 - cap * upper.len() as f64;
    if nf == 0 && d.abs() < 1e-12 {
        // exactly 1/cap names at the cap and nothing else: S is unconstrained
        let huu: f64 = upper.iter().flat_map(|&i| upper.iter().map(move |&j| h[(i, j)])).sum();
        let s = (upper.iter().map(|&j| hwt[j]).sum::<f64>() / (cap * huu)).max(0.0);
        for &j in &upper {
            w[j] = cap * s;
        }
        return Ok(w);
    }

    // variables (w_F, S) plus the multiplier of (1 - cap|U|) S - 1^T w_F = 0
    let k = nf + 2;
    let mut kkt = DMatrix::zeros(k, k);
    let mut rhs = DVector::zeros(k);
    for a in 0..nf {
        for b in 0..nf {
            kkt[(a, b)] = h[(free[a], free[b])];
        }
        let cross: f64 = upper.iter().map(|&j| h[(free[a], j)]).sum::<f64>() * cap;
        kkt[(a, nf)] = cross;
        kkt[(nf, a)] = cross;
        kkt[(a, nf + 1)] = -1.0;
        kkt[(nf + 1, a)] = -1.0;
        rhs[a] = hwt[free[a]];
    }
    let mut huu = 0.0;
    for &i in &upper {
        for &j in &upper {
            huu += h[(i, j)];
        }
    }
    kkt[(nf, nf)] = cap * cap * huu;
    kkt[(nf, nf + 1)] = d;
    kkt[(nf + 1, nf)] = d;
    rhs[nf] = cap * upper.iter().map(|&j| hwt[j]).sum::<f64>();
    let z = kkt
        .lu()
        .solve(&rhs)
        .ok_or_else(|| AgalError::Singular("working-set KKT system".into()))?;
    for (a, &i) in free.iter().enumerate() {
        w[i] = z[a];
    }
    for &j in &upper {
        w[j] = cap * z[nf];
    }
    Ok(w)
}

/// Longest step in `[0, 1]` along `p` keeping every non-working constraint.
fn ratio_test(w: &DVector<f64>, p: &DVector<f64>, bounds: &[Bound], cap: f64) -> (f64, Option<(usize, Bound)>) {
    let s = w.sum();
    let ps = p.sum();
    let mut alpha = 1.0;
    let mut blocking = None;
    for i in 0..w.len() {
        if bounds[i] == Bound::Lower {
            continue;
        }
        if p[i] < 0.0 {
            let a = (w[i] / -p[i]).max(0.0);
            if a < alpha {
                alpha = a;
                blocking = Some((i, Bound::Lower));
            }
        }
        if bounds[i] == Bound::Free && cap < 1.0 {
            let rate = p[i] - cap * ps;
            if rate > 0.0 {
                let a = ((cap * s - w[i]) / rate).max(0.0);
                if a < alpha {
                    alpha = a;
                    blocking = Some((i, Bound::Upper));
                }
            }
        }
    }
    (alpha, blocking)
}
