//! Euclidean projection onto `K = {w : 0 <= w_i <= cap * sum_j w_j}`.

use nalgebra::DVector;

/// Returns `argmin_{w in K} |w - y|^2`.
///
/// The solution has the form `w_i = min(max(y_i + m, 0), t)` with `t = cap * sum w`
/// and `m = cap * sum_i (y_i + m - t)_+`. The capped coordinates are the top `k` of
/// `y`; for each `k` the pair `(m, t)` solves a piecewise-linear system, and the
/// first `k` whose solution is self-consistent is the projection.
pub fn project_cone(y: &DVector<f64>, cap: f64) -> DVector<f64> {
    let n = y.len();
    if cap >= 1.0 || n == 0 {
        return y.map(|v| v.max(0.0));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| y[b].total_cmp(&y[a]).then(a.cmp(&b)));
    let ys: Vec<f64> = order.iter().map(|&i| y[i]).collect();
    let mut prefix = vec![0.0; n + 1];
    for i in 0..n {
        prefix[i + 1] = prefix[i] + ys[i];
    }
    let scale = ys.iter().fold(0.0f64, |a, v| a.max(v.abs())).max(f64::MIN_POSITIVE);
    let tol = 1e-12 * scale;

    let mut best: Option<(f64, f64)> = None;
    let mut k = 0usize;
    while k < n && cap * (k as f64) < 1.0 {
        let d = 1.0 - cap * k as f64;
        let a = cap * prefix[k] / d;
        let b = cap * k as f64 / d;
        // active rest set is a prefix ys[k..k+j] of the remaining sorted entries
        let mut found = None;
        for j in 0..=(n - k) {
            let pj = prefix[k + j] - prefix[k];
            let t = cap * (pj + j as f64 * a) / (d + cap * j as f64 * b);
            let m = a - b * t;
            let last_in = if j == 0 { f64::INFINITY } else { ys[k + j - 1] + m };
            let first_out = if k + j < n { ys[k + j] + m } else { f64::NEG_INFINITY };
            if last_in >= -tol && first_out <= tol {
                found = Some((m, t));
                break;
            }
        }
        if let Some((m, t)) = found {
            let top_ok = k == 0 || ys[k - 1] + m >= t - tol;
            let next_ok = k == n || ys[k] + m <= t + tol;
            if top_ok && next_ok && t >= -tol {
                best = Some((m, t.max(0.0)));
                break;
            }
        }
        k += 1;
    }
    match best {
        Some((m, t)) => y.map(|v| (v + m).max(0.0).min(t)),
        // only reachable when cap * n == 1 with every coordinate capped: w is a
        // multiple of the unit vector
        None => {
            let s = y.sum() / n as f64;
            DVector::from_element(n, s.max(0.0))
        }
    }
}

/// Largest feasible `w <= v` of the form `min(v_+, t)`, used to build a starting
/// point. `None` when no positive multiple exists (too few positive entries).
pub fn water_fill(v: &DVector<f64>, cap: f64) -> Option<DVector<f64>> {
    let pos = v.map(|x| x.max(0.0));
    if pos.sum() <= 0.0 {
        return None;
    }
    if cap >= 1.0 {
        return Some(pos);
    }
    let mut sorted: Vec<f64> = pos.iter().copied().collect();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let n = sorted.len();
    let total: f64 = sorted.iter().sum();
    let mut head = 0.0;
    for k in 0..n {
        let d = 1.0 - cap * k as f64;
        if d <= 0.0 {
            break;
        }
        let t = cap * (total - head) / d;
        let upper_ok = k == 0 || sorted[k - 1] >= t;
        if upper_ok && sorted[k] <= t && t > 0.0 {
            return Some(pos.map(|x| x.min(t)));
        }
        head += sorted[k];
    }
    None
}
