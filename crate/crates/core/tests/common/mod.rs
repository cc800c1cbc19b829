//! Independent reference implementations shared by the integration tests.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Brute-force tracking QP: every assignment of each coordinate to
/// {zero, free, at cap} is solved as a dense equality-constrained QP and the
/// best feasible candidate is kept. Returns `(w, objective)` before rescaling.
pub fn enumerate_tracking(c: &DMatrix<f64>, wt: &DVector<f64>, cap: f64) -> Option<(DVector<f64>, f64)> {
    let n = wt.len();
    let states = if cap < 1.0 { 3usize } else { 2 };
    let total = states.pow(n as u32);
    let mut best: Option<(DVector<f64>, f64)> = None;
    for code in 0..total {
        let mut rows: Vec<DVector<f64>> = Vec::new();
        let mut x = code;
        for i in 0..n {
            match x % states {
                0 => {}
                1 => rows.push(DVector::from_fn(n, |j, _| if j == i { 1.0 } else { 0.0 })),
                _ => rows.push(DVector::from_fn(n, |j, _| if j == i { 1.0 - cap } else { -cap })),
            }
            x /= states;
        }
        let m = rows.len();
        let mut k = DMatrix::zeros(n + m, n + m);
        k.view_mut((0, 0), (n, n)).copy_from(&(c * 2.0));
        for (r, a) in rows.iter().enumerate() {
            for j in 0..n {
                k[(n + r, j)] = a[j];
                k[(j, n + r)] = a[j];
            }
        }
        let mut rhs = DVector::zeros(n + m);
        rhs.rows_mut(0, n).copy_from(&(c * wt * 2.0));
        let Some(sol) = k.lu().solve(&rhs) else { continue };
        let w = sol.rows(0, n).into_owned();
        if w.iter().any(|v| !v.is_finite()) {
            continue;
        }
        let s = w.sum();
        let scale = w.amax().max(1e-300);
        let feasible = w.iter().all(|v| *v >= -1e-9 * scale && *v <= cap * s + 1e-9 * scale);
        if !feasible {
            continue;
        }
        let d = &w - wt;
        let obj = d.dot(&(c * &d));
        if best.as_ref().is_none_or(|(_, b)| obj < *b) {
            best = Some((w, obj));
        }
    }
    best
}

/// Random well-conditioned SPD matrix.
pub fn random_spd(n: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let a = DMatrix::from_fn(n, n + 2, |_, _| rng.random_range(-1.0..1.0));
    &a * a.transpose() / (n + 2) as f64 + DMatrix::identity(n, n) * 0.02
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Explicit dollar-position simulation: hold `w_i` dollars in asset `i`, grow each
/// position by its factor, report the new fractions.
pub fn dollar_drift(w: &[f64], z: &[f64]) -> Vec<f64> {
    let dollars: Vec<f64> = w.iter().zip(z).map(|(a, b)| 1000.0 * a * b).collect();
    let total: f64 = dollars.iter().sum();
    dollars.iter().map(|d| d / total).collect()
}
