//! Weighted isotonic (non-decreasing) regression by pool-adjacent-violators.

#[derive(Debug, Clone, PartialEq)]
pub struct IsotonicFit {
    xs: Vec<f64>,
    ys: Vec<f64>,
}

impl IsotonicFit {
    /// Fits a non-decreasing function of `x` to `y` with unit weights.
    pub fn new(x: &[f64], y: &[f64]) -> Self {
        Self::weighted(x, y, &vec![1.0; x.len()])
    }

    pub fn weighted(x: &[f64], y: &[f64], w: &[f64]) -> Self {
        assert!(x.len() == y.len() && y.len() == w.len() && !x.is_empty());
        let mut idx: Vec<usize> = (0..x.len()).collect();
        idx.sort_by(|&a, &b| x[a].total_cmp(&x[b]));

        // pool exact ties in x first so the fit is a function
        let mut px: Vec<f64> = Vec::new();
        let mut py: Vec<f64> = Vec::new();
        let mut pw: Vec<f64> = Vec::new();
        for &i in &idx {
            if px.last() == Some(&x[i]) {
                let k = px.len() - 1;
                py[k] = (py[k] * pw[k] + y[i] * w[i]) / (pw[k] + w[i]);
                pw[k] += w[i];
            } else {
                px.push(x[i]);
                py.push(y[i]);
                pw.push(w[i]);
            }
        }

        // blocks: (mean, weight, count)
        let mut blocks: Vec<(f64, f64, usize)> = Vec::with_capacity(py.len());
        for (v, wt) in py.iter().zip(&pw) {
            blocks.push((*v, *wt, 1));
            while blocks.len() > 1 {
                let (m2, w2, c2) = blocks[blocks.len() - 1];
                let (m1, w1, c1) = blocks[blocks.len() - 2];
                if m1 <= m2 {
                    break;
                }
                blocks.pop();
                let last = blocks.last_mut().unwrap();
                *last = ((m1 * w1 + m2 * w2) / (w1 + w2), w1 + w2, c1 + c2);
            }
        }
        let ys = blocks.iter().flat_map(|(m, _, c)| std::iter::repeat_n(*m, *c)).collect();
        Self { xs: px, ys }
    }

    /// Fitted values at the (sorted, de-duplicated) design points.
    pub fn fitted(&self) -> (&[f64], &[f64]) {
        (&self.xs, &self.ys)
    }

    /// Piecewise-linear interpolation of the fitted points, constant beyond the ends.
    pub fn evaluate(&self, at: f64) -> f64 {
        let n = self.xs.len();
        if at <= self.xs[0] {
            return self.ys[0];
        }
        if at >= self.xs[n - 1] {
            return self.ys[n - 1];
        }
        let j = self.xs.partition_point(|&x| x <= at);
        let (x0, x1) = (self.xs[j - 1], self.xs[j]);
        let (y0, y1) = (self.ys[j - 1], self.ys[j]);
        y0 + (y1 - y0) * (at - x0) / (x1 - x0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn pools_violators() {
        let fit = IsotonicFit::new(&[1.0, 2.0, 3.0, 4.0], &[1.0, 3.0, 2.0, 4.0]);
        assert_eq!(fit.fitted().1, &[1.0, 2.5, 2.5, 4.0]);
        assert_eq!(fit.evaluate(0.0), 1.0);
        assert_eq!(fit.evaluate(10.0), 4.0);
        assert!((fit.evaluate(1.5) - 1.75).abs() < 1e-15);
    }

    #[test]
    fn already_monotone_is_unchanged() {
        let fit = IsotonicFit::new(&[3.0, 1.0, 2.0], &[30.0, 10.0, 20.0]);
        assert_eq!(fit.fitted().1, &[10.0, 20.0, 30.0]);
    }

    #[test]
    fn ties_in_x_are_pooled() {
        let fit = IsotonicFit::new(&[1.0, 1.0, 2.0], &[2.0, 4.0, 5.0]);
        assert_eq!(fit.fitted(), (&[1.0, 2.0][..], &[3.0, 5.0][..]));
    }

    proptest! {
        #[test]
        fn output_is_monotone_and_preserves_mean(
            pts in proptest::collection::vec((-10.0f64..10.0, -10.0f64..10.0), 1..40)
        ) {
            let (x, y): (Vec<f64>, Vec<f64>) = pts.into_iter().unzip();
            let fit = IsotonicFit::new(&x, &y);
            let (_, ys) = fit.fitted();
            prop_assert!(ys.windows(2).all(|w| w[0] <= w[1] + 1e-12));
            let total: f64 = y.iter().sum();
            // each pooled design point carries its multiplicity
            let mut sorted = x.clone();
            sorted.sort_by(f64::total_cmp);
            sorted.dedup();
            let fitted_total: f64 = sorted.iter().zip(ys)
                .map(|(xv, yv)| yv * x.iter().filter(|v| *v == xv).count() as f64)
                .sum();
            prop_assert!((total - fitted_total).abs() < 1e-9);
            let mut grid: Vec<f64> = (0..50).map(|k| -12.0 + 0.5 * k as f64).collect();
            grid.sort_by(f64::total_cmp);
            let vals: Vec<f64> = grid.iter().map(|g| fit.evaluate(*g)).collect();
            prop_assert!(vals.windows(2).all(|w| w[0] <= w[1] + 1e-12));
        }
    }
}
