//! Shared 1-D interpolation and quadrature helpers.
//!
//! Piecewise-linear evaluation/inversion on monotone grids, monotone cubic
//! (PCHIP) interpolation with a periodic boundary, and the discrete
//! second-price cost operator used everywhere a cost curve is derived from a
//! win curve.

/// Index of the cell containing `q`: largest `i` with `xs[i] <= q`, clamped
/// to `[0, xs.len() - 2]`. `xs` must have at least two points.
pub fn cell_index(xs: &[f64], q: f64) -> usize {
    debug_assert!(xs.len() >= 2);
    let i = xs.partition_point(|&x| x <= q);
    i.clamp(1, xs.len() - 1) - 1
}

/// Piecewise-linear evaluation with end-value clamping outside the grid.
pub fn eval_linear(xs: &[f64], ys: &[f64], q: f64) -> f64 {
    if q <= xs[0] {
        return ys[0];
    }
    if q >= xs[xs.len() - 1] {
        return ys[ys.len() - 1];
    }
    let i = cell_index(xs, q);
    let w = (q - xs[i]) / (xs[i + 1] - xs[i]);
    ys[i] + w * (ys[i + 1] - ys[i])
}

/// Invert a non-decreasing piecewise-linear curve: smallest `x` with
/// `y(x) >= target`. The caller guarantees `ys[0] <= target <= ys[last]`.
pub fn invert_linear(xs: &[f64], ys: &[f64], target: f64) -> f64 {
    if target <= ys[0] {
        return xs[0];
    }
    let n = ys.len();
    if target >= ys[n - 1] {
        return xs[n - 1];
    }
    // First cell whose right endpoint reaches the target.
    let i = ys.partition_point(|&y| y < target);
    let (lo, hi) = (i - 1, i);
    let dy = ys[hi] - ys[lo];
    if dy <= 0.0 {
        return xs[lo];
    }
    let w = (target - ys[lo]) / dy;
    xs[lo] + w * (xs[hi] - xs[lo])
}

/// Discrete second-price expected cost on a grid: `f(x) = ∫_0^x u dW(u)`
/// with the indicator convention `f(x) = 0` for `x <= 0`.
///
/// Uses midpoint prices per cell, which makes the induced acquisition cost
/// `f ∘ W^{-1}` piecewise linear and exactly convex. `i_zero` is the index
/// of the grid point `x = 0` (accumulation starts there); points at or below
/// it get zero cost.
pub fn second_price_cost(xs: &[f64], ws: &[f64], i_zero: usize) -> Vec<f64> {
    let n = xs.len();
    let mut f = vec![0.0; n];
    for i in (i_zero + 1)..n {
        let mid = 0.5 * (xs[i - 1] + xs[i]);
        f[i] = f[i - 1] + mid * (ws[i] - ws[i - 1]);
    }
    f
}

/// Fritsch–Carlson style monotone cubic tangents on a uniform grid with
/// periodic boundary. Harmonic-mean rule: zero tangent at local extrema,
/// otherwise `2 / (1/d_{k-1} + 1/d_k)`. The resulting Hermite interpolant
/// never overshoots the knot values.
pub fn pchip_tangents_periodic(ys: &[f64], h: f64) -> Vec<f64> {
    let n = ys.len();
    if n == 1 {
        return vec![0.0];
    }
    let slope = |a: usize, b: usize| (ys[b] - ys[a]) / h;
    (0..n)
        .map(|k| {
            let prev = slope((k + n - 1) % n, k);
            let next = slope(k, (k + 1) % n);
            if prev * next <= 0.0 {
                0.0
            } else {
                2.0 * prev * next / (prev + next)
            }
        })
        .collect()
}

/// Cubic Hermite basis evaluation on `[0, 1]`.
#[inline]
pub fn hermite(u: f64, y0: f64, y1: f64, m0: f64, m1: f64, h: f64) -> f64 {
    let u2 = u * u;
    let u3 = u2 * u;
    let h00 = 2.0 * u3 - 3.0 * u2 + 1.0;
    let h10 = u3 - 2.0 * u2 + u;
    let h01 = -2.0 * u3 + 3.0 * u2;
    let h11 = u3 - u2;
    h00 * y0 + h10 * h * m0 + h01 * y1 + h11 * h * m1
}

/// Periodic PCHIP interpolation over uniform knots `t_k = k * h` covering
/// one period `n * h`.
#[derive(Debug, Clone)]
pub struct PeriodicPchip {
    pub values: Vec<f64>,
    pub tangents: Vec<f64>,
    pub step: f64,
}

impl PeriodicPchip {
    pub fn new(values: Vec<f64>, step: f64) -> Self {
        let tangents = pchip_tangents_periodic(&values, step);
        Self { values, tangents, step }
    }

    pub fn period(&self) -> f64 {
        self.values.len() as f64 * self.step
    }

    pub fn eval(&self, t: f64) -> f64 {
        let n = self.values.len();
        if n == 1 {
            return self.values[0];
        }
        let period = self.period();
        let tt = t.rem_euclid(period);
        let k = ((tt / self.step) as usize).min(n - 1);
        let u = (tt - k as f64 * self.step) / self.step;
        let k1 = (k + 1) % n;
        hermite(u, self.values[k], self.values[k1], self.tangents[k], self.tangents[k1], self.step)
    }

    /// Knot maximum; the no-overshoot property makes this a global bound.
    pub fn max_value(&self) -> f64 {
        self.values.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Force strict monotonicity: running max plus a minimum slope. Returns the
/// largest upward correction applied (0.0 when the input was already
/// strictly increasing at the requested slope).
pub fn enforce_strictly_increasing(ys: &mut [f64], min_step: f64) -> f64 {
    let mut worst: f64 = 0.0;
    for i in 1..ys.len() {
        let floor = ys[i - 1] + min_step;
        if ys[i] < floor {
            worst = worst.max(floor - ys[i]);
            ys[i] = floor;
        }
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn linear_eval_and_invert_round_trip() {
        let xs = [0.0, 1.0, 2.0, 4.0];
        let ys = [0.0, 1.0, 1.5, 3.0];
        for &q in &[0.0, 0.3, 1.0, 1.7, 3.9, 4.0] {
            let v = eval_linear(&xs, &ys, q);
            let back = invert_linear(&xs, &ys, v);
            assert_abs_diff_eq!(eval_linear(&xs, &ys, back), v, epsilon = 1e-12);
        }
        assert_eq!(eval_linear(&xs, &ys, -1.0), 0.0);
        assert_eq!(eval_linear(&xs, &ys, 9.0), 3.0);
    }

    #[test]
    fn cost_operator_matches_closed_form() {
        // W(x) = 1 - e^-x on [0, 10]: f(x) = 1 - (1 + x) e^-x.
        let n = 4001;
        let xs: Vec<f64> = (0..n).map(|i| 10.0 * i as f64 / (n - 1) as f64).collect();
        let ws: Vec<f64> = xs.iter().map(|&x| 1.0 - (-x).exp()).collect();
        let f = second_price_cost(&xs, &ws, 0);
        let at = |q: f64| eval_linear(&xs, &f, q);
        assert_abs_diff_eq!(at(1.0), 1.0 - 2.0 * (-1.0f64).exp(), epsilon = 1e-6);
        assert_abs_diff_eq!(at(3.0), 1.0 - 4.0 * (-3.0f64).exp(), epsilon = 1e-6);
    }

    #[test]
    fn pchip_stays_within_knots() {
        let p = PeriodicPchip::new(vec![0.0, 1.0, 0.0, 1.0], 1.0);
        let mut t = 0.0;
        while t < 4.0 {
            let v = p.eval(t);
            assert!((-1e-12..=1.0 + 1e-12).contains(&v), "overshoot at {t}: {v}");
            t += 0.01;
        }
        // Periodicity.
        assert_abs_diff_eq!(p.eval(0.25), p.eval(4.25), epsilon = 1e-12);
    }

    #[test]
    fn pchip_reproduces_smooth_signal() {
        let n = 48;
        let h = 0.5;
        let vals: Vec<f64> = (0..n).map(|k| (2.0 * std::f64::consts::PI * k as f64 * h / 24.0).sin()).collect();
        let p = PeriodicPchip::new(vals, h);
        for i in 0..200 {
            let t = 24.0 * i as f64 / 200.0;
            let truth = (2.0 * std::f64::consts::PI * t / 24.0).sin();
            assert!((p.eval(t) - truth).abs() < 5e-3);
        }
    }

    #[test]
    fn strict_enforcement() {
        let mut ys = vec![0.0, 0.5, 0.5, 0.4, 1.0];
        let worst = enforce_strictly_increasing(&mut ys, 1e-9);
        assert!(worst > 0.09);
        for i in 1..ys.len() {
            assert!(ys[i] > ys[i - 1]);
        }
    }
}
