//! Limited-memory BFGS: two-loop recursion over a bounded history of
//! curvature pairs, with a strong-Wolfe cubic line search
//! (c1 = 1e-4, c2 = 0.9). Standard formulation after Nocedal & Wright.

use std::collections::VecDeque;

use ndarray::Array1;

use crate::error::{Error, Result};

pub const WOLFE_C1: f64 = 1e-4;
pub const WOLFE_C2: f64 = 0.9;
const MAX_LINE_SEARCH_EVALS: usize = 30;
const MAX_STEP: f64 = 1e4;

/// Bounded store of `(s, y) = (x_{k+1} - x_k, g_{k+1} - g_k)` pairs.
#[derive(Debug, Clone, Default)]
pub struct LbfgsHistory {
    capacity: usize,
    s: VecDeque<Array1<f64>>,
    y: VecDeque<Array1<f64>>,
    rho: VecDeque<f64>,
}

impl LbfgsHistory {
    pub fn new(capacity: usize) -> Self {
        Self { capacity, s: VecDeque::new(), y: VecDeque::new(), rho: VecDeque::new() }
    }

    pub fn len(&self) -> usize {
        self.s.len()
    }

    pub fn is_empty(&self) -> bool {
        self.s.is_empty()
    }

    pub fn clear(&mut self) {
        self.s.clear();
        self.y.clear();
        self.rho.clear();
    }

    /// Stores a curvature pair; pairs with non-positive or numerically
    /// negligible curvature are skipped to keep the implicit Hessian
    /// approximation positive definite.
    pub fn push(&mut self, s: Array1<f64>, y: Array1<f64>) {
        let sy = s.dot(&y);
        let scale = s.dot(&s).sqrt() * y.dot(&y).sqrt();
        if sy <= 1e-10 * scale.max(1e-300) {
            return;
        }
        if self.s.len() == self.capacity {
            self.s.pop_front();
            self.y.pop_front();
            self.rho.pop_front();
        }
        self.s.push_back(s);
        self.y.push_back(y);
        self.rho.push_back(1.0 / sy);
    }

    /// Two-loop recursion: returns the descent direction `-H_k g` where
    /// `H_k` is the implicit inverse-Hessian approximation, scaled by
    /// `s'y / y'y` from the most recent pair.
    pub fn direction(&self, gradient: &Array1<f64>) -> Array1<f64> {
        let mut q = gradient.clone();
        if self.is_empty() {
            q.mapv_inplace(|v| -v);
            return q;
        }
        let k = self.s.len();
        let mut alpha = vec![0.0; k];
        for i in (0..k).rev() {
            alpha[i] = self.rho[i] * self.s[i].dot(&q);
            q.scaled_add(-alpha[i], &self.y[i]);
        }
        let last = k - 1;
        let gamma = self.s[last].dot(&self.y[last]) / self.y[last].dot(&self.y[last]);
        q *= gamma;
        for i in 0..k {
            let beta = self.rho[i] * self.y[i].dot(&q);
            q.scaled_add(alpha[i] - beta, &self.s[i]);
        }
        q.mapv_inplace(|v| -v);
        q
    }
}

/// Outcome of one accepted line search.
#[derive(Debug, Clone)]
pub struct LineSearchResult {
    pub step: f64,
    pub value: f64,
    pub gradient: Array1<f64>,
    pub evals: usize,
}

/// Finds a step along `direction` satisfying the strong Wolfe conditions
/// (bracket then zoom, cubic interpolation). `objective` must return the
/// value and gradient at `x + alpha * direction`.
///
/// Fails with a descriptive error when `direction` is not a descent
/// direction or the evaluation budget runs out.
pub fn strong_wolfe_search<F>(
    objective: &mut F,
    x: &Array1<f64>,
    f0: f64,
    g0: &Array1<f64>,
    direction: &Array1<f64>,
    initial_step: f64,
) -> Result<LineSearchResult>
where
    F: FnMut(&Array1<f64>) -> Result<(f64, Array1<f64>)>,
{
    let d_phi0 = g0.dot(direction);
    if d_phi0 >= 0.0 {
        return Err(Error::Numeric(format!(
            "line search needs a descent direction (slope {d_phi0:.3e})"
        )));
    }
    let mut evals = 0usize;
    let mut phi = |alpha: f64| -> Result<(f64, Array1<f64>, f64)> {
        let point = x + &(direction * alpha);
        let (value, grad) = objective(&point)?;
        let slope = grad.dot(direction);
        Ok((value, grad, slope))
    };

    let mut alpha_prev = 0.0;
    let mut f_prev = f0;
    let mut slope_prev = d_phi0;
    let mut alpha = initial_step.clamp(1e-16, MAX_STEP);

    while evals < MAX_LINE_SEARCH_EVALS {
        let (f_a, g_a, slope_a) = phi(alpha)?;
        evals += 1;
        if f_a > f0 + WOLFE_C1 * alpha * d_phi0 || (evals > 1 && f_a >= f_prev) {
            return zoom(
                &mut phi, f0, d_phi0, alpha_prev, f_prev, slope_prev, alpha, f_a, slope_a,
                &mut evals,
            );
        }
        if slope_a.abs() <= WOLFE_C2 * d_phi0.abs() {
            return Ok(LineSearchResult { step: alpha, value: f_a, gradient: g_a, evals });
        }
        if slope_a >= 0.0 {
            return zoom(
                &mut phi, f0, d_phi0, alpha, f_a, slope_a, alpha_prev, f_prev, slope_prev,
                &mut evals,
            );
        }
        alpha_prev = alpha;
        f_prev = f_a;
        slope_prev = slope_a;
        alpha = (alpha * 2.0).min(MAX_STEP);
        if alpha >= MAX_STEP {
            return Err(Error::Numeric("line search exceeded the maximum step".into()));
        }
    }
    Err(Error::Numeric("line search exhausted its evaluation budget".into()))
}

#[allow(clippy::too_many_arguments)]
fn zoom<F>(
    phi: &mut F,
    f0: f64,
    d_phi0: f64,
    mut lo: f64,
    mut f_lo: f64,
    mut slope_lo: f64,
    mut hi: f64,
    mut f_hi: f64,
    mut slope_hi: f64,
    evals: &mut usize,
) -> Result<LineSearchResult>
where
    F: FnMut(f64) -> Result<(f64, Array1<f64>, f64)>,
{
    while *evals < MAX_LINE_SEARCH_EVALS {
        let alpha = cubic_interpolate(lo, f_lo, slope_lo, hi, f_hi, slope_hi);
        let (f_a, g_a, slope_a) = phi(alpha)?;
        *evals += 1;
        if f_a > f0 + WOLFE_C1 * alpha * d_phi0 || f_a >= f_lo {
            hi = alpha;
            f_hi = f_a;
            slope_hi = slope_a;
        } else {
            if slope_a.abs() <= WOLFE_C2 * d_phi0.abs() {
                return Ok(LineSearchResult { step: alpha, value: f_a, gradient: g_a, evals: *evals });
            }
            if slope_a * (hi - lo) >= 0.0 {
                hi = lo;
                f_hi = f_lo;
                slope_hi = slope_lo;
            }
            lo = alpha;
            f_lo = f_a;
            slope_lo = slope_a;
        }
        if (hi - lo).abs() < 1e-16 * lo.abs().max(1.0) {
            return Err(Error::Numeric("line search interval collapsed".into()));
        }
    }
    Err(Error::Numeric("line search exhausted its evaluation budget".into()))
}

/// Cubic minimizer of a Hermite interpolant on `[lo, hi]`, clamped away
/// from the interval edges; falls back to bisection when the cubic is
/// ill-conditioned.
fn cubic_interpolate(lo: f64, f_lo: f64, slope_lo: f64, hi: f64, f_hi: f64, slope_hi: f64) -> f64 {
    let d1 = slope_lo + slope_hi - 3.0 * (f_lo - f_hi) / (lo - hi);
    let disc = d1 * d1 - slope_lo * slope_hi;
    let width = hi - lo;
    let mut alpha = if disc >= 0.0 {
        let d2 = disc.sqrt() * width.signum();
        hi - (hi - lo) * (slope_hi + d2 - d1) / (slope_hi - slope_lo + 2.0 * d2)
    } else {
        0.5 * (lo + hi)
    };
    if !alpha.is_finite() {
        alpha = 0.5 * (lo + hi);
    }
    let (a, b) = if lo < hi { (lo, hi) } else { (hi, lo) };
    let margin = 0.1 * (b - a);
    alpha.clamp(a + margin, b - margin)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    /// f(x) = 0.5 x'Ax - b'x with A = diag(1, 10).
    fn quadratic(x: &Array1<f64>) -> Result<(f64, Array1<f64>)> {
        let a = array![1.0, 10.0];
        let b = array![1.0, -2.0];
        let g = &a * x - &b;
        let f = 0.5 * (x[0] * x[0] * a[0] + x[1] * x[1] * a[1]) - b.dot(x);
        Ok((f, g))
    }

    fn rosenbrock(x: &Array1<f64>) -> Result<(f64, Array1<f64>)> {
        let (a, b) = (1.0, 100.0);
        let f = (a - x[0]).powi(2) + b * (x[1] - x[0] * x[0]).powi(2);
        let g = array![
            -2.0 * (a - x[0]) - 4.0 * b * (x[1] - x[0] * x[0]) * x[0],
            2.0 * b * (x[1] - x[0] * x[0]),
        ];
        Ok((f, g))
    }

    fn minimize<F>(mut f: F, x0: Array1<f64>, iters: usize) -> (Array1<f64>, f64, Vec<f64>)
    where
        F: FnMut(&Array1<f64>) -> Result<(f64, Array1<f64>)>,
    {
        let mut history = LbfgsHistory::new(10);
        let mut x = x0;
        let (mut fx, mut g) = f(&x).unwrap();
        let mut values = vec![fx];
        for _ in 0..iters {
            if g.dot(&g).sqrt() < 1e-12 {
                break;
            }
            let dir = history.direction(&g);
            let init = if history.is_empty() { (1.0 / g.dot(&g).sqrt()).min(1.0) } else { 1.0 };
            let res = strong_wolfe_search(&mut f, &x, fx, &g, &dir, init).unwrap();
            let x_new = &x + &(&dir * res.step);
            history.push(&x_new - &x, &res.gradient - &g);
            x = x_new;
            fx = res.value;
            g = res.gradient;
            values.push(fx);
        }
        (x, fx, values)
    }

    #[test]
    fn accepted_steps_satisfy_wolfe_conditions() {
        let x = array![3.0, -4.0];
        let (f0, g0) = quadratic(&x).unwrap();
        let dir = g0.mapv(|v| -v);
        let mut f = quadratic;
        let res = strong_wolfe_search(&mut f, &x, f0, &g0, &dir, 1.0).unwrap();
        let d_phi0 = g0.dot(&dir);
        assert!(res.value <= f0 + WOLFE_C1 * res.step * d_phi0, "sufficient decrease");
        assert!(res.gradient.dot(&dir).abs() <= WOLFE_C2 * d_phi0.abs(), "curvature");
    }

    #[test]
    fn ascent_direction_rejected() {
        let x = array![1.0, 1.0];
        let (f0, g0) = quadratic(&x).unwrap();
        let mut f = quadratic;
        assert!(strong_wolfe_search(&mut f, &x, f0, &g0, &g0.clone(), 1.0).is_err());
    }

    #[test]
    fn quadratic_converges_quickly() {
        let (x, _, values) = minimize(quadratic, array![5.0, 5.0], 30);
        assert!((x[0] - 1.0).abs() < 1e-8);
        assert!((x[1] + 0.2).abs() < 1e-8);
        for pair in values.windows(2) {
            assert!(pair[1] < pair[0] + 1e-15, "non-descending step: {pair:?}");
        }
    }

    #[test]
    fn rosenbrock_reaches_the_valley() {
        let (x, fx, values) = minimize(rosenbrock, array![-1.2, 1.0], 120);
        assert!(fx < 1e-10, "final value {fx}");
        assert!((x[0] - 1.0).abs() < 1e-4);
        assert!((x[1] - 1.0).abs() < 1e-4);
        for pair in values.windows(2) {
            assert!(pair[1] <= pair[0], "loss increased: {pair:?}");
        }
    }

    #[test]
    fn degenerate_curvature_pairs_are_skipped() {
        let mut history = LbfgsHistory::new(4);
        history.push(array![1.0, 0.0], array![-1.0, 0.0]); // s'y < 0
        assert!(history.is_empty());
        history.push(array![0.0, 0.0], array![0.0, 0.0]); // zero pair
        assert!(history.is_empty());
        history.push(array![1.0, 0.0], array![2.0, 0.0]);
        assert_eq!(history.len(), 1);
    }

    #[test]
    fn empty_history_returns_steepest_descent() {
        let history = LbfgsHistory::new(4);
        let g = array![3.0, -4.0];
        assert_eq!(history.direction(&g), array![-3.0, 4.0]);
    }
}
