//! Edge of the limiting spectrum and the centering/scaling parameters.
//!
//! Given a discrete population measure, the left edge `rho` of the limiting
//! spectral law of the ridge-regularized ratio is located from the derivative
//! of `x(h) = h + 1/(1 + g2 H1(h))`. The real extension `s(x)` of its Stieltjes
//! transform on `[0, rho)` is then propagated by the first-order ODE
//!
//! ```text
//! s' = H2(g) / (1 - H2(g) zeta),  g = x - 1/(1 + g2 s),  zeta = g2 / (1 + g2 s)^2
//! ```
//!
//! from `s(0)`, which solves `s = H1(-1/(1 + g2 s))` on the stable branch.
//! `beta` solves `beta^2 s'(beta) = 1/g1` and yields `theta1`, `theta2`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measure::{fit_measure, DiscreteMeasure, FitOptions, LpFitReport};
use crate::scalar::{from_usize, lit, to_f64, tol, Real};
use crate::spectral::{build_zgrid, SpectrumView, DEFAULT_GRID_I};

pub const DEFAULT_ODE_STEPS: usize = 2000;
pub const DEFAULT_MARGIN_FRAC: f64 = 1e-3;
pub const DEFAULT_MARGIN_HALVINGS: usize = 6;
const NEWTON_MAX_ITER: usize = 200;
const DENOM_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EdgeParams<T> {
    pub lambda: T,
    pub rho: T,
    pub beta: T,
    pub s_at_beta: T,
    pub s1_at_beta: T,
    pub s2_at_beta: T,
    pub theta1: T,
    pub theta2: T,
    pub is_discrete_edge: bool,
}

/// `s`, `s'`, `s''` on an equally spaced grid over `[0, rho - margin]`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SFunTable<T> {
    pub xs: Vec<T>,
    pub s: Vec<T>,
    pub s1: Vec<T>,
    pub s2: Vec<T>,
    pub lambda: T,
    pub gamma2: T,
    pub measure: DiscreteMeasure<T>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EdgeOptions {
    pub steps: usize,
    /// Initial margin below `rho`, relative to `rho`.
    pub margin_frac: f64,
    /// Times the margin is halved when `beta` is not bracketed.
    pub max_halvings: usize,
}

impl Default for EdgeOptions {
    fn default() -> Self {
        Self {
            steps: DEFAULT_ODE_STEPS,
            margin_frac: DEFAULT_MARGIN_FRAC,
            max_halvings: DEFAULT_MARGIN_HALVINGS,
        }
    }
}

/// Edge of the limiting law: `(rho, is_discrete_edge)`.
pub fn estimate_rho<T: Real>(measure: &DiscreteMeasure<T>, lambda: T, gamma2: T) -> Result<(T, bool)> {
    if !(lambda > T::zero()) {
        return Err(Error::NonPositiveLambda(to_f64(lambda)));
    }
    let bound = measure.h_bound(lambda);
    if gamma2 * measure.w_max() >= T::one() {
        return Ok((bound, true));
    }
    // f(h) = g2 H2 / (1 + g2 H1)^2 - 1 increases from -1 to 1/(g2 w1) - 1 > 0.
    let f = |h: T| -> (T, T) {
        let [h1, h2, h3] = measure.h_all(lambda, h);
        let a = T::one() + gamma2 * h1;
        let val = gamma2 * h2 / (a * a) - T::one();
        let der = lit::<T>(2.0) * gamma2 * (h3 * a - gamma2 * h2 * h2) / (a * a * a);
        (val, der)
    };
    let scale = bound.abs().max(T::one() / measure.sigma_max()).max(lambda);
    let mut delta = scale * lit(1e-10);
    let mut hi: Option<T> = None;
    let mut lo: Option<T> = None;
    for _ in 0..400 {
        let h = bound - delta;
        if h < bound {
            let (v, _) = f(h);
            if !v.is_finite() {
                return Err(Error::NoRoot("edge equation is not finite".into()));
            }
            if v > T::zero() {
                hi = Some(h);
            } else {
                lo = Some(h);
                break;
            }
        }
        delta *= lit(2.0);
    }
    let (Some(lo), Some(hi)) = (lo, hi) else {
        return Err(Error::NoRoot("edge equation has no sign change".into()));
    };
    let h = safeguarded_newton(f, lo, hi, "edge equation")?;
    let h1 = measure.h_func(lambda, h, 1)?;
    Ok((h + T::one() / (T::one() + gamma2 * h1), false))
}

/// Root of an increasing or decreasing `f` on `[a, b]` with `f(a) f(b) <= 0`.
fn safeguarded_newton<T: Real>(f: impl Fn(T) -> (T, T), a: T, b: T, what: &str) -> Result<T> {
    let (fa, _) = f(a);
    let (fb, _) = f(b);
    if fa == T::zero() {
        return Ok(a);
    }
    if fb == T::zero() {
        return Ok(b);
    }
    if fa.signum() == fb.signum() {
        return Err(Error::NoRoot(what.to_string()));
    }
    // Keep f(neg) < 0 < f(pos).
    let (mut neg, mut pos) = if fa < T::zero() { (a, b) } else { (b, a) };
    let mut x = (a + b) / lit(2.0);
    let xtol = tol::<T>(1e-15);
    for _ in 0..NEWTON_MAX_ITER {
        let (v, d) = f(x);
        if v == T::zero() {
            return Ok(x);
        }
        if !v.is_finite() {
            return Err(Error::NonConvergence(what.to_string()));
        }
        if v < T::zero() {
            neg = x;
        } else {
            pos = x;
        }
        let width = (pos - neg).abs();
        if width <= xtol * (T::one() + x.abs()) {
            return Ok(x);
        }
        let step = v / d;
        let cand = x - step;
        let inside = (cand - neg) * (cand - pos) < T::zero();
        x = if d != T::zero() && cand.is_finite() && inside {
            cand
        } else {
            (neg + pos) / lit(2.0)
        };
        if step.abs() <= xtol * (T::one() + x.abs()) && inside {
            return Ok(x);
        }
    }
    Err(Error::NonConvergence(what.to_string()))
}

/// `s(0)`: root of `H1(-1/(1 + g2 s)) = s` with `g2 H2 < (1 + g2 s)^2`.
pub fn solve_s0<T: Real>(measure: &DiscreteMeasure<T>, lambda: T, gamma2: T, init: Option<T>) -> Result<T> {
    let f = |s: T| -> (T, T) {
        let a = T::one() + gamma2 * s;
        let [h1, h2, _] = measure.h_all(lambda, -T::one() / a);
        (h1 - s, h2 * gamma2 / (a * a) - T::one())
    };
    // f(0) = H1(-1) > 0 and f(mean / lambda) < H1(0) - mean / lambda = 0.
    let hi = measure.mean() / lambda;
    let mut s = match init {
        Some(v) if v > T::zero() && v < hi => v,
        _ => hi / lit(2.0),
    };
    let mut converged = false;
    for _ in 0..50 {
        let (v, d) = f(s);
        if d == T::zero() || !v.is_finite() {
            break;
        }
        let next = s - v / d;
        if !(next > T::zero() && next < hi) {
            break;
        }
        let done = (next - s).abs() <= tol::<T>(1e-14) * (T::one() + s);
        s = next;
        if done {
            converged = true;
            break;
        }
    }
    if !converged {
        s = safeguarded_newton(f, T::zero(), hi, "initial value").map_err(|e| Error::InitFailure(e.to_string()))?;
    }
    let a = T::one() + gamma2 * s;
    let h2 = measure.h_func(lambda, -T::one() / a, 2)?;
    if !(gamma2 * h2 < a * a) || (f(s).0).abs() > tol::<T>(1e-9) * (T::one() + s) {
        return Err(Error::InitFailure(format!("root s = {} violates the branch condition", to_f64(s))));
    }
    Ok(s)
}

struct Rhs<'a, T> {
    measure: &'a DiscreteMeasure<T>,
    lambda: T,
    gamma2: T,
}

impl<T: Real> Rhs<'_, T> {
    /// `s'` at `(x, s)`.
    fn first(&self, x: T, s: T) -> Result<T> {
        Ok(self.eval(x, s, false)?.0)
    }

    /// `(s', s'')` at `(x, s)`.
    fn eval(&self, x: T, s: T, second: bool) -> Result<(T, T)> {
        let a = T::one() + self.gamma2 * s;
        let g = x - T::one() / a;
        self.measure.check_domain(self.lambda, g)?;
        let [_, h2, h3] = self.measure.h_all(self.lambda, g);
        let zeta = self.gamma2 / (a * a);
        let den = T::one() - h2 * zeta;
        if den <= lit(DENOM_FLOOR) {
            return Err(Error::SingularDenominator(to_f64(x)));
        }
        let s1 = h2 / den;
        if !second {
            return Ok((s1, T::zero()));
        }
        let b = zeta * s1 + T::one();
        let gs1 = self.gamma2 * s1;
        let s2 = (lit::<T>(2.0) * b * b * h3 - lit::<T>(2.0) * h2 * gs1 * gs1 / (a * a * a)) / den;
        Ok((s1, s2))
    }

    fn rk4(&self, x: T, s: T, h: T) -> Result<T> {
        let half = h / lit(2.0);
        let k1 = self.first(x, s)?;
        let k2 = self.first(x + half, s + half * k1)?;
        let k3 = self.first(x + half, s + half * k2)?;
        let k4 = self.first(x + h, s + h * k3)?;
        Ok(s + h / lit(6.0) * (k1 + lit::<T>(2.0) * (k2 + k3) + k4))
    }
}

/// Integrates `s` on `[0, rho - margin]` with `steps` fixed RK4 steps.
pub fn solve_s_ode<T: Real>(
    measure: &DiscreteMeasure<T>,
    lambda: T,
    gamma2: T,
    rho: T,
    margin: T,
    steps: usize,
    s0_init: Option<T>,
) -> Result<SFunTable<T>> {
    if !(margin > T::zero() && margin < rho) {
        return Err(Error::InvalidModel(format!(
            "margin {} outside (0, rho = {})",
            to_f64(margin),
            to_f64(rho)
        )));
    }
    if steps == 0 {
        return Err(Error::InvalidModel("ODE needs at least one step".into()));
    }
    let rhs = Rhs { measure, lambda, gamma2 };
    let s0 = solve_s0(measure, lambda, gamma2, s0_init)?;
    let end = rho - margin;
    let h = end / from_usize::<T>(steps);
    let mut xs = Vec::with_capacity(steps + 1);
    let mut s = Vec::with_capacity(steps + 1);
    let mut s1 = Vec::with_capacity(steps + 1);
    let mut s2 = Vec::with_capacity(steps + 1);
    let mut cur = s0;
    for i in 0..=steps {
        let x = h * from_usize::<T>(i);
        if i > 0 {
            cur = rhs.rk4(h * from_usize::<T>(i - 1), cur, h)?;
        }
        let (d1, d2) = rhs.eval(x, cur, true)?;
        xs.push(x);
        s.push(cur);
        s1.push(d1);
        s2.push(d2);
    }
    Ok(SFunTable {
        xs,
        s,
        s1,
        s2,
        lambda,
        gamma2,
        measure: measure.clone(),
    })
}

impl<T: Real> SFunTable<T> {
    /// `(s, s', s'')` at `x` in `[xs[i], xs[i+1]]` by a partial RK4 step from node `i`.
    fn at(&self, i: usize, x: T) -> Result<(T, T, T)> {
        let rhs = Rhs {
            measure: &self.measure,
            lambda: self.lambda,
            gamma2: self.gamma2,
        };
        let s = if x == self.xs[i] {
            self.s[i]
        } else {
            rhs.rk4(self.xs[i], self.s[i], x - self.xs[i])?
        };
        let (d1, d2) = rhs.eval(x, s, true)?;
        Ok((s, d1, d2))
    }

    pub fn len(&self) -> usize {
        self.xs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.xs.is_empty()
    }
}

/// Solves `beta^2 s'(beta) = 1/g1` on the table and forms `theta1`, `theta2`.
pub fn solve_beta_theta<T: Real>(table: &SFunTable<T>, gamma1: T, rho: T, lambda: T) -> Result<EdgeParams<T>> {
    let target = T::one() / gamma1;
    let f_at = |i: usize| table.xs[i] * table.xs[i] * table.s1[i] - target;
    let n = table.len();
    if n == 0 {
        return Err(Error::InvalidModel("empty table".into()));
    }
    let crossing = (0..n).find(|&i| f_at(i) >= T::zero());
    let out_of_range = || Error::BetaOutOfRange {
        lo: to_f64(table.xs[0]),
        hi: to_f64(table.xs[n - 1]),
        f_lo: to_f64(f_at(0) + target),
        f_hi: to_f64(f_at(n - 1) + target),
        target: to_f64(target),
    };
    let (beta, s, s1, s2) = match crossing {
        None => return Err(out_of_range()),
        Some(i) if f_at(i) == T::zero() => (table.xs[i], table.s[i], table.s1[i], table.s2[i]),
        Some(0) => return Err(out_of_range()),
        Some(i) => {
            let lo = i - 1;
            let g = |x: T| -> (T, T) {
                match table.at(lo, x) {
                    Ok((_, d1, d2)) => (x * x * d1 - target, lit::<T>(2.0) * x * d1 + x * x * d2),
                    Err(_) => (T::zero() / T::zero(), T::zero()),
                }
            };
            let beta = safeguarded_newton(g, table.xs[lo], table.xs[i], "beta equation")?;
            let (s, d1, d2) = table.at(lo, beta)?;
            (beta, s, d1, d2)
        }
    };
    let theta1 = (T::one() + gamma1 * beta * s) / beta;
    let theta2 = (gamma1 * gamma1 * gamma1 / lit(2.0) * s2 + gamma1 * gamma1 / (beta * beta * beta)).cbrt();
    Ok(EdgeParams {
        lambda,
        rho,
        beta,
        s_at_beta: s,
        s1_at_beta: s1,
        s2_at_beta: s2,
        theta1,
        theta2,
        is_discrete_edge: false,
    })
}

/// `rho`, the `s` table and `beta`/`theta`, shrinking the margin while `beta`
/// is not bracketed.
pub fn edge_params<T: Real>(
    measure: &DiscreteMeasure<T>,
    lambda: T,
    gamma1: T,
    gamma2: T,
    opts: &EdgeOptions,
    s0_init: Option<T>,
) -> Result<EdgeParams<T>> {
    edge_table(measure, lambda, gamma1, gamma2, opts, s0_init).map(|(_, params)| params)
}

/// As [`edge_params`], also returning the table `beta` was read from.
pub fn edge_table<T: Real>(
    measure: &DiscreteMeasure<T>,
    lambda: T,
    gamma1: T,
    gamma2: T,
    opts: &EdgeOptions,
    s0_init: Option<T>,
) -> Result<(SFunTable<T>, EdgeParams<T>)> {
    let (rho, discrete) = estimate_rho(measure, lambda, gamma2)?;
    let mut margin = rho * lit(opts.margin_frac);
    let mut last_err = None;
    for _ in 0..=opts.max_halvings {
        let table = solve_s_ode(measure, lambda, gamma2, rho, margin, opts.steps, s0_init)?;
        match solve_beta_theta(&table, gamma1, rho, lambda) {
            Ok(mut params) => {
                params.is_discrete_edge = discrete;
                return Ok((table, params));
            }
            Err(e @ Error::BetaOutOfRange { .. }) => last_err = Some(e),
            Err(e) => return Err(e),
        }
        margin /= lit(2.0);
    }
    Err(last_err.expect("at least one attempt"))
}

/// Edge parameters of a known population spectrum.
pub fn oracle_edge_params<T: Real>(sigma_eigs: &[T], lambda: T, gamma1: T, gamma2: T) -> Result<EdgeParams<T>> {
    let measure = DiscreteMeasure::from_eigenvalues(sigma_eigs)?;
    edge_params(&measure, lambda, gamma1, gamma2, &EdgeOptions::default(), None)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimateOptions {
    pub fit: FitOptions,
    pub grid_i: usize,
    pub edge: EdgeOptions,
}

impl Default for EstimateOptions {
    fn default() -> Self {
        Self {
            fit: FitOptions::default(),
            grid_i: DEFAULT_GRID_I,
            edge: EdgeOptions::default(),
        }
    }
}

/// Data-driven edge parameters: fit the measure, then run the edge pipeline.
pub fn estimate_edge_params<T: Real>(
    view: &SpectrumView<T>,
    lambda: T,
    opts: &EstimateOptions,
) -> Result<(LpFitReport<T>, EdgeParams<T>)> {
    estimate_edge_table(view, lambda, opts).map(|(fit, _, params)| (fit, params))
}

/// As [`estimate_edge_params`], also returning the `s` table.
pub fn estimate_edge_table<T: Real>(
    view: &SpectrumView<T>,
    lambda: T,
    opts: &EstimateOptions,
) -> Result<(LpFitReport<T>, SFunTable<T>, EdgeParams<T>)> {
    let zgrid = build_zgrid(view, lambda, opts.grid_i)?;
    let fit = fit_measure(view, lambda, &zgrid, &opts.fit)?;
    let g2 = view.gamma2_hat;
    let phi = view.stieltjes_real(-lambda)?;
    let init = T::one() / (lambda * g2 * phi) - T::one() / g2;
    let (table, params) = edge_table(&fit.measure, lambda, view.gamma1_hat, g2, &opts.edge, Some(init))?;
    Ok((fit, table, params))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use num_complex::Complex64;

    fn point(sigma: f64) -> DiscreteMeasure<f64> {
        DiscreteMeasure::new(vec![sigma], vec![1.0]).unwrap()
    }

    fn three_mass() -> DiscreteMeasure<f64> {
        // Atoms 1, 5, 15 with weights 0.5, 0.25, 0.25, scaled to unit mean.
        let w = [0.25, 0.25, 0.5];
        let raw = [15.0, 5.0, 1.0];
        let mean: f64 = raw.iter().zip(&w).map(|(a, b)| a * b).sum();
        DiscreteMeasure::new(raw.iter().map(|a| a / mean).collect(), w.to_vec()).unwrap()
    }

    #[test]
    fn rho_single_atom_closed_form() {
        let (rho, discrete) = estimate_rho(&point(1.0), 1.0, 0.25).unwrap();
        assert!(!discrete);
        assert_abs_diff_eq!(rho, 1.25, epsilon = 1e-10);
        assert!(rho > 1.0);
    }

    #[test]
    fn rho_discrete_edge() {
        let (rho, discrete) = estimate_rho(&point(1.0), 1.0, 2.0).unwrap();
        assert!(discrete);
        assert_eq!(rho, 1.0);
        // Equality goes to the discrete branch.
        let (_, discrete) = estimate_rho(&point(1.0), 1.0, 1.0).unwrap();
        assert!(discrete);
    }

    #[test]
    fn rho_approaches_mp_edge() {
        let (rho, _) = estimate_rho(&point(1.0), 1e-8, 0.25).unwrap();
        assert_abs_diff_eq!(rho, 0.25, epsilon = 1e-4);
    }

    #[test]
    fn s0_golden_ratio() {
        let s0 = solve_s0(&point(1.0), 1.0, 1.0, None).unwrap();
        assert_abs_diff_eq!(s0, (5f64.sqrt() - 1.0) / 2.0, epsilon = 1e-12);
        let s0 = solve_s0(&point(1.0), 1.0, 1.0, Some(0.3)).unwrap();
        assert_abs_diff_eq!(s0, (5f64.sqrt() - 1.0) / 2.0, epsilon = 1e-12);
    }

    fn table(m: &DiscreteMeasure<f64>, lambda: f64, g2: f64) -> SFunTable<f64> {
        let (rho, _) = estimate_rho(m, lambda, g2).unwrap();
        solve_s_ode(m, lambda, g2, rho, 1e-3 * rho, 2000, None).unwrap()
    }

    #[test]
    fn table_derivatives_match_differences() {
        let m = three_mass();
        let t = table(&m, 1.0, 0.5);
        for i in (10..t.len() - 10).step_by(97) {
            let dx = t.xs[i + 1] - t.xs[i - 1];
            let fd1 = (t.s[i + 1] - t.s[i - 1]) / dx;
            let fd2 = (t.s1[i + 1] - t.s1[i - 1]) / dx;
            assert!((fd1 - t.s1[i]).abs() <= 1e-3 * t.s1[i], "s' at {i}");
            assert!((fd2 - t.s2[i]).abs() <= 1e-3 * t.s2[i], "s'' at {i}");
        }
    }

    #[test]
    fn table_positive_and_increasing() {
        for &(g2, lambda) in &[(0.5, 1.0), (2.0, 0.5), (5.0, 1.5)] {
            let t = table(&three_mass(), lambda, g2);
            for v in [&t.s, &t.s1, &t.s2] {
                assert!(v[0] > 0.0);
                assert!(v.windows(2).all(|w| w[1] > w[0]));
            }
        }
    }

    /// Smaller root of `x(h) = x` on the increasing branch below the critical point.
    fn invert_x(m: &DiscreteMeasure<f64>, lambda: f64, g2: f64, x: f64) -> f64 {
        let xh = |h: f64| h + 1.0 / (1.0 + g2 * m.h_func(lambda, h, 1).unwrap());
        let (rho, discrete) = estimate_rho(m, lambda, g2).unwrap();
        let mut hi = if discrete {
            lambda / m.sigma_max() - 1e-13
        } else {
            // critical point: x(h_c) = rho
            let mut lo = -1e3;
            let mut hi = lambda / m.sigma_max() - 1e-13;
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                let xp = 1.0 - g2 * m.h_func(lambda, mid, 2).unwrap() / (1.0 + g2 * m.h_func(lambda, mid, 1).unwrap()).powi(2);
                if xp > 0.0 {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            hi
        };
        assert!(xh(hi) >= x - 1e-9 || x >= rho);
        let mut lo = x - 2.0;
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if xh(mid) < x {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn table_matches_parametric_solution() {
        let m = three_mass();
        for &(g2, lambda) in &[(0.5, 1.0), (2.0, 1.0)] {
            let t = table(&m, lambda, g2);
            for i in (0..t.len()).step_by(211) {
                let h = invert_x(&m, lambda, g2, t.xs[i]);
                let exact = (1.0 / (t.xs[i] - h) - 1.0) / g2;
                assert!((exact - t.s[i]).abs() <= 1e-6 * (1.0 + exact), "x = {}", t.xs[i]);
                // Branch condition along the table.
                let a = 1.0 + g2 * m.h_func(lambda, h, 1).unwrap();
                assert!(1.0 - g2 * m.h_func(lambda, h, 2).unwrap() / (a * a) > 0.0);
            }
        }
    }

    #[test]
    fn s0_matches_fixed_point_of_stieltjes_equation() {
        // phi = sum w tau / (tau ((1 + g2 phi)^-1 - z) + lambda), z = i eta, eta -> 0.
        let m = three_mass();
        let (g2, lambda) = (0.5, 1.0);
        let solve = |eta: f64| -> Complex64 {
            let z = Complex64::new(0.0, eta);
            let mut phi = Complex64::new(0.5, 0.1);
            for _ in 0..20000 {
                let mut next = Complex64::new(0.0, 0.0);
                for (&t, &w) in m.masses.iter().zip(&m.weights) {
                    next += w * t / (t * (1.0 / (1.0 + g2 * phi) - z) + lambda);
                }
                phi = 0.5 * phi + 0.5 * next;
            }
            phi
        };
        let (a, b) = (solve(1e-3), solve(5e-4));
        let extrapolated = 2.0 * b.re - a.re;
        let t = table(&m, lambda, g2);
        assert!((t.s[0] - extrapolated).abs() < 1e-3, "{} vs {}", t.s[0], extrapolated);
    }

    #[test]
    fn beta_at_constructed_node() {
        let m = three_mass();
        let t = table(&m, 1.0, 1.0);
        let i = 1234;
        let gamma1 = 1.0 / (t.xs[i] * t.xs[i] * t.s1[i]);
        let (rho, _) = estimate_rho(&m, 1.0, 1.0).unwrap();
        let p = solve_beta_theta(&t, gamma1, rho, 1.0).unwrap();
        assert!((p.beta - t.xs[i]).abs() <= 1e-12 * t.xs[i]);
        assert!(p.theta2 > 0.0);
    }

    #[test]
    fn beta_residual_and_invariants() {
        for &(g1, g2, lambda) in &[(0.5, 0.5, 1.0), (1.0, 2.0, 0.5), (2.0, 5.0, 1.5), (0.5, 2.0, 1.0)] {
            let eigs: Vec<f64> = (0..100).map(|j| 0.5 + (j % 7) as f64).collect();
            let p = oracle_edge_params(&eigs, lambda, g1, g2).unwrap();
            assert!(p.beta > 0.0 && p.beta < p.rho);
            assert!(p.s1_at_beta > 0.0 && p.s2_at_beta > 0.0 && p.theta2 > 0.0);
            assert!((p.beta * p.beta * p.s1_at_beta - 1.0 / g1).abs() < 1e-8);
            assert_abs_diff_eq!(p.theta1, (1.0 + g1 * p.beta * p.s_at_beta) / p.beta, epsilon = 1e-12);
        }
    }

    #[test]
    fn identity_oracle() {
        let p = oracle_edge_params(&[1.0; 10], 1.0, 0.5, 0.25).unwrap();
        assert_abs_diff_eq!(p.rho, 1.25, epsilon = 1e-10);
        assert!(!p.is_discrete_edge);
    }

    #[test]
    fn case_two_edge_exceeds_pole() {
        let m = three_mass();
        for &g2 in &[0.5, 2.0, 3.9] {
            let (rho, discrete) = estimate_rho(&m, 1.0, g2).unwrap();
            assert!(!discrete);
            assert!(rho > 1.0 / m.sigma_max());
        }
        let (_, discrete) = estimate_rho(&m, 1.0, 4.0).unwrap();
        assert!(discrete);
    }

    #[test]
    fn f32_pipeline_runs() {
        let p = oracle_edge_params(&[2.0f32, 1.0, 1.0, 0.5], 1.0, 0.5, 0.5).unwrap();
        let q = oracle_edge_params(&[2.0f64, 1.0, 1.0, 0.5], 1.0, 0.5, 0.5).unwrap();
        assert!((p.theta1 as f64 - q.theta1).abs() < 1e-3 * q.theta1);
    }
}
