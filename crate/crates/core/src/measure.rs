//! Discrete population spectral measure fitted by linear programming.
//!
//! The population measure is approximated by point masses on a fixed grid
//! `sigma_1..sigma_K` with free weights. Weights are chosen to minimize the
//! largest real or imaginary part of the normalized residuals
//!
//! ```text
//! e_ij = [Q_j(z_i) - sum_k w_k sigma_k^j / (sigma_k lambda phi(z_i) + lambda)^j] / |Q_j(z_i)|
//! ```
//!
//! over the grid points `z_i` and `j = 1, 2`, subject to `w >= 0`, `sum w = 1`.
//! The resulting minimax problem is a linear program in `(w, theta)`.
//!
//! Only a small fraction of the `8I` inequality rows is active at the optimum,
//! so the program is solved by row generation: a subset of rows is optimized,
//! the most violated remaining rows are appended, and the tableau is
//! re-optimized by dual simplex until every row holds. The optimum equals that
//! of the full program.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{cinv, creal, from_usize, lit, to_f64, tol, Cplx, Real};
use crate::simplex::{LinearProgram, Relation, Simplex};
use crate::spectral::{q_from_phi, SpectrumView, ZGrid};

/// Default number of atoms in the mass grid.
pub const DEFAULT_GRID_K: usize = 500;
/// Default truncation exponent: weights below `10^-d / K` are dropped.
pub const DEFAULT_TRUNCATION_D: i32 = 2;

/// Point masses `sigma_1 > ... > sigma_B` with positive weights summing to one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteMeasure<T> {
    pub masses: Vec<T>,
    pub weights: Vec<T>,
}

impl<T: Real> DiscreteMeasure<T> {
    pub fn new(masses: Vec<T>, weights: Vec<T>) -> Result<Self> {
        if masses.is_empty() {
            return Err(Error::EmptyMeasure);
        }
        if masses.len() != weights.len() {
            return Err(Error::DimensionMismatch("masses and weights differ in length".into()));
        }
        if masses.windows(2).any(|w| !(w[0] > w[1])) {
            return Err(Error::InvalidModel("masses must be strictly decreasing".into()));
        }
        if masses.iter().any(|&m| !(m > T::zero())) || weights.iter().any(|&w| !(w > T::zero())) {
            return Err(Error::InvalidModel("masses and weights must be positive".into()));
        }
        let total = weights.iter().fold(T::zero(), |a, &b| a + b);
        if (total - T::one()).abs() > tol::<T>(1e-12) * lit(from_usize::<f64>(masses.len()).max(1.0)) {
            return Err(Error::InvalidModel(format!("weights sum to {}", to_f64(total))));
        }
        Ok(Self { masses, weights })
    }

    /// The spectral measure of a matrix with the given eigenvalues:
    /// uniform weights, duplicates collapsed.
    pub fn from_eigenvalues(eigs: &[T]) -> Result<Self> {
        if eigs.is_empty() {
            return Err(Error::EmptyMeasure);
        }
        let mut sorted: Vec<T> = eigs.to_vec();
        sorted.sort_by(|a, b| b.partial_cmp(a).unwrap_or(std::cmp::Ordering::Equal));
        let total = from_usize::<T>(sorted.len());
        let mut masses: Vec<T> = Vec::new();
        let mut counts: Vec<usize> = Vec::new();
        for e in sorted {
            match masses.last() {
                Some(&last) if (last - e).abs() <= tol::<T>(1e-12) * last.abs() => {
                    *counts.last_mut().expect("paired") += 1;
                }
                _ => {
                    masses.push(e);
                    counts.push(1);
                }
            }
        }
        // count / total is exact for a single atom, so gamma2 * w = 1 is detected exactly.
        let weights = counts.into_iter().map(|c| from_usize::<T>(c) / total).collect();
        Self::new(masses, weights)
    }

    pub fn len(&self) -> usize {
        self.masses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.masses.is_empty()
    }

    /// Largest atom.
    pub fn sigma_max(&self) -> T {
        self.masses[0]
    }

    /// Weight of the largest atom.
    pub fn w_max(&self) -> T {
        self.weights[0]
    }

    /// Upper end `lambda / sigma_max` of the domain of `H_j`.
    pub fn h_bound(&self, lambda: T) -> T {
        lambda / self.sigma_max()
    }

    /// `H_j(h) = sum_k w_k sigma_k^j / (lambda - sigma_k h)^j`.
    pub fn h_func(&self, lambda: T, h: T, j: u8) -> Result<T> {
        self.check_domain(lambda, h)?;
        Ok(self.h_all(lambda, h)[(j.clamp(1, 3) - 1) as usize])
    }

    /// `[H_1(h), H_2(h), H_3(h)]`; the caller guarantees `h < lambda / sigma_max`.
    pub(crate) fn h_all(&self, lambda: T, h: T) -> [T; 3] {
        let mut out = [T::zero(); 3];
        for (&s, &w) in self.masses.iter().zip(&self.weights) {
            let r = s / (lambda - s * h);
            let r2 = r * r;
            out[0] += w * r;
            out[1] += w * r2;
            out[2] += w * r2 * r;
        }
        out
    }

    pub(crate) fn check_domain(&self, lambda: T, h: T) -> Result<()> {
        let bound = self.h_bound(lambda);
        if h >= bound || !h.is_finite() {
            return Err(Error::DomainViolation {
                h: to_f64(h),
                bound: to_f64(bound),
            });
        }
        Ok(())
    }

    /// Mean of the measure.
    pub fn mean(&self) -> T {
        self.masses
            .iter()
            .zip(&self.weights)
            .fold(T::zero(), |a, (&s, &w)| a + s * w)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    /// Number of grid atoms.
    pub k: usize,
    /// Truncation exponent.
    pub d: i32,
    /// Also match second derivatives of `Q1` (ignored when `p / n2 >= 5`).
    pub second_derivative: bool,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            k: DEFAULT_GRID_K,
            d: DEFAULT_TRUNCATION_D,
            second_derivative: false,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LpFitReport<T> {
    pub measure: DiscreteMeasure<T>,
    /// Optimal minimax residual of the linear program.
    pub loss_theta: T,
    pub n_active: usize,
    pub grid_k: usize,
    pub grid_i: usize,
}

/// Equally spaced mass grid on `[l_min, l_1]`, floored at `l_1 / K` when the
/// smallest companion eigenvalue is zero.
pub fn sigma_grid<T: Real>(view: &SpectrumView<T>, k: usize) -> Result<Vec<T>> {
    let top = view.top();
    if !(top > T::zero()) {
        return Err(Error::InvalidModel("spectrum has no positive eigenvalue".into()));
    }
    if k == 0 {
        return Err(Error::InvalidModel("K must be positive".into()));
    }
    let kf = from_usize::<T>(k);
    let bottom = view.bottom();
    let lo = if bottom > T::zero() { bottom } else { top / kf };
    if k == 1 {
        return Ok(vec![top]);
    }
    let step = (top - lo) / from_usize::<T>(k - 1);
    Ok((0..k).map(|i| lo + step * from_usize::<T>(i)).collect())
}

/// Fits the measure on the default equally spaced mass grid.
pub fn fit_measure<T: Real>(
    view: &SpectrumView<T>,
    lambda: T,
    zgrid: &ZGrid<T>,
    opts: &FitOptions,
) -> Result<LpFitReport<T>> {
    let grid = sigma_grid(view, opts.k)?;
    fit_measure_on_grid(view, lambda, zgrid, &grid, opts)
}

/// Dense residual system `e = b - A w`, one row per (point, functional, part).
struct ResidualSystem<T> {
    a: Vec<Vec<T>>,
    b: Vec<T>,
}

impl<T: Real> ResidualSystem<T> {
    fn residual(&self, r: usize, w: &[T]) -> T {
        let dot = self.a[r].iter().zip(w).fold(T::zero(), |acc, (&x, &y)| acc + x * y);
        self.b[r] - dot
    }

    fn len(&self) -> usize {
        self.b.len()
    }
}

fn assemble<T: Real>(
    view: &SpectrumView<T>,
    lambda: T,
    zgrid: &ZGrid<T>,
    grid: &[T],
    second_derivative: bool,
) -> Result<ResidualSystem<T>> {
    let k = grid.len();
    let mut a = Vec::with_capacity(4 * zgrid.len());
    let mut b = Vec::with_capacity(4 * zgrid.len());
    let g2 = view.gamma2_hat;
    let mut push = |target: Cplx<T>, coeffs: Vec<Cplx<T>>| {
        let norm = target.re.hypot(target.im);
        if !(norm > T::zero()) || !norm.is_finite() {
            return;
        }
        let inv = T::one() / norm;
        b.push(target.re * inv);
        a.push(coeffs.iter().map(|c| c.re * inv).collect());
        b.push(target.im * inv);
        a.push(coeffs.iter().map(|c| c.im * inv).collect());
    };
    for (&z, &psi) in zgrid.points.iter().zip(&zgrid.targets) {
        let dphi = view.stieltjes(z, 1)?;
        let (q1, q2) = q_from_phi(g2, lambda, z, psi, dphi)?;
        let mut c1 = Vec::with_capacity(k);
        let mut c2 = Vec::with_capacity(k);
        for &s in grid {
            let u = cinv(psi * (s * lambda) + creal(lambda)) * s;
            c1.push(u);
            c2.push(u * u);
        }
        push(q1, c1);
        push(q2, c2);
        if second_derivative {
            let d2phi = view.stieltjes(z, 2)?;
            let lg = lambda * g2;
            let ip = cinv(psi);
            let q1dd = (dphi * dphi * ip * ip * ip * lit::<T>(2.0) - d2phi * ip * ip) / lg;
            let c3: Vec<Cplx<T>> = grid
                .iter()
                .map(|&s| {
                    let iu = cinv(psi * (s * lambda) + creal(lambda));
                    let sl = s * lambda;
                    (dphi * dphi * iu * iu * iu * (sl * sl * lit::<T>(2.0)) - d2phi * iu * iu * sl) * s
                })
                .collect();
            push(q1dd, c3);
        }
    }
    Ok(ResidualSystem { a, b })
}

/// Fits weights on an explicit mass grid (any order, positive entries).
pub fn fit_measure_on_grid<T: Real>(
    view: &SpectrumView<T>,
    lambda: T,
    zgrid: &ZGrid<T>,
    grid: &[T],
    opts: &FitOptions,
) -> Result<LpFitReport<T>> {
    if zgrid.is_empty() {
        return Err(Error::InvalidModel("empty z grid".into()));
    }
    if grid.is_empty() || grid.iter().any(|&s| !(s > T::zero())) {
        return Err(Error::InvalidModel("mass grid must be nonempty and positive".into()));
    }
    if !(lambda > T::zero()) {
        return Err(Error::NonPositiveLambda(to_f64(lambda)));
    }
    let second = opts.second_derivative && view.gamma2_hat < lit(5.0);
    let sys = assemble(view, lambda, zgrid, grid, second)?;
    let k = grid.len();
    let m = sys.len();
    if m == 0 {
        return Err(Error::DegenerateTransform);
    }

    // Rows to start from: evenly spread plus the worst at uniform weights.
    let uniform = vec![T::one() / from_usize::<T>(k); k];
    let mut by_violation: Vec<(usize, T)> = (0..m).map(|r| (r, sys.residual(r, &uniform).abs())).collect();
    by_violation.sort_by(|x, y| y.1.partial_cmp(&x.1).unwrap_or(std::cmp::Ordering::Equal));
    let mut active = vec![false; m];
    let spread = (2 * k.min(40)).max(8).min(m);
    for i in 0..spread {
        active[i * m / spread] = true;
    }
    for &(r, _) in by_violation.iter().take(16) {
        active[r] = true;
    }

    // theta = cap - t with t >= 0. Any weight vector has residuals below
    // `cap`, so the substitution keeps every right-hand side nonnegative and
    // only the simplex row needs an artificial variable.
    let cap = (0..m)
        .map(|r| sys.b[r].abs() + sys.a[r].iter().fold(T::zero(), |acc, &v| acc.max(v.abs())))
        .fold(T::zero(), |acc, v| acc.max(v))
        + T::one();
    let n_vars = k + 1;
    let mut objective = vec![T::zero(); n_vars];
    objective[k] = -T::one();
    let mut lp = LinearProgram::new(objective);
    let mut sum_row = vec![T::one(); n_vars];
    sum_row[k] = T::zero();
    lp.add(sum_row, Relation::Eq, T::one());
    for r in (0..m).filter(|&r| active[r]) {
        let (pos, neg) = row_pair(&sys, r, cap);
        lp.add(pos.0, Relation::Le, pos.1);
        lp.add(neg.0, Relation::Le, neg.1);
    }
    let mut simplex = Simplex::new(&lp)?;
    simplex.optimize()?;

    let batch = 32;
    loop {
        let sol = simplex.solution();
        let theta = cap - sol.x[k];
        let w = &sol.x[..k];
        let slack = tol::<T>(1e-9) * (T::one() + theta.abs());
        let mut violated: Vec<(usize, T)> = (0..m)
            .filter(|&r| !active[r])
            .filter_map(|r| {
                let e = sys.residual(r, w).abs() - theta;
                (e > slack).then_some((r, e))
            })
            .collect();
        if violated.is_empty() {
            break;
        }
        violated.sort_by(|x, y| y.1.partial_cmp(&x.1).unwrap_or(std::cmp::Ordering::Equal));
        let mut rows = Vec::new();
        for &(r, _) in violated.iter().take(batch) {
            active[r] = true;
            let (pos, neg) = row_pair(&sys, r, cap);
            rows.push(pos);
            rows.push(neg);
        }
        simplex.add_le_rows(&rows)?;
    }

    let sol = simplex.solution();
    let theta = (cap - sol.x[k]).max(T::zero());
    let raw: Vec<T> = sol.x[..k].iter().map(|&w| w.max(T::zero())).collect();
    let measure = truncate_weights(grid, &raw, opts.d)?;
    Ok(LpFitReport {
        n_active: measure.len(),
        measure,
        loss_theta: theta,
        grid_k: k,
        grid_i: zgrid.len(),
    })
}

/// `(a w + t <= b + cap)` and `(-a w + t <= cap - b)` for residual row `r`.
#[allow(clippy::type_complexity)]
fn row_pair<T: Real>(sys: &ResidualSystem<T>, r: usize, cap: T) -> ((Vec<T>, T), (Vec<T>, T)) {
    let k = sys.a[r].len();
    let mut pos = Vec::with_capacity(k + 1);
    pos.extend_from_slice(&sys.a[r]);
    pos.push(T::one());
    let mut neg: Vec<T> = sys.a[r].iter().map(|&v| -v).collect();
    neg.push(T::one());
    ((pos, cap + sys.b[r]), (neg, cap - sys.b[r]))
}

/// Zeroes weights at or below `10^-d / K`, renormalizes, and returns the
/// positive atoms in decreasing order of mass.
pub fn truncate_weights<T: Real>(grid: &[T], weights: &[T], d: i32) -> Result<DiscreteMeasure<T>> {
    let k = grid.len();
    let cut = lit::<T>(10f64.powi(-d)) / from_usize::<T>(k);
    let mut atoms: Vec<(T, T)> = grid
        .iter()
        .zip(weights)
        .filter(|(_, &w)| w > cut)
        .map(|(&s, &w)| (s, w))
        .collect();
    if atoms.is_empty() {
        return Err(Error::EmptyMeasure);
    }
    atoms.sort_by(|x, y| y.0.partial_cmp(&x.0).unwrap_or(std::cmp::Ordering::Equal));
    // Merge coincident grid points, if a caller supplied any.
    let mut masses: Vec<T> = Vec::with_capacity(atoms.len());
    let mut ws: Vec<T> = Vec::with_capacity(atoms.len());
    for (s, w) in atoms {
        if masses.last() == Some(&s) {
            *ws.last_mut().expect("paired") += w;
        } else {
            masses.push(s);
            ws.push(w);
        }
    }
    let total = ws.iter().fold(T::zero(), |a, &b| a + b);
    for w in &mut ws {
        *w /= total;
    }
    DiscreteMeasure::new(masses, ws)
}

/// Largest absolute real/imaginary residual of a weight vector on the full system.
pub fn minimax_loss<T: Real>(
    view: &SpectrumView<T>,
    lambda: T,
    zgrid: &ZGrid<T>,
    grid: &[T],
    weights: &[T],
) -> Result<T> {
    let sys = assemble(view, lambda, zgrid, grid, false)?;
    Ok((0..sys.len()).fold(T::zero(), |m, r| m.max(sys.residual(r, weights).abs())))
}
