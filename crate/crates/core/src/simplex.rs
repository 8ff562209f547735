//! Dense two-phase tableau simplex.
//!
//! Solves `minimize c^T x` subject to rows `a_i^T x {<=, =, >=} b_i` and
//! `x >= 0`. Phase one minimizes the sum of artificial variables; phase two
//! optimizes the original objective from the feasible basis it leaves behind.
//!
//! After an optimal solve, further `<=` rows can be appended with
//! [`Simplex::add_le_row`] and the tableau re-optimized by dual simplex,
//! which keeps row-generation schemes cheap.
//!
//! Pivoting is Dantzig's rule, falling back to Bland's rule after a run of
//! degenerate pivots.

use crate::error::{Error, Result};
use crate::scalar::{tol, Real};

const MAX_ITER: usize = 100_000;
const DEGENERATE_RUN: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Relation {
    Le,
    Eq,
    Ge,
}

#[derive(Debug, Clone)]
pub struct Constraint<T> {
    pub coeffs: Vec<T>,
    pub relation: Relation,
    pub rhs: T,
}

#[derive(Debug, Clone)]
pub struct LinearProgram<T> {
    pub objective: Vec<T>,
    pub constraints: Vec<Constraint<T>>,
}

impl<T: Real> LinearProgram<T> {
    pub fn new(objective: Vec<T>) -> Self {
        Self {
            objective,
            constraints: Vec::new(),
        }
    }

    pub fn add(&mut self, coeffs: Vec<T>, relation: Relation, rhs: T) {
        debug_assert_eq!(coeffs.len(), self.objective.len());
        self.constraints.push(Constraint {
            coeffs,
            relation,
            rhs,
        });
    }

    pub fn n_vars(&self) -> usize {
        self.objective.len()
    }
}

#[derive(Debug, Clone)]
pub struct LpSolution<T> {
    pub x: Vec<T>,
    pub objective: T,
    pub iterations: usize,
}

/// Solves a linear program from scratch.
pub fn solve<T: Real>(lp: &LinearProgram<T>) -> Result<LpSolution<T>> {
    let mut s = Simplex::new(lp)?;
    s.optimize()?;
    Ok(s.solution())
}

/// Tableau state. Columns are `[original | slack/surplus | artificial]`;
/// artificial columns are dropped once phase one completes.
#[derive(Debug, Clone)]
pub struct Simplex<T> {
    n_orig: usize,
    a: Vec<Vec<T>>,
    b: Vec<T>,
    /// Reduced costs of the phase-two objective.
    c: Vec<T>,
    /// Negated objective value.
    c_rhs: T,
    cost: Vec<T>,
    basis: Vec<usize>,
    n_art: usize,
    iterations: usize,
    optimal: bool,
}

impl<T: Real> Simplex<T> {
    pub fn new(lp: &LinearProgram<T>) -> Result<Self> {
        let n = lp.n_vars();
        let m = lp.constraints.len();
        let n_slack = lp
            .constraints
            .iter()
            .filter(|c| c.relation != Relation::Eq)
            .count();

        // Normalize to nonnegative right-hand sides.
        let mut rows = Vec::with_capacity(m);
        for con in &lp.constraints {
            if con.coeffs.len() != n {
                return Err(Error::DimensionMismatch(format!(
                    "constraint has {} coefficients, program has {n} variables",
                    con.coeffs.len()
                )));
            }
            let (coeffs, rel, rhs) = if con.rhs < T::zero() {
                let flipped = match con.relation {
                    Relation::Le => Relation::Ge,
                    Relation::Ge => Relation::Le,
                    Relation::Eq => Relation::Eq,
                };
                (con.coeffs.iter().map(|&v| -v).collect::<Vec<_>>(), flipped, -con.rhs)
            } else {
                (con.coeffs.clone(), con.relation, con.rhs)
            };
            rows.push((coeffs, rel, rhs));
        }
        let n_art = rows.iter().filter(|r| r.1 != Relation::Le).count();
        let ncols = n + n_slack + n_art;

        let mut a = Vec::with_capacity(m);
        let mut b = Vec::with_capacity(m);
        let mut basis = Vec::with_capacity(m);
        let mut slack_col = n;
        let mut art_col = n + n_slack;
        for (coeffs, rel, rhs) in rows {
            let mut row = vec![T::zero(); ncols];
            row[..n].copy_from_slice(&coeffs);
            match rel {
                Relation::Le => {
                    row[slack_col] = T::one();
                    basis.push(slack_col);
                    slack_col += 1;
                }
                Relation::Ge => {
                    row[slack_col] = -T::one();
                    slack_col += 1;
                    row[art_col] = T::one();
                    basis.push(art_col);
                    art_col += 1;
                }
                Relation::Eq => {
                    row[art_col] = T::one();
                    basis.push(art_col);
                    art_col += 1;
                }
            }
            a.push(row);
            b.push(rhs);
        }
        let mut cost = vec![T::zero(); ncols];
        cost[..n].copy_from_slice(&lp.objective);
        Ok(Self {
            n_orig: n,
            a,
            b,
            c: vec![T::zero(); ncols],
            c_rhs: T::zero(),
            cost,
            basis,
            n_art,
            iterations: 0,
            optimal: false,
        })
    }

    fn ncols(&self) -> usize {
        self.cost.len()
    }

    fn first_art(&self) -> usize {
        self.ncols() - self.n_art
    }

    /// Runs both phases to optimality.
    pub fn optimize(&mut self) -> Result<()> {
        if self.n_art > 0 {
            self.phase_one()?;
        }
        self.load_objective();
        self.primal(self.ncols())?;
        self.optimal = true;
        Ok(())
    }

    fn phase_one(&mut self) -> Result<()> {
        let ncols = self.ncols();
        let first_art = self.first_art();
        // Phase-one reduced costs: minimize the sum of artificials.
        let mut c1 = vec![T::zero(); ncols];
        let mut rhs1 = T::zero();
        for (i, &bv) in self.basis.iter().enumerate() {
            if bv >= first_art {
                for j in 0..ncols {
                    c1[j] -= self.a[i][j];
                }
                rhs1 -= self.b[i];
            }
        }
        for j in first_art..ncols {
            c1[j] += T::one();
        }
        self.c = c1;
        self.c_rhs = rhs1;
        self.primal(ncols)?;
        let infeas = -self.c_rhs;
        let scale = self.b.iter().fold(T::one(), |m, &v| m.max(v.abs()));
        if infeas > tol::<T>(1e-9) * scale {
            return Err(Error::LpInfeasible);
        }
        // Drive remaining (zero-level) artificials out of the basis.
        let eps = tol::<T>(1e-11);
        let mut r = 0;
        while r < self.basis.len() {
            if self.basis[r] >= first_art {
                let q = (0..first_art)
                    .filter(|&j| self.a[r][j].abs() > eps)
                    .max_by(|&i, &j| {
                        self.a[r][i]
                            .abs()
                            .partial_cmp(&self.a[r][j].abs())
                            .unwrap_or(std::cmp::Ordering::Equal)
                    });
                match q {
                    Some(q) => self.pivot(r, q),
                    None => {
                        // Redundant row.
                        self.a.remove(r);
                        self.b.remove(r);
                        self.basis.remove(r);
                        continue;
                    }
                }
            }
            r += 1;
        }
        for row in &mut self.a {
            row.truncate(first_art);
        }
        self.cost.truncate(first_art);
        self.n_art = 0;
        Ok(())
    }

    fn load_objective(&mut self) {
        let ncols = self.ncols();
        let mut c = self.cost.clone();
        let mut rhs = T::zero();
        for (i, &bv) in self.basis.iter().enumerate() {
            let cb = self.cost[bv];
            if cb != T::zero() {
                for j in 0..ncols {
                    c[j] -= cb * self.a[i][j];
                }
                rhs -= cb * self.b[i];
            }
        }
        self.c = c;
        self.c_rhs = rhs;
    }

    fn pivot(&mut self, r: usize, q: usize) {
        let piv = self.a[r][q];
        {
            let row = &mut self.a[r];
            for v in row.iter_mut() {
                *v /= piv;
            }
            row[q] = T::one();
        }
        self.b[r] /= piv;
        let prow = self.a[r].clone();
        let pb = self.b[r];
        for i in 0..self.a.len() {
            if i == r {
                continue;
            }
            let f = self.a[i][q];
            if f != T::zero() {
                let row = &mut self.a[i];
                for (v, &pv) in row.iter_mut().zip(&prow) {
                    *v -= f * pv;
                }
                row[q] = T::zero();
                self.b[i] -= f * pb;
                if self.b[i] < T::zero() && self.b[i] > -tol::<T>(1e-13) {
                    self.b[i] = T::zero();
                }
            }
        }
        let f = self.c[q];
        if f != T::zero() {
            for (v, &pv) in self.c.iter_mut().zip(&prow) {
                *v -= f * pv;
            }
            self.c[q] = T::zero();
            self.c_rhs -= f * pb;
        }
        self.basis[r] = q;
        self.iterations += 1;
    }

    /// Primal simplex over columns `0..limit`.
    fn primal(&mut self, limit: usize) -> Result<()> {
        let opt_tol = tol::<T>(1e-10);
        let piv_tol = tol::<T>(1e-10);
        let mut degenerate = 0usize;
        loop {
            if self.iterations > MAX_ITER {
                return Err(Error::LpIterationLimit);
            }
            let bland = degenerate >= DEGENERATE_RUN;
            let mut q = None;
            let mut best = -opt_tol;
            for j in 0..limit {
                if self.c[j] < best {
                    q = Some(j);
                    if bland {
                        break;
                    }
                    best = self.c[j];
                }
            }
            let Some(q) = q else { return Ok(()) };

            let mut r = None;
            let mut best_ratio = T::zero();
            let mut best_piv = T::zero();
            for i in 0..self.a.len() {
                let aiq = self.a[i][q];
                if aiq > piv_tol {
                    let ratio = self.b[i] / aiq;
                    let better = match r {
                        None => true,
                        Some(ri) => {
                            let tie = (ratio - best_ratio).abs() <= tol::<T>(1e-12) * (T::one() + best_ratio.abs());
                            if tie {
                                if bland {
                                    self.basis[i] < self.basis[ri]
                                } else {
                                    aiq > best_piv
                                }
                            } else {
                                ratio < best_ratio
                            }
                        }
                    };
                    if better {
                        r = Some(i);
                        best_ratio = ratio;
                        best_piv = aiq;
                    }
                }
            }
            let Some(r) = r else { return Err(Error::LpUnbounded) };
            if best_ratio <= tol::<T>(1e-12) {
                degenerate += 1;
            } else {
                degenerate = 0;
            }
            self.pivot(r, q);
        }
    }

    /// Dual simplex: restores primal feasibility while keeping reduced costs nonnegative.
    fn dual(&mut self) -> Result<()> {
        let feas_tol = tol::<T>(1e-11);
        let piv_tol = tol::<T>(1e-10);
        loop {
            if self.iterations > MAX_ITER {
                return Err(Error::LpIterationLimit);
            }
            let mut r = None;
            let mut worst = -feas_tol;
            for i in 0..self.b.len() {
                if self.b[i] < worst {
                    worst = self.b[i];
                    r = Some(i);
                }
            }
            let Some(r) = r else { return Ok(()) };
            let mut q = None;
            let mut best = T::zero();
            let mut best_piv = T::zero();
            for j in 0..self.ncols() {
                let arj = self.a[r][j];
                if arj < -piv_tol {
                    let ratio = self.c[j].max(T::zero()) / (-arj);
                    let better = match q {
                        None => true,
                        Some(_) => {
                            let tie = (ratio - best).abs() <= tol::<T>(1e-12) * (T::one() + best.abs());
                            if tie {
                                -arj > best_piv
                            } else {
                                ratio < best
                            }
                        }
                    };
                    if better {
                        q = Some(j);
                        best = ratio;
                        best_piv = -arj;
                    }
                }
            }
            let Some(q) = q else { return Err(Error::LpInfeasible) };
            self.pivot(r, q);
        }
    }

    /// Appends `coeffs^T x <= rhs` (coefficients over the original variables)
    /// and re-optimizes. Must follow a successful [`Simplex::optimize`].
    pub fn add_le_rows(&mut self, rows: &[(Vec<T>, T)]) -> Result<()> {
        debug_assert!(self.optimal && self.n_art == 0);
        for (coeffs, rhs) in rows {
            if coeffs.len() != self.n_orig {
                return Err(Error::DimensionMismatch("row length".into()));
            }
            let ncols = self.ncols() + 1;
            for row in &mut self.a {
                row.push(T::zero());
            }
            self.c.push(T::zero());
            self.cost.push(T::zero());
            let mut row = vec![T::zero(); ncols];
            row[..self.n_orig].copy_from_slice(coeffs);
            row[ncols - 1] = T::one();
            let mut rb = *rhs;
            // Express in terms of the current nonbasic variables.
            for (i, &bv) in self.basis.iter().enumerate() {
                let f = row[bv];
                if f != T::zero() {
                    for (v, &av) in row.iter_mut().zip(&self.a[i]) {
                        *v -= f * av;
                    }
                    row[bv] = T::zero();
                    rb -= f * self.b[i];
                }
            }
            self.a.push(row);
            self.b.push(rb);
            self.basis.push(ncols - 1);
        }
        self.dual()?;
        // Dual simplex keeps optimality up to round-off; polish with primal.
        self.primal(self.ncols())
    }

    pub fn solution(&self) -> LpSolution<T> {
        let mut x = vec![T::zero(); self.n_orig];
        for (i, &bv) in self.basis.iter().enumerate() {
            if bv < self.n_orig {
                x[bv] = self.b[i];
            }
        }
        LpSolution {
            x,
            objective: -self.c_rhs,
            iterations: self.iterations,
        }
    }

    pub fn iterations(&self) -> usize {
        self.iterations
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn textbook_maximization() {
        // max 3x + 5y s.t. x <= 4, 2y <= 12, 3x + 2y <= 18 -> (2, 6), 36
        let mut lp = LinearProgram::new(vec![-3.0, -5.0]);
        lp.add(vec![1.0, 0.0], Relation::Le, 4.0);
        lp.add(vec![0.0, 2.0], Relation::Le, 12.0);
        lp.add(vec![3.0, 2.0], Relation::Le, 18.0);
        let s = solve(&lp).unwrap();
        assert_abs_diff_eq!(s.x[0], 2.0, epsilon = 1e-10);
        assert_abs_diff_eq!(s.x[1], 6.0, epsilon = 1e-10);
        assert_abs_diff_eq!(s.objective, -36.0, epsilon = 1e-10);
    }

    #[test]
    fn needs_phase_one() {
        // min x + y s.t. x + y >= 2, x - y = 0.5
        let mut lp = LinearProgram::new(vec![1.0, 1.0]);
        lp.add(vec![1.0, 1.0], Relation::Ge, 2.0);
        lp.add(vec![1.0, -1.0], Relation::Eq, 0.5);
        let s = solve(&lp).unwrap();
        assert_abs_diff_eq!(s.objective, 2.0, epsilon = 1e-10);
        assert_abs_diff_eq!(s.x[0], 1.25, epsilon = 1e-10);
    }

    #[test]
    fn infeasible() {
        let mut lp = LinearProgram::new(vec![1.0]);
        lp.add(vec![1.0], Relation::Le, 1.0);
        lp.add(vec![1.0], Relation::Ge, 2.0);
        assert_eq!(solve(&lp).unwrap_err(), Error::LpInfeasible);
    }

    #[test]
    fn unbounded() {
        let mut lp = LinearProgram::new(vec![-1.0, 0.0]);
        lp.add(vec![1.0, -1.0], Relation::Le, 1.0);
        assert_eq!(solve(&lp).unwrap_err(), Error::LpUnbounded);
    }

    #[test]
    fn redundant_equalities() {
        let mut lp = LinearProgram::new(vec![1.0, 2.0]);
        lp.add(vec![1.0, 1.0], Relation::Eq, 1.0);
        lp.add(vec![2.0, 2.0], Relation::Eq, 2.0);
        let s = solve(&lp).unwrap();
        assert_abs_diff_eq!(s.objective, 1.0, epsilon = 1e-10);
    }

    #[test]
    fn added_rows_match_full_solve() {
        // Chebyshev fit of a line to points, rows added after the first solve.
        let pts = [(0.0, 1.0), (1.0, 2.5), (2.0, 2.9), (3.0, 4.2), (4.0, 5.1)];
        let build = |subset: &[usize]| {
            // vars: a+ a- b+ b- t
            let mut lp = LinearProgram::new(vec![0.0, 0.0, 0.0, 0.0, 1.0]);
            for &k in subset {
                let (x, y) = pts[k];
                lp.add(vec![x, -x, 1.0, -1.0, -1.0], Relation::Le, y);
                lp.add(vec![-x, x, -1.0, 1.0, -1.0], Relation::Le, -y);
            }
            lp
        };
        let full = solve(&build(&[0, 1, 2, 3, 4])).unwrap();
        let mut s = Simplex::new(&build(&[0, 4])).unwrap();
        s.optimize().unwrap();
        let mut extra = Vec::new();
        for &k in &[1usize, 2, 3] {
            let (x, y) = pts[k];
            extra.push((vec![x, -x, 1.0, -1.0, -1.0], y));
            extra.push((vec![-x, x, -1.0, 1.0, -1.0], -y));
        }
        s.add_le_rows(&extra).unwrap();
        assert_abs_diff_eq!(s.solution().objective, full.objective, epsilon = 1e-10);
    }
}
