//! Hypothesis and residual SSCP matrices and the ridge-regularized largest root.
//!
//! For the multivariate linear model `Y = B X + noise` with hypothesis
//! `H0: B C = 0`, the hypothesis and residual sums of squares are
//!
//! ```text
//! W1 = (1/n1) Y P1 Y^T,   P1 = X^T (X X^T)^-1 C [C^T (X X^T)^-1 C]^-1 C^T (X X^T)^-1 X
//! W2 = (1/n2) Y P2 Y^T,   P2 = I - X^T (X X^T)^-1 X,      n2 = nT - m
//! ```
//!
//! Neither projector is formed at `nT x nT` scale. With `X X^T = L L^T` and
//! `Q = X^T L^-T`, `P2 = I - Q Q^T` and, writing `G = L^-1 C`,
//! `P1 = Q Q_G Q_G^T Q^T` where `Q_G` is an orthonormal basis of `range(G)`.
//!
//! The largest root of `F = W1 (W2 + lambda I)^-1` is computed from the
//! similar symmetric matrix `(W2 + lambda I)^-1/2 W1 (W2 + lambda I)^-1/2`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{lit, to_f64, tol, Real};

/// Relative threshold on the Cholesky diagonal of a Gram matrix used for rank
/// decisions; above the `sqrt(eps)` noise floor of a Gram factor.
pub const RANK_TOL: f64 = 1e-7;

/// The observed triple `(Y, X, C)`.
#[derive(Debug, Clone)]
pub struct LinearModel<T: Real> {
    /// `p x nT` responses.
    pub y: DMatrix<T>,
    /// `m x nT` design.
    pub x: DMatrix<T>,
    /// `m x n1` constraints.
    pub c: DMatrix<T>,
}

impl<T: Real> LinearModel<T> {
    /// Checks the shape invariants `nT > m >= n1 >= 1`, `p >= 1`.
    ///
    /// Rank conditions are verified by [`build_sscp`], which factorizes anyway.
    pub fn new(y: DMatrix<T>, x: DMatrix<T>, c: DMatrix<T>) -> Result<Self> {
        let (p, nt) = y.shape();
        let (m, nt_x) = x.shape();
        let (m_c, n1) = c.shape();
        if p == 0 {
            return Err(Error::InvalidModel("Y has no rows".into()));
        }
        if nt != nt_x {
            return Err(Error::DimensionMismatch(format!(
                "Y has {nt} columns but X has {nt_x}"
            )));
        }
        if m != m_c {
            return Err(Error::DimensionMismatch(format!(
                "X has {m} rows but C has {m_c}"
            )));
        }
        if !(nt > m && m >= n1 && n1 >= 1) {
            return Err(Error::InvalidModel(format!(
                "need nT > m >= n1 >= 1, got nT={nt}, m={m}, n1={n1}"
            )));
        }
        Ok(Self { y, x, c })
    }

    pub fn p(&self) -> usize {
        self.y.nrows()
    }

    pub fn n_total(&self) -> usize {
        self.y.ncols()
    }

    pub fn m(&self) -> usize {
        self.x.nrows()
    }

    pub fn n1(&self) -> usize {
        self.c.ncols()
    }

    pub fn n2(&self) -> usize {
        self.n_total() - self.m()
    }
}

/// The pair `(W1, W2)` with degrees of freedom and the eigen-decomposition of `W2`.
#[derive(Debug, Clone)]
pub struct SscpPair<T: Real> {
    pub w1: DMatrix<T>,
    pub w2: DMatrix<T>,
    pub n1: usize,
    pub n2: usize,
    /// Eigenvalues of `W2`, nonincreasing, clamped at zero below `tol_eig`.
    pub w2_eigs: Vec<T>,
    /// Eigenvectors of `W2`, column `j` belonging to `w2_eigs[j]`.
    pub w2_vecs: DMatrix<T>,
}

impl<T: Real> SscpPair<T> {
    /// Builds a pair from explicit matrices.
    ///
    /// Both inputs must be symmetric to within `1e-9 * max|entry|`; they are
    /// symmetrized exactly before use.
    pub fn from_matrices(w1: DMatrix<T>, w2: DMatrix<T>, n1: usize, n2: usize) -> Result<Self> {
        let p = w1.nrows();
        if w1.shape() != (p, p) || w2.shape() != (p, p) {
            return Err(Error::DimensionMismatch(format!(
                "W1 is {:?} and W2 is {:?}; both must be p x p",
                w1.shape(),
                w2.shape()
            )));
        }
        if n1 == 0 || n2 == 0 {
            return Err(Error::InvalidModel("degrees of freedom must be positive".into()));
        }
        check_symmetric(&w1, "W1")?;
        check_symmetric(&w2, "W2")?;
        let w1 = symmetrize(&w1);
        let w2 = symmetrize(&w2);
        let (w2_eigs, w2_vecs) = sorted_eigen(&w2)?;
        let scale = w2_eigs.first().copied().unwrap_or_else(T::zero);
        let tol_eig = lit::<T>(1e-10) * (scale + T::one());
        let mut clamped = Vec::with_capacity(p);
        for &e in &w2_eigs {
            if e < -tol_eig {
                return Err(Error::InvalidModel(format!(
                    "W2 is not positive semidefinite (eigenvalue {})",
                    to_f64(e)
                )));
            }
            clamped.push(if e < tol_eig { T::zero() } else { e });
        }
        Ok(Self {
            w1,
            w2,
            n1,
            n2,
            w2_eigs: clamped,
            w2_vecs,
        })
    }

    pub fn p(&self) -> usize {
        self.w1.nrows()
    }
}

/// The `k` largest eigenvalues of `F_lambda`.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct LargestRootResult<T> {
    pub lambda: T,
    pub ell_max: T,
    pub top_k: Vec<T>,
}

fn check_symmetric<T: Real>(a: &DMatrix<T>, name: &'static str) -> Result<()> {
    let scale = a.amax();
    let limit = lit::<T>(1e-9) * scale;
    let n = a.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            if (a[(i, j)] - a[(j, i)]).abs() > limit {
                return Err(Error::InvalidModel(format!("{name} is not symmetric")));
            }
        }
    }
    Ok(())
}

pub(crate) fn symmetrize<T: Real>(a: &DMatrix<T>) -> DMatrix<T> {
    (a + a.transpose()) * lit::<T>(0.5)
}

/// Symmetric eigen-decomposition sorted by nonincreasing eigenvalue.
pub(crate) fn sorted_eigen<T: Real>(a: &DMatrix<T>) -> Result<(Vec<T>, DMatrix<T>)> {
    let n = a.nrows();
    if n == 0 {
        return Ok((Vec::new(), DMatrix::zeros(0, 0)));
    }
    let eig = SymmetricEigen::try_new(a.clone(), T::default_epsilon(), 0)
        .ok_or_else(|| Error::EigenFailure("symmetric QR iteration did not converge".into()))?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| {
        eig.eigenvalues[j]
            .partial_cmp(&eig.eigenvalues[i])
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    if order.iter().any(|&i| !eig.eigenvalues[i].is_finite()) {
        return Err(Error::EigenFailure("non-finite eigenvalue".into()));
    }
    let vals = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vecs = DMatrix::from_fn(n, n, |r, c| eig.eigenvectors[(r, order[c])]);
    Ok((vals, vecs))
}

/// Symmetric eigenvalues only, nonincreasing.
pub(crate) fn sorted_eigenvalues<T: Real>(a: &DMatrix<T>) -> Result<Vec<T>> {
    if a.nrows() == 0 {
        return Ok(Vec::new());
    }
    let vals = a.clone().symmetric_eigenvalues();
    let mut v: Vec<T> = vals.iter().copied().collect();
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::EigenFailure("non-finite eigenvalue".into()));
    }
    v.sort_by(|a, b| b.partial_cmp(a).unwrap_or(std::cmp::Ordering::Equal));
    Ok(v)
}

/// Cholesky factor of the Gram matrix `a^T a`, or `None` when the columns of
/// `a` are numerically dependent (`min L_ii <= RANK_TOL * max L_ii`).
fn gram_cholesky<T: Real>(gram: DMatrix<T>) -> Option<DMatrix<T>> {
    let l = gram.cholesky()?.unpack();
    let diag: Vec<T> = (0..l.nrows()).map(|i| l[(i, i)]).collect();
    let top = diag.iter().copied().fold(T::zero(), |a, b| a.max(b));
    let low = diag.iter().copied().fold(top, |a, b| a.min(b));
    (top > T::zero() && low > tol::<T>(RANK_TOL) * top).then_some(l)
}

/// Builds `(W1, W2)` from a linear model.
pub fn build_sscp<T: Real>(model: &LinearModel<T>) -> Result<SscpPair<T>> {
    let n1 = model.n1();
    let n2 = model.n2();

    // X X^T = L L^T; Q = X^T L^-T has orthonormal columns spanning the rows of X.
    let l = gram_cholesky(&model.x * model.x.transpose()).ok_or(Error::RankDeficient("X"))?;
    if gram_cholesky(model.c.transpose() * &model.c).is_none() {
        return Err(Error::RankDeficient("C"));
    }
    let qt = l.solve_lower_triangular(&model.x).ok_or(Error::RankDeficient("X"))?;

    // G = L^-1 C, so C^T (X X^T)^-1 C = G^T G = M M^T and Q_G = G M^-T.
    let g = l.solve_lower_triangular(&model.c).ok_or(Error::RankDeficient("X"))?;
    let mchol = (g.transpose() * &g).cholesky().ok_or(Error::NotEstimable)?;
    let qg = mchol
        .l()
        .solve_lower_triangular(&g.transpose())
        .ok_or(Error::NotEstimable)?
        .transpose();

    let yq = &model.y * qt.transpose();
    let resid = &model.y - &yq * &qt;
    let hyp = &yq * qg;

    let w1 = symmetrize(&(&hyp * hyp.transpose())) / crate::scalar::from_usize::<T>(n1);
    let w2 = symmetrize(&(&resid * resid.transpose())) / crate::scalar::from_usize::<T>(n2);
    SscpPair::from_matrices(w1, w2, n1, n2)
}

/// The `k` largest eigenvalues of `W1 (W2 + lambda I)^-1`.
///
/// Uses the stored eigenvectors of `W2`: with `W2 = V D V^T`, the spectrum of
/// `F_lambda` equals that of `(D + lambda)^-1/2 V^T W1 V (D + lambda)^-1/2`.
pub fn largest_root<T: Real>(sscp: &SscpPair<T>, lambda: T, k: usize) -> Result<LargestRootResult<T>> {
    if !(lambda > T::zero()) {
        return Err(Error::NonPositiveLambda(to_f64(lambda)));
    }
    let p = sscp.p();
    let kmax = p.min(sscp.n1);
    if k == 0 || k > kmax {
        return Err(Error::InvalidModel(format!(
            "k must lie in 1..={kmax}, got {k}"
        )));
    }
    let v = &sscp.w2_vecs;
    let inner = v.transpose() * &sscp.w1 * v;
    let scale: DVector<T> = DVector::from_iterator(
        p,
        sscp.w2_eigs.iter().map(|&d| T::one() / (d + lambda).sqrt()),
    );
    let s = DMatrix::from_fn(p, p, |i, j| inner[(i, j)] * scale[i] * scale[j]);
    let vals = sorted_eigenvalues(&symmetrize(&s))?;
    let top_k: Vec<T> = vals
        .into_iter()
        .take(k)
        .map(|x| if x < T::zero() { T::zero() } else { x })
        .collect();
    Ok(LargestRootResult {
        lambda,
        ell_max: top_k[0],
        top_k,
    })
}

/// Inverse square root `(W2 + lambda I)^-1/2` as a dense matrix.
pub fn ridge_inverse_sqrt<T: Real>(sscp: &SscpPair<T>, lambda: T) -> DMatrix<T> {
    let v = &sscp.w2_vecs;
    let p = sscp.p();
    let mut scaled = v.clone();
    for j in 0..p {
        let f = T::one() / (sscp.w2_eigs[j] + lambda).sqrt();
        for i in 0..p {
            scaled[(i, j)] *= f;
        }
    }
    &scaled * v.transpose()
}
