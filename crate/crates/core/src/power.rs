//! Signal-to-noise estimates and data-driven choice of the ridge parameter.
//!
//! Power under a rank-one alternative with direction prior `D` is governed by
//! `xi(lambda) / theta2(lambda)` with `xi = tr[(W2 + lambda I)^-1 D] / p`.
//! When `D = pi0 I + pi1 Sigma + pi2 Sigma^2` the trace is estimated through
//! the recursion `U_{i+1} = (M_i - lambda U_i) / (lambda phi(-lambda))` with
//! `U_0 = tr[(W2 + lambda I)^-1] / p`, `M_0 = 1`, `M_1 = tr(W2) / p`.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::edge::{estimate_edge_params, EdgeParams, EstimateOptions};
use crate::error::{Error, Result};
use crate::measure::DiscreteMeasure;
use crate::model::SscpPair;
use crate::scalar::{from_usize, lit, to_f64, Real};
use crate::spectral::SpectrumView;

pub const DEFAULT_LAMBDA_GRID: usize = 25;

/// `tr[(W2 + lambda I)^-1 D] / p`.
pub fn xi_explicit<T: Real>(sscp: &SscpPair<T>, lambda: T, d: &DMatrix<T>) -> Result<T> {
    Ok(ExplicitXi::new(sscp, d)?.at(sscp, lambda))
}

/// `diag(V^T D V)` for repeated evaluation of [`xi_explicit`] over `lambda`.
#[derive(Debug, Clone)]
pub struct ExplicitXi<T> {
    weights: Vec<T>,
}

impl<T: Real> ExplicitXi<T> {
    pub fn new(sscp: &SscpPair<T>, d: &DMatrix<T>) -> Result<Self> {
        let p = sscp.p();
        if d.shape() != (p, p) {
            return Err(Error::DimensionMismatch(format!("D is {:?}, expected {p} x {p}", d.shape())));
        }
        let v = &sscp.w2_vecs;
        let dv = d * v;
        let weights = (0..p)
            .map(|k| v.column(k).dot(&dv.column(k)))
            .collect();
        Ok(Self { weights })
    }

    pub fn at(&self, sscp: &SscpPair<T>, lambda: T) -> T {
        let sum = self
            .weights
            .iter()
            .zip(&sscp.w2_eigs)
            .fold(T::zero(), |acc, (&w, &e)| acc + w / (e + lambda));
        sum / from_usize::<T>(sscp.p())
    }
}

/// `[M_0, M_1]` for `r <= 2`.
pub fn spectral_moments<T: Real>(sscp: &SscpPair<T>, r: usize) -> Result<Vec<T>> {
    if r > 2 {
        return Err(Error::UnsupportedOrder(r));
    }
    let m1 = sscp.w2.trace() / from_usize::<T>(sscp.p());
    Ok(vec![T::one(), m1])
}

/// `[U_0, U_1, U_2]` at `lambda`.
pub fn upsilon<T: Real>(view: &SpectrumView<T>, sscp: &SscpPair<T>, lambda: T) -> Result<[T; 3]> {
    if !(lambda > T::zero()) {
        return Err(Error::NonPositiveLambda(to_f64(lambda)));
    }
    let phi = view.stieltjes_real(-lambda)?;
    if phi.abs() < lit(1e-14) {
        return Err(Error::DegenerateTransform);
    }
    let moments = spectral_moments(sscp, 2)?;
    let ratio = from_usize::<T>(view.n2) / from_usize::<T>(view.p);
    let u0 = ratio * (phi - (T::one() - T::one() / ratio) / lambda);
    let u1 = (moments[0] - lambda * u0) / (lambda * phi);
    let u2 = (moments[1] - lambda * u1) / (lambda * phi);
    Ok([u0, u1, u2])
}

/// `pi0 U_0 + pi1 U_1 + pi2 U_2`.
pub fn xi_polynomial<T: Real>(view: &SpectrumView<T>, sscp: &SscpPair<T>, lambda: T, pis: [T; 3]) -> Result<T> {
    let u = upsilon(view, sscp, lambda)?;
    Ok(pis[0] * u[0] + pis[1] * u[1] + pis[2] * u[2])
}

/// Prior on the alternative direction.
#[derive(Debug, Clone, PartialEq)]
pub enum AlternativePrior<T: Real> {
    /// Symmetric positive semidefinite `D`.
    ExplicitD(DMatrix<T>),
    /// `D = pi0 I + pi1 Sigma + pi2 Sigma^2`.
    Polynomial([T; 3]),
}

impl<T: Real> AlternativePrior<T> {
    pub fn identity(p: usize) -> Self {
        Self::ExplicitD(DMatrix::identity(p, p))
    }

    /// `D = Sigma`.
    pub fn sigma() -> Self {
        Self::Polynomial([T::zero(), T::one(), T::zero()])
    }

    pub fn validate(&self, p: usize) -> Result<()> {
        match self {
            Self::ExplicitD(d) => {
                if d.shape() != (p, p) {
                    return Err(Error::InvalidPrior(format!("D is {:?}, expected {p} x {p}", d.shape())));
                }
                let scale = d.amax();
                if (d - d.transpose()).amax() > lit::<T>(1e-9) * scale {
                    return Err(Error::InvalidPrior("D is not symmetric".into()));
                }
                let eigs = d.clone().symmetric_eigenvalues();
                if eigs.iter().any(|&e| e < -lit::<T>(1e-9) * (scale + T::one())) {
                    return Err(Error::InvalidPrior("D is not positive semidefinite".into()));
                }
                Ok(())
            }
            Self::Polynomial(pis) => {
                if pis.iter().any(|x| !x.is_finite()) || pis.iter().all(|&x| x == T::zero()) {
                    return Err(Error::InvalidPrior("polynomial coefficients must be finite and not all zero".into()));
                }
                Ok(())
            }
        }
    }

    /// `pi(sigma) > 0` at every atom of a fitted measure.
    pub fn check_on_measure(&self, measure: &DiscreteMeasure<T>) -> Result<()> {
        if let Self::Polynomial(pis) = self {
            for &s in &measure.masses {
                if !(pis[0] + pis[1] * s + pis[2] * s * s > T::zero()) {
                    return Err(Error::InvalidPrior(format!(
                        "polynomial prior is not positive at fitted atom {}",
                        to_f64(s)
                    )));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SelectOptions {
    pub grid_size: usize,
    /// Overrides `tr(W2) / (50 p)`.
    pub lambda_lo: Option<f64>,
    /// Overrides `5 tr(W2) / p`.
    pub lambda_hi: Option<f64>,
    pub estimate: EstimateOptions,
}

impl Default for SelectOptions {
    fn default() -> Self {
        Self {
            grid_size: DEFAULT_LAMBDA_GRID,
            lambda_lo: None,
            lambda_hi: None,
            estimate: EstimateOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LambdaSelection<T> {
    /// Grid points that were evaluated successfully.
    pub grid: Vec<T>,
    pub xi: Vec<T>,
    pub theta2: Vec<T>,
    pub ratio: Vec<T>,
    pub params: Vec<EdgeParams<T>>,
    pub lambda_opt: T,
    pub index_opt: usize,
    /// Grid points that failed, with the error message.
    pub dropped: Vec<(T, String)>,
}

impl<T: Real> LambdaSelection<T> {
    pub fn params_opt(&self) -> &EdgeParams<T> {
        &self.params[self.index_opt]
    }
}

/// Log-spaced grid of `n` points on `[lo, hi]`.
pub fn log_grid<T: Real>(lo: T, hi: T, n: usize) -> Vec<T> {
    if n == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..n)
        .map(|i| (a + (b - a) * from_usize::<T>(i) / from_usize::<T>(n - 1)).exp())
        .collect()
}

/// Default search interval `[tr(W2)/(50p), 5 tr(W2)/p]`.
pub fn default_lambda_range<T: Real>(sscp: &SscpPair<T>) -> (T, T) {
    let m1 = sscp.w2.trace() / from_usize::<T>(sscp.p());
    (m1 / lit(50.0), m1 * lit(5.0))
}

/// Maximizes `xi / theta2` over a log-spaced grid; ties go to the smaller `lambda`.
pub fn select_lambda<T: Real>(
    view: &SpectrumView<T>,
    sscp: &SscpPair<T>,
    prior: &AlternativePrior<T>,
    opts: &SelectOptions,
) -> Result<LambdaSelection<T>> {
    let mut out = select_lambda_many(view, sscp, std::slice::from_ref(prior), opts)?;
    Ok(out.pop().expect("one prior"))
}

/// [`select_lambda`] for several priors, sharing the edge estimates at each grid point.
pub fn select_lambda_many<T: Real>(
    view: &SpectrumView<T>,
    sscp: &SscpPair<T>,
    priors: &[AlternativePrior<T>],
    opts: &SelectOptions,
) -> Result<Vec<LambdaSelection<T>>> {
    for prior in priors {
        prior.validate(sscp.p())?;
    }
    if opts.grid_size == 0 {
        return Err(Error::InvalidModel("lambda grid must be nonempty".into()));
    }
    let (dlo, dhi) = default_lambda_range(sscp);
    let lo = opts.lambda_lo.map(lit).unwrap_or(dlo);
    let hi = opts.lambda_hi.map(lit).unwrap_or(dhi);
    if !(lo > T::zero() && hi >= lo) {
        return Err(Error::InvalidModel(format!(
            "lambda range [{}, {}] is invalid",
            to_f64(lo),
            to_f64(hi)
        )));
    }
    let grid = log_grid(lo, hi, opts.grid_size);
    let explicit: Vec<Option<ExplicitXi<T>>> = priors
        .iter()
        .map(|prior| match prior {
            AlternativePrior::ExplicitD(d) => ExplicitXi::new(sscp, d).map(Some),
            AlternativePrior::Polynomial(_) => Ok(None),
        })
        .collect::<Result<_>>()?;
    // Per grid point: the edge parameters and one `xi` per prior.
    let evaluate = |lambda: T| -> Result<(EdgeParams<T>, Vec<Result<T>>)> {
        let (fit, params) = estimate_edge_params(view, lambda, &opts.estimate)?;
        let xis = priors
            .iter()
            .zip(&explicit)
            .map(|(prior, e)| match (prior, e) {
                (_, Some(e)) => Ok(e.at(sscp, lambda)),
                (AlternativePrior::Polynomial(pis), None) => {
                    prior.check_on_measure(&fit.measure)?;
                    xi_polynomial(view, sscp, lambda, *pis)
                }
                (AlternativePrior::ExplicitD(_), None) => unreachable!("explicit prior is precomputed"),
            })
            .collect();
        Ok((params, xis))
    };
    let results: Vec<Result<(EdgeParams<T>, Vec<Result<T>>)>> = grid.par_iter().map(|&l| evaluate(l)).collect();

    let mut outs: Vec<LambdaSelection<T>> = priors
        .iter()
        .map(|_| LambdaSelection {
            grid: Vec::new(),
            xi: Vec::new(),
            theta2: Vec::new(),
            ratio: Vec::new(),
            params: Vec::new(),
            lambda_opt: T::zero(),
            index_opt: 0,
            dropped: Vec::new(),
        })
        .collect();
    for (&lambda, res) in grid.iter().zip(results) {
        match res {
            Ok((params, xis)) => {
                for (out, xi) in outs.iter_mut().zip(xis) {
                    match xi {
                        Ok(xi) => {
                            out.grid.push(lambda);
                            out.xi.push(xi);
                            out.theta2.push(params.theta2);
                            out.ratio.push(xi / params.theta2);
                            out.params.push(params);
                        }
                        Err(e @ Error::InvalidPrior(_)) => return Err(e),
                        Err(e) => out.dropped.push((lambda, e.to_string())),
                    }
                }
            }
            Err(e) => {
                log::warn!("lambda = {} dropped: {e}", to_f64(lambda));
                for out in &mut outs {
                    out.dropped.push((lambda, e.to_string()));
                }
            }
        }
    }
    for out in &mut outs {
        if out.grid.is_empty() {
            return Err(Error::AllPointsFailed);
        }
        let mut best = 0;
        for i in 1..out.ratio.len() {
            if out.ratio[i] > out.ratio[best] {
                best = i;
            }
        }
        out.index_opt = best;
        out.lambda_opt = out.grid[best];
    }
    Ok(outs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_distr::{Distribution, StandardNormal};

    fn random_pair(p: usize, n2: usize, seed: u64) -> SscpPair<f64> {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut draw = |r: usize, c: usize| DMatrix::<f64>::from_fn(r, c, |_, _| StandardNormal.sample(&mut rng));
        let z = draw(p, n2);
        let h = draw(p, 3);
        let w2 = &z * z.transpose() / n2 as f64;
        let w1 = &h * h.transpose() / 3.0;
        SscpPair::from_matrices(w1, w2, 3, n2).unwrap()
    }

    #[test]
    fn scalar_xi() {
        let s = SscpPair::from_matrices(DMatrix::from_element(1, 1, 1.0), DMatrix::from_element(1, 1, 2.0), 1, 1).unwrap();
        assert_abs_diff_eq!(xi_explicit(&s, 1.0, &DMatrix::from_element(1, 1, 1.0)).unwrap(), 1.0 / 3.0, epsilon = 1e-15);
    }

    #[test]
    fn xi_matches_dense_inverse() {
        let s = random_pair(20, 30, 1);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2);
        let a = DMatrix::<f64>::from_fn(20, 20, |_, _| StandardNormal.sample(&mut rng));
        let d = &a * a.transpose();
        let lambda = 0.7;
        let inv = (&s.w2 + DMatrix::identity(20, 20) * lambda).try_inverse().unwrap();
        let brute = (inv * &d).trace() / 20.0;
        let xi = xi_explicit(&s, lambda, &d).unwrap();
        assert!((xi - brute).abs() <= 1e-10 * brute.abs());
        // D = I reduces to the eigenvalue sum.
        let eig: f64 = s.w2_eigs.iter().map(|e| 1.0 / (e + lambda)).sum::<f64>() / 20.0;
        assert_abs_diff_eq!(xi_explicit(&s, lambda, &DMatrix::identity(20, 20)).unwrap(), eig, epsilon = 1e-12);
        assert!(xi_explicit(&s, lambda, &DMatrix::identity(3, 3)).is_err());
    }

    #[test]
    fn moments() {
        let s = SscpPair::from_matrices(DMatrix::identity(2, 2), DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![1.0, 3.0])), 1, 2).unwrap();
        assert_eq!(spectral_moments(&s, 2).unwrap(), vec![1.0, 2.0]);
        assert_eq!(spectral_moments(&s, 3).unwrap_err(), Error::UnsupportedOrder(3));
    }

    #[test]
    fn upsilon_zero_is_trace_identity() {
        for &(p, n2) in &[(20, 30), (30, 20), (25, 25)] {
            let s = random_pair(p, n2, p as u64);
            let view = SpectrumView::from_sscp(&s).unwrap();
            let u = upsilon(&view, &s, 0.8).unwrap();
            let exact = xi_explicit(&s, 0.8, &DMatrix::identity(p, p)).unwrap();
            assert!((u[0] - exact).abs() < 1e-12 * exact, "p={p} n2={n2}");
            assert_abs_diff_eq!(xi_polynomial(&view, &s, 0.8, [1.0, 0.0, 0.0]).unwrap(), exact, epsilon = 1e-12);
        }
    }

    #[test]
    fn xi_identity_decreasing_in_lambda() {
        let s = random_pair(15, 10, 9);
        let e = ExplicitXi::new(&s, &DMatrix::identity(15, 15)).unwrap();
        let grid = log_grid(0.01, 10.0, 30);
        assert!(grid.windows(2).all(|w| e.at(&s, w[1]) < e.at(&s, w[0])));
    }

    #[test]
    fn log_grid_endpoints() {
        let g = log_grid(0.1, 10.0, 3);
        assert_abs_diff_eq!(g[0], 0.1, epsilon = 1e-15);
        assert_abs_diff_eq!(g[1], 1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(g[2], 10.0, epsilon = 1e-13);
        assert_eq!(log_grid(0.3, 5.0, 1), vec![0.3]);
    }

    #[test]
    fn prior_validation() {
        assert!(AlternativePrior::<f64>::identity(3).validate(3).is_ok());
        assert!(AlternativePrior::<f64>::identity(3).validate(4).is_err());
        let neg = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![1.0, -1.0]));
        assert!(AlternativePrior::ExplicitD(neg).validate(2).is_err());
        assert!(AlternativePrior::Polynomial([0.0f64, 0.0, 0.0]).validate(2).is_err());
        let m = DiscreteMeasure::new(vec![2.0, 1.0], vec![0.5, 0.5]).unwrap();
        assert!(AlternativePrior::Polynomial([1.0, -1.0, 0.0]).check_on_measure(&m).is_err());
        assert!(AlternativePrior::Polynomial([0.0, 1.0, 0.0]).check_on_measure(&m).is_ok());
    }

    fn small_opts(grid_size: usize) -> SelectOptions {
        let mut o = SelectOptions {
            grid_size,
            ..Default::default()
        };
        o.estimate.fit.k = 60;
        o.estimate.grid_i = 60;
        o
    }

    #[test]
    fn single_point_grid_and_determinism() {
        let s = random_pair(40, 80, 5);
        let view = SpectrumView::from_sscp(&s).unwrap();
        let one = select_lambda(&view, &s, &AlternativePrior::identity(40), &small_opts(1)).unwrap();
        assert_eq!(one.grid.len(), 1);
        assert_eq!(one.lambda_opt, one.grid[0]);
        let a = select_lambda(&view, &s, &AlternativePrior::sigma(), &small_opts(5)).unwrap();
        let b = select_lambda(&view, &s, &AlternativePrior::sigma(), &small_opts(5)).unwrap();
        assert_eq!(a.lambda_opt, b.lambda_opt);
        assert_eq!(a.ratio, b.ratio);
        let max = a.ratio.iter().cloned().fold(f64::MIN, f64::max);
        assert_eq!(a.ratio[a.index_opt], max);
    }

    #[test]
    fn shared_fits_match_separate_calls() {
        let s = random_pair(40, 80, 6);
        let view = SpectrumView::from_sscp(&s).unwrap();
        let priors = [AlternativePrior::identity(40), AlternativePrior::sigma()];
        let many = select_lambda_many(&view, &s, &priors, &small_opts(4)).unwrap();
        for (prior, got) in priors.iter().zip(&many) {
            let one = select_lambda(&view, &s, prior, &small_opts(4)).unwrap();
            assert_eq!(&one, got);
        }
    }
}
