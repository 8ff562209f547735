//! Empirical Stieltjes transform of the companion residual spectrum.
//!
//! The companion matrix of `W2` has `n2` eigenvalues: the nonzero spectrum of
//! `W2` padded with zeros. Its Stieltjes transform
//!
//! ```text
//! phi(z) = (1/n2) sum_j 1 / (l_j - z)
//! ```
//!
//! drives the population-measure fit through the functionals
//!
//! ```text
//! Q1(z) = z / (lambda g2) + 1 / (lambda g2 phi(z))
//! Q2(z) = 1 / (lambda^2 g2 phi(z)^2) - 1 / (lambda^2 g2 phi'(z))
//! ```
//!
//! with `g2 = p / n2`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::SscpPair;
use crate::scalar::{cabs, cinv, creal, from_usize, lit, to_f64, tol, Cplx, Real};

/// Default number of grid points in the complex plane.
pub const DEFAULT_GRID_I: usize = 500;

const NEWTON_MAX_ITER: usize = 100;
const NEWTON_TOL: f64 = 1e-12;

/// The `n2` companion eigenvalues of `W2` and the aspect ratios.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SpectrumView<T> {
    /// Nonincreasing, length `n2`, all `>= 0`.
    pub eigs: Vec<T>,
    pub n2: usize,
    pub p: usize,
    pub gamma2_hat: T,
    pub gamma1_hat: T,
    /// Index of the first zero entry of `eigs` (number of positive entries).
    n_pos: usize,
}

impl<T: Real> SpectrumView<T> {
    /// Builds the companion spectrum from the (nonincreasing) `p` eigenvalues of `W2`.
    pub fn new(w2_eigs: &[T], p: usize, n1: usize, n2: usize) -> Result<Self> {
        if p == 0 || n1 == 0 || n2 == 0 {
            return Err(Error::InvalidModel("p, n1 and n2 must be positive".into()));
        }
        if w2_eigs.len() != p {
            return Err(Error::DimensionMismatch(format!(
                "expected {p} eigenvalues, got {}",
                w2_eigs.len()
            )));
        }
        let mut eigs: Vec<T> = w2_eigs
            .iter()
            .map(|&e| if e > T::zero() { e } else { T::zero() })
            .collect();
        eigs.sort_by(|a, b| b.partial_cmp(a).unwrap_or(std::cmp::Ordering::Equal));
        eigs.resize(n2, T::zero());
        let n_pos = eigs.iter().take_while(|&&e| e > T::zero()).count();
        Ok(Self {
            eigs,
            n2,
            p,
            gamma2_hat: from_usize::<T>(p) / from_usize::<T>(n2),
            gamma1_hat: from_usize::<T>(p) / from_usize::<T>(n1),
            n_pos,
        })
    }

    pub fn from_sscp(sscp: &SscpPair<T>) -> Result<Self> {
        Self::new(&sscp.w2_eigs, sscp.p(), sscp.n1, sscp.n2)
    }

    /// Largest companion eigenvalue.
    pub fn top(&self) -> T {
        self.eigs.first().copied().unwrap_or_else(T::zero)
    }

    /// Smallest companion eigenvalue.
    pub fn bottom(&self) -> T {
        self.eigs.last().copied().unwrap_or_else(T::zero)
    }

    /// Transform or derivative at a complex point.
    ///
    /// `order` 0 gives `phi`, 1 gives `phi'`, 2 gives `phi''`.
    pub fn stieltjes(&self, z: Cplx<T>, order: u8) -> Result<Cplx<T>> {
        let pole = lit::<T>(1e-14);
        let n_zero = self.n2 - self.n_pos;
        let mut acc = Cplx::new(T::zero(), T::zero());
        let mut add = |l: T, mult: T| -> Result<()> {
            let d = creal(l) - z;
            if cabs(d) <= pole {
                return Err(Error::PoleHit(to_f64(l)));
            }
            let inv = cinv(d);
            let term = match order {
                0 => inv,
                1 => inv * inv,
                _ => inv * inv * inv,
            };
            acc += term * mult;
            Ok(())
        };
        for &l in &self.eigs[..self.n_pos] {
            add(l, T::one())?;
        }
        if n_zero > 0 {
            add(T::zero(), from_usize(n_zero))?;
        }
        let scale = match order {
            0 | 1 => T::one(),
            _ => lit(2.0),
        };
        Ok(acc * (scale / from_usize::<T>(self.n2)))
    }

    /// `phi` and `phi'` in one pass.
    pub(crate) fn phi_and_derivative(&self, z: Cplx<T>) -> Result<(Cplx<T>, Cplx<T>)> {
        let pole = lit::<T>(1e-14);
        let n_zero = self.n2 - self.n_pos;
        let mut f = Cplx::new(T::zero(), T::zero());
        let mut df = f;
        let mut add = |l: T, mult: T| -> Result<()> {
            let d = creal(l) - z;
            if cabs(d) <= pole {
                return Err(Error::PoleHit(to_f64(l)));
            }
            let inv = cinv(d);
            f += inv * mult;
            df += inv * inv * mult;
            Ok(())
        };
        for &l in &self.eigs[..self.n_pos] {
            add(l, T::one())?;
        }
        if n_zero > 0 {
            add(T::zero(), from_usize(n_zero))?;
        }
        let n = from_usize::<T>(self.n2);
        Ok((f / n, df / n))
    }

    /// Transform on the real axis away from the spectrum.
    pub fn stieltjes_real(&self, x: T) -> Result<T> {
        Ok(self.stieltjes(creal(x), 0)?.re)
    }

    /// `(Q1(z), Q2(z))`.
    pub fn q_hats(&self, lambda: T, z: Cplx<T>) -> Result<(Cplx<T>, Cplx<T>)> {
        let (phi, dphi) = self.phi_and_derivative(z)?;
        q_from_phi(self.gamma2_hat, lambda, z, phi, dphi)
    }
}

pub(crate) fn q_from_phi<T: Real>(
    gamma2: T,
    lambda: T,
    z: Cplx<T>,
    phi: Cplx<T>,
    dphi: Cplx<T>,
) -> Result<(Cplx<T>, Cplx<T>)> {
    let tiny = lit::<T>(1e-14);
    if cabs(phi) < tiny || cabs(dphi) < tiny {
        return Err(Error::DegenerateTransform);
    }
    let lg = lambda * gamma2;
    let l2g = lambda * lambda * gamma2;
    let inv_phi = cinv(phi);
    let q1 = z / lg + inv_phi / lg;
    let q2 = inv_phi * inv_phi / l2g - cinv(dphi) / l2g;
    Ok((q1, q2))
}

/// Points `z_i` in the upper half plane with their transform values.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ZGrid<T> {
    pub points: Vec<Cplx<T>>,
    pub targets: Vec<Cplx<T>>,
}

impl<T> ZGrid<T> {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Builds the evaluation grid.
///
/// Target values have real parts evenly spaced on `[phi(1.05 l_1), phi(-lambda)]`
/// and common imaginary part `0.01 / l_1`; each is inverted through `phi`.
pub fn build_zgrid<T: Real>(view: &SpectrumView<T>, lambda: T, count: usize) -> Result<ZGrid<T>> {
    let top = view.top();
    if !(top > T::zero()) {
        return Err(Error::InvalidModel("spectrum has no positive eigenvalue".into()));
    }
    if !(lambda > T::zero()) {
        return Err(Error::NonPositiveLambda(to_f64(lambda)));
    }
    if count == 0 {
        return Err(Error::InvalidModel("grid size must be positive".into()));
    }
    let lo = view.stieltjes_real(top * lit(1.05))?;
    let hi = view.stieltjes_real(-lambda)?;
    let eps = lit::<T>(1e-2) / top;

    let mut points = Vec::with_capacity(count);
    let mut targets = Vec::with_capacity(count);
    let mut prev: Option<Cplx<T>> = None;
    for i in 0..count {
        let a = if count == 1 {
            lo
        } else {
            lo + (hi - lo) * from_usize::<T>(i) / from_usize::<T>(count - 1)
        };
        let target = Cplx::new(a, eps);
        let z = invert(view, target, prev).ok_or(Error::InversionFailure(i))?;
        prev = Some(z);
        points.push(z);
        targets.push(target);
    }
    Ok(ZGrid { points, targets })
}

/// Solves `phi(z) = target` for `z` in the upper half plane.
fn invert<T: Real>(view: &SpectrumView<T>, target: Cplx<T>, warm: Option<Cplx<T>>) -> Option<Cplx<T>> {
    if let Some(z0) = warm {
        if let Some(z) = newton_invert(view, target, z0) {
            return Some(z);
        }
    }
    // Fallback: locate the real part by bisection on the monotone branch of
    // phi outside the spectrum, then lift off the axis to first order.
    if let Some(x) = real_preimage(view, target.re) {
        if let Ok(d) = view.stieltjes(creal(x), 1) {
            let lift = if d.re > T::zero() { target.im / d.re } else { target.im };
            if let Some(z) = newton_invert(view, target, Cplx::new(x, lift)) {
                return Some(z);
            }
        }
    }
    // Large-|z| asymptote phi(z) ~ -1/z.
    newton_invert(view, target, -cinv(target))
}

fn newton_invert<T: Real>(view: &SpectrumView<T>, target: Cplx<T>, z0: Cplx<T>) -> Option<Cplx<T>> {
    let accept = tol::<T>(NEWTON_TOL) * (T::one() + cabs(target));
    let mut z = z0;
    if !(z.im > T::zero()) {
        return None;
    }
    let (mut f, mut df) = view.phi_and_derivative(z).ok()?;
    let mut res = cabs(f - target);
    for _ in 0..NEWTON_MAX_ITER {
        if res <= accept {
            return Some(z);
        }
        let step = (f - target) / df;
        let mut t = T::one();
        let mut improved = false;
        for _ in 0..40 {
            let cand = z - step * t;
            if cand.im > T::zero() && cand.re.is_finite() && cand.im.is_finite() {
                if let Ok((fc, dfc)) = view.phi_and_derivative(cand) {
                    let rc = cabs(fc - target);
                    if rc < res {
                        z = cand;
                        f = fc;
                        df = dfc;
                        res = rc;
                        improved = true;
                        break;
                    }
                }
            }
            t *= lit(0.5);
        }
        if !improved {
            break;
        }
    }
    if res <= accept {
        Some(z)
    } else {
        None
    }
}

/// Real `x` outside the spectrum with `phi(x) = a`, by bisection.
fn real_preimage<T: Real>(view: &SpectrumView<T>, a: T) -> Option<T> {
    let f = |x: T| view.stieltjes_real(x).ok();
    let (mut lo, mut hi);
    if a < T::zero() {
        // phi increases from -inf to 0- on (l_1, inf).
        let top = view.top();
        lo = top;
        let mut step = top.max(T::one());
        hi = top + step;
        while f(hi)? < a {
            step *= lit(2.0);
            hi = top + step;
            if !hi.is_finite() {
                return None;
            }
        }
    } else if a > T::zero() {
        // phi increases from 0+ to +inf on (-inf, l_min).
        let bottom = view.bottom();
        hi = bottom;
        let mut step = view.top().max(T::one());
        lo = bottom - step;
        while f(lo)? > a {
            step *= lit(2.0);
            lo = bottom - step;
            if !lo.is_finite() {
                return None;
            }
        }
    } else {
        return None;
    }
    for _ in 0..200 {
        let mid = (lo + hi) * lit(0.5);
        if mid <= lo || mid >= hi {
            break;
        }
        match f(mid) {
            Some(v) if v < a => lo = mid,
            Some(_) => hi = mid,
            None => return None,
        }
    }
    Some((lo + hi) * lit(0.5))
}
