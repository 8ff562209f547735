//! Tracy–Widom (type 1) distribution and the standardized largest-root test.
//!
//! The CDF is tabulated on `[-10, 6]` with step `0.01` (see
//! `tools/gen_tw1_table.py`) and interpolated with a monotone cubic. Beyond the
//! table the tails follow `log F(x) ~ -|x|^3 / 24` on the left and
//! `log(1 - F(x)) ~ -(2/3) x^(3/2)` on the right, matched to the end points.

use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::edge::EdgeParams;
use crate::error::{Error, Result};
use crate::model::LargestRootResult;
use crate::scalar::{from_usize, lit, to_f64, Real};

const TABLE_CSV: &str = include_str!("../data/tw1_cdf.csv");

/// Tabulated TW1 CDF with monotone cubic slopes.
#[derive(Debug, Clone)]
pub struct Tw1Table {
    pub xs: Vec<f64>,
    pub cdf: Vec<f64>,
    slopes: Vec<f64>,
}

impl Tw1Table {
    /// Parses a two-column `x,cdf` CSV with a header line.
    pub fn parse(text: &str) -> Result<Self> {
        let mut xs = Vec::new();
        let mut cdf = Vec::new();
        for (lineno, line) in text.lines().enumerate().skip(1) {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let mut parts = line.split(',');
            let (Some(a), Some(b), None) = (parts.next(), parts.next(), parts.next()) else {
                return Err(Error::Parse(format!("TW1 table line {}: expected two fields", lineno + 1)));
            };
            let x: f64 = a
                .trim()
                .parse()
                .map_err(|e| Error::Parse(format!("TW1 table line {}: {e}", lineno + 1)))?;
            let f: f64 = b
                .trim()
                .parse()
                .map_err(|e| Error::Parse(format!("TW1 table line {}: {e}", lineno + 1)))?;
            xs.push(x);
            cdf.push(f);
        }
        if xs.len() < 3 {
            return Err(Error::Parse("TW1 table needs at least three rows".into()));
        }
        if xs.windows(2).any(|w| w[1] <= w[0]) || cdf.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Parse("TW1 table must be strictly increasing".into()));
        }
        if !(cdf[0] > 0.0 && cdf[cdf.len() - 1] < 1.0) {
            return Err(Error::Parse("TW1 table values must lie in (0, 1)".into()));
        }
        let slopes = pchip_slopes(&xs, &cdf);
        Ok(Self { xs, cdf, slopes })
    }

    pub fn cdf(&self, x: f64) -> f64 {
        let n = self.xs.len();
        let (x0, x1) = (self.xs[0], self.xs[n - 1]);
        if x.is_nan() {
            return f64::NAN;
        }
        if x < x0 {
            let shift = (x.abs().powi(3) - x0.abs().powi(3)) / 24.0;
            return self.cdf[0] * (-shift).exp();
        }
        if x > x1 {
            let shift = 2.0 / 3.0 * (x.powf(1.5) - x1.powf(1.5));
            return 1.0 - (1.0 - self.cdf[n - 1]) * (-shift).exp();
        }
        let i = self.segment(x);
        self.hermite(i, x)
    }

    /// Upper tail `1 - F(x)`, accurate where `F` is close to one.
    pub fn sf(&self, x: f64) -> f64 {
        let n = self.xs.len();
        let x1 = self.xs[n - 1];
        if x > x1 {
            let shift = 2.0 / 3.0 * (x.powf(1.5) - x1.powf(1.5));
            return (1.0 - self.cdf[n - 1]) * (-shift).exp();
        }
        (1.0 - self.cdf(x)).clamp(0.0, 1.0)
    }

    /// Inverse CDF for `u` in `(0, 1)`.
    pub fn quantile(&self, u: f64) -> f64 {
        let n = self.xs.len();
        if !(u > 0.0 && u < 1.0) {
            return if u <= 0.0 { f64::NEG_INFINITY } else { f64::INFINITY };
        }
        if u < self.cdf[0] {
            let x0 = self.xs[0].abs();
            return -(x0.powi(3) - 24.0 * (u / self.cdf[0]).ln()).cbrt();
        }
        if u > self.cdf[n - 1] {
            let x1 = self.xs[n - 1];
            let r = ((1.0 - u) / (1.0 - self.cdf[n - 1])).ln();
            return (x1.powf(1.5) - 1.5 * r).powf(2.0 / 3.0);
        }
        let i = match self.cdf.binary_search_by(|c| c.partial_cmp(&u).expect("finite table")) {
            Ok(i) => return self.xs[i],
            Err(i) => i.clamp(1, n - 1) - 1,
        };
        let (mut lo, mut hi) = (self.xs[i], self.xs[i + 1]);
        for _ in 0..80 {
            let mid = 0.5 * (lo + hi);
            if self.hermite(i, mid) < u {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    fn segment(&self, x: f64) -> usize {
        let n = self.xs.len();
        match self.xs.binary_search_by(|v| v.partial_cmp(&x).expect("finite table")) {
            Ok(i) => i.min(n - 2),
            Err(i) => i.clamp(1, n - 1) - 1,
        }
    }

    fn hermite(&self, i: usize, x: f64) -> f64 {
        let h = self.xs[i + 1] - self.xs[i];
        let t = (x - self.xs[i]) / h;
        let t2 = t * t;
        let t3 = t2 * t;
        let h00 = 2.0 * t3 - 3.0 * t2 + 1.0;
        let h10 = t3 - 2.0 * t2 + t;
        let h01 = -2.0 * t3 + 3.0 * t2;
        let h11 = t3 - t2;
        h00 * self.cdf[i] + h10 * h * self.slopes[i] + h01 * self.cdf[i + 1] + h11 * h * self.slopes[i + 1]
    }
}

/// Fritsch–Carlson slopes for a strictly increasing sequence.
fn pchip_slopes(xs: &[f64], ys: &[f64]) -> Vec<f64> {
    let n = xs.len();
    let delta: Vec<f64> = (0..n - 1).map(|i| (ys[i + 1] - ys[i]) / (xs[i + 1] - xs[i])).collect();
    let mut m = vec![0.0; n];
    m[0] = delta[0];
    m[n - 1] = delta[n - 2];
    for i in 1..n - 1 {
        let (h0, h1) = (xs[i] - xs[i - 1], xs[i + 1] - xs[i]);
        let (d0, d1) = (delta[i - 1], delta[i]);
        // Weighted harmonic mean keeps each cubic piece monotone.
        let w1 = 2.0 * h1 + h0;
        let w2 = h1 + 2.0 * h0;
        m[i] = (w1 + w2) / (w1 / d0 + w2 / d1);
    }
    m
}

/// The embedded table.
pub fn tw1_table() -> &'static Tw1Table {
    static TABLE: OnceLock<Tw1Table> = OnceLock::new();
    TABLE.get_or_init(|| Tw1Table::parse(TABLE_CSV).expect("embedded TW1 table is valid"))
}

pub fn tw1_cdf(x: f64) -> f64 {
    tw1_table().cdf(x)
}

pub fn tw1_quantile(u: f64) -> f64 {
    tw1_table().quantile(u)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThetaSource {
    Empirical,
    Oracle,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LevelDecision {
    pub alpha: f64,
    pub critical_value: f64,
    pub reject: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestReport<T> {
    pub lambda: T,
    pub ell_max: T,
    pub theta1: T,
    pub theta2: T,
    pub statistic: T,
    pub p_value: f64,
    pub reject_at: Vec<LevelDecision>,
    pub theta_source: ThetaSource,
}

impl<T> TestReport<T> {
    pub fn rejects(&self, alpha: f64) -> Option<bool> {
        self.reject_at.iter().find(|d| d.alpha == alpha).map(|d| d.reject)
    }
}

/// `p^(2/3) (ell_max - theta1) / theta2`.
pub fn standardize<T: Real>(ell_max: T, theta1: T, theta2: T, p: usize) -> T {
    from_usize::<T>(p).powf(lit(2.0 / 3.0)) * (ell_max - theta1) / theta2
}

pub fn standardized_test<T: Real>(
    result: &LargestRootResult<T>,
    params: &EdgeParams<T>,
    p: usize,
    alphas: &[f64],
    source: ThetaSource,
) -> Result<TestReport<T>> {
    let (a, b) = (to_f64(result.lambda), to_f64(params.lambda));
    if (a - b).abs() > 1e-12 * a.abs().max(b.abs()) {
        return Err(Error::MismatchedLambda { params: b, statistic: a });
    }
    let statistic = standardize(result.ell_max, params.theta1, params.theta2, p);
    let stat = to_f64(statistic);
    let reject_at = alphas
        .iter()
        .map(|&alpha| {
            let critical_value = tw1_quantile(1.0 - alpha);
            LevelDecision {
                alpha,
                critical_value,
                reject: stat > critical_value,
            }
        })
        .collect();
    Ok(TestReport {
        lambda: result.lambda,
        ell_max: result.ell_max,
        theta1: params.theta1,
        theta2: params.theta2,
        statistic,
        p_value: tw1_table().sf(stat),
        reject_at,
        theta_source: source,
    })
}

/// Kolmogorov–Smirnov distance between a sample and the TW1 law.
pub fn ks_distance_tw1(sample: &[f64]) -> f64 {
    let mut xs: Vec<f64> = sample.iter().copied().filter(|x| x.is_finite()).collect();
    xs.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
    let n = xs.len() as f64;
    xs.iter().enumerate().fold(0.0, |d, (i, &x)| {
        let f = tw1_cdf(x);
        d.max((i as f64 + 1.0) / n - f).max(f - i as f64 / n)
    })
}
