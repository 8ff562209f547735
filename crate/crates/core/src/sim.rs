//! Monte Carlo harness: covariance models, error laws, null size, power and
//! estimation-precision experiments.
//!
//! Every random quantity is drawn from a ChaCha8 stream derived from the spec
//! seed: stream 0 for the covariance rotation, `1 + r` for replicate `r`, and
//! `NULL_STREAM_BASE + r` for the null replicates behind size-adjusted
//! cutoffs. Results are therefore independent of thread count and order.

use nalgebra::DMatrix;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson, StandardNormal, StudentT};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::edge::{edge_params, EdgeOptions, EdgeParams};
use crate::error::{Error, Result};
use crate::measure::{DiscreteMeasure, FitOptions};
use crate::model::{build_sscp, sorted_eigen, LinearModel};
use crate::pipeline::{run_test, LambdaPolicy, PipelineOptions, PipelineOutput};
use crate::power::{AlternativePrior, SelectOptions};
use crate::edge::EstimateOptions;
use crate::tw::{standardize, tw1_quantile};

pub const SCHEMA_VERSION: u32 = 1;
const NULL_STREAM_BASE: u64 = 1 << 40;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CovKind {
    /// `tau_j = 0.01 + (0.1 + p - j)^6`.
    PolyDecay,
    /// Entries `rho^|i-j|`.
    Toeplitz {
        #[serde(default = "default_toeplitz_rho")]
        rho: f64,
    },
    /// Poly-decay with the top five eigenvalues replaced by `(2.2 - 0.2 j) tau_6`.
    Factor,
    /// Eigenvalues 1, 5, 15 in proportions `a`, `(1-a)/2`, `(1-a)/2`.
    ThreeMass { a: f64 },
    /// Eigenvalues given explicitly.
    Explicit { eigs: Vec<f64> },
}

fn default_toeplitz_rho() -> f64 {
    0.3
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovModel {
    #[serde(flatten)]
    pub kind: CovKind,
    pub p: usize,
    #[serde(default = "default_true")]
    pub rotate: bool,
}

fn default_true() -> bool {
    true
}

/// A population covariance with its spectrum and symmetric square root.
#[derive(Debug, Clone)]
pub struct Covariance {
    pub sigma: DMatrix<f64>,
    pub sqrt: DMatrix<f64>,
    /// Nonincreasing.
    pub eigs: Vec<f64>,
}

/// Eigenvalues of the model before rotation, normalized to `tr = p` where the model asks for it.
pub fn model_eigenvalues(kind: &CovKind, p: usize) -> Result<Vec<f64>> {
    let poly = |p: usize| -> Vec<f64> { (1..=p).map(|j| 0.01 + (0.1 + (p - j) as f64).powi(6)).collect() };
    let mut eigs = match kind {
        CovKind::PolyDecay => poly(p),
        CovKind::Factor => {
            if p < 6 {
                return Err(Error::InvalidModel("factor model needs p >= 6".into()));
            }
            let mut t = poly(p);
            let t6 = t[5];
            for (j, v) in t.iter_mut().take(5).enumerate() {
                *v = (2.2 - 0.2 * (j + 1) as f64) * t6;
            }
            t
        }
        CovKind::Toeplitz { rho } => {
            let s = DMatrix::from_fn(p, p, |i, j| rho.powi((i as i32 - j as i32).abs()));
            let (e, _) = sorted_eigen(&s)?;
            e
        }
        CovKind::ThreeMass { a } => {
            if !(*a > 0.0 && *a < 1.0) {
                return Err(Error::InvalidModel("three-mass weight must lie in (0, 1)".into()));
            }
            let ones = (a * p as f64).round() as usize;
            let fives = (p - ones) / 2;
            let fifteens = p - ones - fives;
            let mut e = vec![15.0; fifteens];
            e.extend(std::iter::repeat_n(5.0, fives));
            e.extend(std::iter::repeat_n(1.0, ones));
            e
        }
        CovKind::Explicit { eigs } => {
            if eigs.len() != p || eigs.iter().any(|&e| !(e > 0.0)) {
                return Err(Error::InvalidModel("explicit eigenvalues must be p positive values".into()));
            }
            eigs.clone()
        }
    };
    if !matches!(kind, CovKind::Explicit { .. }) {
        let total: f64 = eigs.iter().sum();
        for e in &mut eigs {
            *e *= p as f64 / total;
        }
    }
    eigs.sort_by(|a, b| b.partial_cmp(a).expect("finite eigenvalues"));
    Ok(eigs)
}

/// Haar-distributed orthogonal matrix: QR of a Gaussian matrix with `diag(R) > 0`.
pub fn haar_orthogonal(p: usize, rng: &mut impl Rng) -> DMatrix<f64> {
    let g = DMatrix::<f64>::from_fn(p, p, |_, _| StandardNormal.sample(rng));
    let qr = g.qr();
    let r = qr.r();
    let mut q = qr.q();
    for j in 0..p {
        if r[(j, j)] < 0.0 {
            for i in 0..p {
                q[(i, j)] = -q[(i, j)];
            }
        }
    }
    q
}

pub fn make_cov(model: &CovModel, rng: &mut impl Rng) -> Result<Covariance> {
    let p = model.p;
    if p < 2 {
        return Err(Error::InvalidModel("covariance models need p >= 2".into()));
    }
    let eigs = model_eigenvalues(&model.kind, p)?;
    let vecs = if model.rotate {
        haar_orthogonal(p, rng)
    } else if let CovKind::Toeplitz { rho } = model.kind {
        let s = DMatrix::from_fn(p, p, |i, j| rho.powi((i as i32 - j as i32).abs()));
        sorted_eigen(&s)?.1
    } else {
        DMatrix::identity(p, p)
    };
    let scaled = |f: &dyn Fn(f64) -> f64| -> DMatrix<f64> {
        let mut a = vecs.clone();
        for j in 0..p {
            let v = f(eigs[j]);
            a.column_mut(j).scale_mut(v);
        }
        let m = &a * vecs.transpose();
        (&m + m.transpose()) * 0.5
    };
    Ok(Covariance {
        sigma: scaled(&|e| e),
        sqrt: scaled(&|e| e.sqrt()),
        eigs,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ErrorLaw {
    #[default]
    Gaussian,
    /// Student t with 4 degrees of freedom, divided by `sqrt(2)`.
    StudentT4,
    /// Poisson(1) minus one.
    PoissonCentered,
}

/// Fills a `rows x cols` matrix with standardized draws (column-major order).
pub fn draw_errors(law: ErrorLaw, rows: usize, cols: usize, rng: &mut impl Rng) -> DMatrix<f64> {
    match law {
        ErrorLaw::Gaussian => DMatrix::from_fn(rows, cols, |_, _| StandardNormal.sample(rng)),
        ErrorLaw::StudentT4 => {
            let t = StudentT::new(4.0).expect("valid degrees of freedom");
            let s = std::f64::consts::SQRT_2;
            DMatrix::from_fn(rows, cols, |_, _| t.sample(rng) / s)
        }
        ErrorLaw::PoissonCentered => {
            let pois = Poisson::new(1.0).expect("valid rate");
            DMatrix::from_fn(rows, cols, |_, _| pois.sample(rng) - 1.0)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LambdaPolicyKind {
    #[serde(rename = "data_driven_I")]
    DataDrivenI,
    #[serde(rename = "data_driven_Sigma")]
    DataDrivenSigma,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum LambdaSpec {
    Fixed(Vec<f64>),
    Policy(LambdaPolicyKind),
}

impl LambdaSpec {
    fn labels(&self) -> Vec<String> {
        match self {
            Self::Fixed(ls) => ls.iter().map(|l| format!("{l}")).collect(),
            Self::Policy(LambdaPolicyKind::DataDrivenI) => vec!["data_driven_I".into()],
            Self::Policy(LambdaPolicyKind::DataDrivenSigma) => vec!["data_driven_Sigma".into()],
        }
    }
}

/// Numerical settings shared by every replicate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Settings {
    pub k: usize,
    pub grid_i: usize,
    pub ode_steps: usize,
    pub lambda_grid: usize,
}

impl Default for Settings {
    fn default() -> Self {
        let e = EstimateOptions::default();
        Self {
            k: e.fit.k,
            grid_i: e.grid_i,
            ode_steps: e.edge.steps,
            lambda_grid: SelectOptions::default().grid_size,
        }
    }
}

impl Settings {
    pub fn pipeline_options(&self, alphas: &[f64]) -> PipelineOptions {
        PipelineOptions {
            select: SelectOptions {
                grid_size: self.lambda_grid,
                lambda_lo: None,
                lambda_hi: None,
                estimate: EstimateOptions {
                    fit: FitOptions {
                        k: self.k,
                        ..FitOptions::default()
                    },
                    grid_i: self.grid_i,
                    edge: EdgeOptions {
                        steps: self.ode_steps,
                        ..EdgeOptions::default()
                    },
                },
            },
            alphas: alphas.to_vec(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub cov: CovModel,
    #[serde(default)]
    pub error_law: ErrorLaw,
    pub n1: usize,
    pub n2: usize,
    /// Rows of the design; the harness design requires `m = n1`.
    #[serde(default)]
    pub m: Option<usize>,
    pub lambdas: LambdaSpec,
    #[serde(default)]
    pub signal_zeta: f64,
    /// Signal grid for power curves.
    #[serde(default)]
    pub zetas: Vec<f64>,
    pub replicates: usize,
    pub seed: u64,
    #[serde(default = "default_alphas")]
    pub alphas: Vec<f64>,
    #[serde(default)]
    pub settings: Settings,
    /// Null replicates behind size-adjusted cutoffs.
    #[serde(default = "default_null_replicates")]
    pub null_replicates: usize,
    /// Also standardize with the population parameters.
    #[serde(default = "default_true")]
    pub oracle: bool,
}

fn default_alphas() -> Vec<f64> {
    vec![0.05, 0.01]
}

fn default_null_replicates() -> usize {
    2000
}

impl ExperimentSpec {
    pub fn p(&self) -> usize {
        self.cov.p
    }

    pub fn validate(&self) -> Result<()> {
        let mut bad = Vec::new();
        if self.cov.p < 2 {
            bad.push("cov.p (must be >= 2)");
        }
        if self.n1 == 0 {
            bad.push("n1 (must be positive)");
        }
        if self.n2 == 0 {
            bad.push("n2 (must be positive)");
        }
        if self.m.is_some_and(|m| m != self.n1) {
            bad.push("m (must equal n1)");
        }
        if self.replicates == 0 {
            bad.push("replicates (must be >= 1)");
        }
        if !(self.signal_zeta >= 0.0 && self.signal_zeta.is_finite()) {
            bad.push("signal_zeta (must be >= 0)");
        }
        if self.zetas.iter().any(|&z| !(z >= 0.0 && z.is_finite())) || self.zetas.windows(2).any(|w| w[1] < w[0]) {
            bad.push("zetas (must be nonnegative and increasing)");
        }
        if self.alphas.is_empty() || self.alphas.iter().any(|&a| !(a > 0.0 && a < 1.0)) {
            bad.push("alphas (must lie in (0, 1))");
        }
        match &self.lambdas {
            LambdaSpec::Fixed(ls) if ls.is_empty() || ls.iter().any(|&l| !(l > 0.0 && l.is_finite())) => {
                bad.push("lambdas (must be positive)")
            }
            _ => {}
        }
        let s = &self.settings;
        if s.k == 0 || s.grid_i == 0 || s.ode_steps == 0 || s.lambda_grid == 0 {
            bad.push("settings (k, grid_i, ode_steps, lambda_grid must be positive)");
        }
        if let CovKind::ThreeMass { a } = self.cov.kind {
            if !(a > 0.0 && a < 1.0) {
                bad.push("cov.a (must lie in (0, 1))");
            }
        }
        if let CovKind::Explicit { eigs } = &self.cov.kind {
            if eigs.len() != self.cov.p || eigs.iter().any(|&e| !(e > 0.0)) {
                bad.push("cov.eigs (must be p positive values)");
            }
        }
        if matches!(self.cov.kind, CovKind::Factor) && self.cov.p < 6 {
            bad.push("cov.p (factor model needs p >= 6)");
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidSpec(bad.join(", ")))
        }
    }

    fn gamma1(&self) -> f64 {
        self.p() as f64 / self.n1 as f64
    }

    fn gamma2(&self) -> f64 {
        self.p() as f64 / self.n2 as f64
    }
}

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

/// Population covariance of a spec (rotation drawn from stream 0).
pub fn spec_covariance(spec: &ExperimentSpec) -> Result<Covariance> {
    make_cov(&spec.cov, &mut stream(spec.seed, 0))
}

/// Replicate data set `Y = B X + Sigma^1/2 Z` with `B = zeta g e_1^T`, `C = I`.
///
/// `g` is drawn for every replicate so that a replicate shares `Z`, `X` and
/// the signal direction across the `zeta` grid.
pub fn draw_dataset(spec: &ExperimentSpec, cov: &Covariance, zeta: f64, stream_id: u64) -> Result<LinearModel<f64>> {
    let mut rng = stream(spec.seed, stream_id);
    let p = spec.p();
    let nt = spec.n1 + spec.n2;
    let z = draw_errors(spec.error_law, p, nt, &mut rng);
    let x = DMatrix::<f64>::from_fn(spec.n1, nt, |_, _| StandardNormal.sample(&mut rng));
    let g: Vec<f64> = (0..p).map(|_| StandardNormal.sample(&mut rng)).collect();
    let mut y = &cov.sqrt * z;
    if zeta > 0.0 {
        for j in 0..nt {
            let xj = x[(0, j)];
            for i in 0..p {
                y[(i, j)] += zeta * g[i] * xj;
            }
        }
    }
    LinearModel::new(y, x, DMatrix::identity(spec.n1, spec.n1))
}

/// Population edge parameters; duplicates in the spectrum are merged first.
pub fn oracle_params(eigs: &[f64], lambda: f64, gamma1: f64, gamma2: f64, steps: usize) -> Result<EdgeParams<f64>> {
    let measure = DiscreteMeasure::from_eigenvalues(eigs)?;
    let opts = EdgeOptions {
        steps,
        ..EdgeOptions::default()
    };
    edge_params(&measure, lambda, gamma1, gamma2, &opts, None)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateLambda {
    pub label: String,
    pub lambda: f64,
    pub ell_max: f64,
    pub theta1_hat: f64,
    pub theta2_hat: f64,
    pub statistic: f64,
    pub p_value: f64,
    pub theta1_oracle: Option<f64>,
    pub theta2_oracle: Option<f64>,
    pub statistic_oracle: Option<f64>,
    /// Minimax residual of the fitted measure (zero when `lambda` was selected).
    pub fit_loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateRecord {
    pub index: usize,
    pub zeta: f64,
    pub lambdas: Vec<ReplicateLambda>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateRow {
    pub label: String,
    pub zeta: f64,
    pub alpha: f64,
    pub rate: f64,
    pub rate_oracle: Option<f64>,
    /// Cutoff from simulated null statistics, when computed.
    pub cutoff_adjusted: Option<f64>,
    pub rate_adjusted: Option<f64>,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimationRow {
    pub label: String,
    pub theta1_err_mean: f64,
    pub theta1_err_sd: f64,
    pub theta2_err_mean: f64,
    pub theta2_err_sd: f64,
    pub n: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    NullSize,
    PowerCurve,
    EstimationTable,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub schema_version: u32,
    pub kind: ExperimentKind,
    pub spec: ExperimentSpec,
    /// Population parameters per fixed `lambda` label.
    pub oracle: Vec<(String, Option<EdgeParams<f64>>)>,
    pub records: Vec<ReplicateRecord>,
    pub failed: Vec<usize>,
    pub rates: Vec<RateRow>,
    pub estimation: Vec<EstimationRow>,
}

struct Context {
    spec: ExperimentSpec,
    cov: Covariance,
    opts: PipelineOptions,
    labels: Vec<String>,
    policies: Vec<LambdaPolicy<f64>>,
    oracle: Vec<Option<EdgeParams<f64>>>,
}

impl Context {
    fn new(spec: &ExperimentSpec) -> Result<Self> {
        spec.validate()?;
        let cov = spec_covariance(spec)?;
        let opts = spec.settings.pipeline_options(&spec.alphas);
        let labels = spec.lambdas.labels();
        let policies: Vec<LambdaPolicy<f64>> = match &spec.lambdas {
            LambdaSpec::Fixed(ls) => ls.iter().map(|&l| LambdaPolicy::Fixed(l)).collect(),
            LambdaSpec::Policy(LambdaPolicyKind::DataDrivenI) => {
                vec![LambdaPolicy::DataDriven(AlternativePrior::identity(spec.p()))]
            }
            LambdaSpec::Policy(LambdaPolicyKind::DataDrivenSigma) => {
                vec![LambdaPolicy::DataDriven(AlternativePrior::sigma())]
            }
        };
        let oracle = policies
            .iter()
            .map(|pol| match pol {
                LambdaPolicy::Fixed(l) if spec.oracle => {
                    oracle_params(&cov.eigs, *l, spec.gamma1(), spec.gamma2(), spec.settings.ode_steps).ok()
                }
                _ => None,
            })
            .collect();
        Ok(Self {
            spec: spec.clone(),
            cov,
            opts,
            labels,
            policies,
            oracle,
        })
    }

    fn replicate(&self, index: usize, zeta: f64, stream_id: u64) -> ReplicateRecord {
        let mut rec = ReplicateRecord {
            index,
            zeta,
            lambdas: Vec::new(),
            error: None,
        };
        let run = || -> Result<Vec<ReplicateLambda>> {
            let model = draw_dataset(&self.spec, &self.cov, zeta, stream_id)?;
            let sscp = build_sscp(&model)?;
            let mut out = Vec::with_capacity(self.policies.len());
            for (i, pol) in self.policies.iter().enumerate() {
                let res = run_test(&sscp, pol, &self.opts)?;
                let oracle = match (&self.oracle[i], pol) {
                    (Some(o), _) => Some(*o),
                    (None, LambdaPolicy::DataDriven(_)) if self.spec.oracle => oracle_params(
                        &self.cov.eigs,
                        res.report.lambda,
                        self.spec.gamma1(),
                        self.spec.gamma2(),
                        self.spec.settings.ode_steps,
                    )
                    .ok(),
                    _ => None,
                };
                out.push(self.summarize(i, &res, oracle.as_ref()));
            }
            Ok(out)
        };
        match run() {
            Ok(v) => rec.lambdas = v,
            Err(e) => rec.error = Some(e.to_string()),
        }
        rec
    }

    fn summarize(&self, i: usize, res: &PipelineOutput<f64>, oracle: Option<&EdgeParams<f64>>) -> ReplicateLambda {
        let p = self.spec.p();
        ReplicateLambda {
            label: self.labels[i].clone(),
            lambda: res.report.lambda,
            ell_max: res.report.ell_max,
            theta1_hat: res.report.theta1,
            theta2_hat: res.report.theta2,
            statistic: res.report.statistic,
            p_value: res.report.p_value,
            theta1_oracle: oracle.map(|o| o.theta1),
            theta2_oracle: oracle.map(|o| o.theta2),
            statistic_oracle: oracle.map(|o| standardize(res.report.ell_max, o.theta1, o.theta2, p)),
            fit_loss: res.fit_loss,
        }
    }

    fn run_batch(&self, zeta: f64, count: usize, stream_base: u64) -> Vec<ReplicateRecord> {
        (0..count)
            .into_par_iter()
            .map(|r| self.replicate(r, zeta, stream_base + r as u64))
            .collect()
    }

    fn result(&self, kind: ExperimentKind, records: Vec<ReplicateRecord>) -> ExperimentResult {
        let failed = records.iter().filter(|r| r.error.is_some()).map(|r| r.index).collect();
        ExperimentResult {
            schema_version: SCHEMA_VERSION,
            kind,
            spec: self.spec.clone(),
            oracle: self.labels.iter().cloned().zip(self.oracle.iter().copied()).collect(),
            records,
            failed,
            rates: Vec::new(),
            estimation: Vec::new(),
        }
    }
}

fn ok_values<'a>(records: &'a [ReplicateRecord], label: &'a str) -> impl Iterator<Item = &'a ReplicateLambda> + 'a {
    records
        .iter()
        .filter(|r| r.error.is_none())
        .flat_map(|r| r.lambdas.iter())
        .filter(move |l| l.label == label)
}

fn rate_rows(ctx: &Context, records: &[ReplicateRecord], zeta: f64, cutoffs: Option<&[Vec<f64>]>) -> Vec<RateRow> {
    let mut rows = Vec::new();
    for (li, label) in ctx.labels.iter().enumerate() {
        let vals: Vec<&ReplicateLambda> = ok_values(records, label).collect();
        let n = vals.len();
        for (ai, &alpha) in ctx.spec.alphas.iter().enumerate() {
            let q = tw1_quantile(1.0 - alpha);
            let frac = |pred: &dyn Fn(&ReplicateLambda) -> bool| -> f64 {
                if n == 0 {
                    f64::NAN
                } else {
                    vals.iter().filter(|v| pred(v)).count() as f64 / n as f64
                }
            };
            let rate = frac(&|v| v.statistic > q);
            let has_oracle = n > 0 && vals.iter().all(|v| v.statistic_oracle.is_some());
            let rate_oracle = has_oracle.then(|| frac(&|v| v.statistic_oracle.expect("checked") > q));
            let cutoff = cutoffs.map(|c| c[li][ai]);
            let rate_adjusted = cutoff.map(|c| frac(&|v| v.statistic > c));
            rows.push(RateRow {
                label: label.clone(),
                zeta,
                alpha,
                rate,
                rate_oracle,
                cutoff_adjusted: cutoff,
                rate_adjusted,
                n,
            });
        }
    }
    rows
}

fn mean_sd(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / n;
    let var = if xs.len() > 1 {
        xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    (mean, var.sqrt())
}

fn estimation_rows(ctx: &Context, records: &[ReplicateRecord]) -> Vec<EstimationRow> {
    let scale = (ctx.spec.p() as f64).powf(2.0 / 3.0);
    ctx.labels
        .iter()
        .filter_map(|label| {
            let (mut e1, mut e2) = (Vec::new(), Vec::new());
            for v in ok_values(records, label) {
                let (Some(t1), Some(t2)) = (v.theta1_oracle, v.theta2_oracle) else {
                    continue;
                };
                e1.push(scale * (v.theta1_hat - t1).abs() / t2);
                e2.push(scale * (v.theta2_hat - t2).abs() / t2);
            }
            if e1.is_empty() {
                return None;
            }
            let (m1, s1) = mean_sd(&e1);
            let (m2, s2) = mean_sd(&e2);
            Some(EstimationRow {
                label: label.clone(),
                theta1_err_mean: m1,
                theta1_err_sd: s1,
                theta2_err_mean: m2,
                theta2_err_sd: s2,
                n: e1.len(),
            })
        })
        .collect()
}

/// Empirical size at each `lambda` and level under `signal_zeta` (normally 0).
pub fn run_null_size(spec: &ExperimentSpec) -> Result<ExperimentResult> {
    let ctx = Context::new(spec)?;
    let records = ctx.run_batch(spec.signal_zeta, spec.replicates, 1);
    let mut res = ctx.result(ExperimentKind::NullSize, Vec::new());
    res.rates = rate_rows(&ctx, &records, spec.signal_zeta, None);
    res.estimation = estimation_rows(&ctx, &records);
    res.failed = records.iter().filter(|r| r.error.is_some()).map(|r| r.index).collect();
    res.records = records;
    Ok(res)
}

/// Scaled estimation errors of `theta1`, `theta2` against the population values.
pub fn run_estimation_table(spec: &ExperimentSpec) -> Result<ExperimentResult> {
    if !spec.oracle {
        return Err(Error::InvalidSpec("oracle (must be true for estimation tables)".into()));
    }
    let mut res = run_null_size(spec)?;
    res.kind = ExperimentKind::EstimationTable;
    Ok(res)
}

/// Upper `alpha` quantile of a sample (order statistic `ceil((1 - alpha) n)`).
pub fn empirical_cutoff(sample: &[f64], alpha: f64) -> f64 {
    let mut xs: Vec<f64> = sample.iter().copied().filter(|x| x.is_finite()).collect();
    if xs.is_empty() {
        return f64::NAN;
    }
    xs.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
    let k = ((1.0 - alpha) * xs.len() as f64).ceil() as usize;
    xs[k.clamp(1, xs.len()) - 1]
}

/// Power over `spec.zetas` with asymptotic and size-adjusted cutoffs.
pub fn run_power_curve(spec: &ExperimentSpec) -> Result<ExperimentResult> {
    if spec.zetas.is_empty() {
        return Err(Error::InvalidSpec("zetas (power curves need a signal grid)".into()));
    }
    let ctx = Context::new(spec)?;
    let null = ctx.run_batch(0.0, spec.null_replicates.max(1), NULL_STREAM_BASE);
    let cutoffs: Vec<Vec<f64>> = ctx
        .labels
        .iter()
        .map(|label| {
            let stats: Vec<f64> = ok_values(&null, label).map(|v| v.statistic).collect();
            spec.alphas.iter().map(|&a| empirical_cutoff(&stats, a)).collect()
        })
        .collect();
    let mut records = Vec::new();
    let mut rates = Vec::new();
    for &zeta in &spec.zetas {
        let batch = ctx.run_batch(zeta, spec.replicates, 1);
        rates.extend(rate_rows(&ctx, &batch, zeta, Some(&cutoffs)));
        records.extend(batch);
    }
    let mut res = ctx.result(ExperimentKind::PowerCurve, Vec::new());
    res.failed = records.iter().filter(|r| r.error.is_some()).map(|r| r.index).collect();
    res.failed.sort_unstable();
    res.failed.dedup();
    res.records = records;
    res.rates = rates;
    Ok(res)
}

/// Plot-ready CSV of the rate rows.
pub fn rates_csv(res: &ExperimentResult) -> String {
    let mut out = String::from("label,zeta,alpha,n,rate,rate_oracle,cutoff_adjusted,rate_adjusted\n");
    let opt = |x: Option<f64>| x.map(|v| format!("{v}")).unwrap_or_default();
    for r in &res.rates {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            r.label,
            r.zeta,
            r.alpha,
            r.n,
            r.rate,
            opt(r.rate_oracle),
            opt(r.cutoff_adjusted),
            opt(r.rate_adjusted)
        ));
    }
    out
}

/// CSV of the estimation-error summaries.
pub fn estimation_csv(res: &ExperimentResult) -> String {
    let mut out = String::from("label,n,theta1_err_mean,theta1_err_sd,theta2_err_mean,theta2_err_sd\n");
    for r in &res.estimation {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.label, r.n, r.theta1_err_mean, r.theta1_err_sd, r.theta2_err_mean, r.theta2_err_sd
        ));
    }
    out
}

/// CSV of per-replicate statistics.
pub fn replicates_csv(res: &ExperimentResult) -> String {
    let mut out = String::from(
        "index,zeta,label,lambda,ell_max,theta1_hat,theta2_hat,statistic,p_value,theta1_oracle,theta2_oracle,statistic_oracle,error\n",
    );
    let opt = |x: Option<f64>| x.map(|v| format!("{v}")).unwrap_or_default();
    for r in &res.records {
        if let Some(e) = &r.error {
            out.push_str(&format!("{},{},,,,,,,,,,,\"{}\"\n", r.index, r.zeta, e.replace('"', "'")));
            continue;
        }
        for v in &r.lambdas {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{},{},{},\n",
                r.index,
                r.zeta,
                v.label,
                v.lambda,
                v.ell_max,
                v.theta1_hat,
                v.theta2_hat,
                v.statistic,
                v.p_value,
                opt(v.theta1_oracle),
                opt(v.theta2_oracle),
                opt(v.statistic_oracle)
            ));
        }
    }
    out
}
