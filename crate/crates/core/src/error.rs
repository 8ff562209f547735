use thiserror::Error;

/// Errors raised by the numerical pipeline.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("matrix {0} is rank deficient")]
    RankDeficient(&'static str),
    #[error("C^T (X X^T)^-1 C is not positive definite; hypothesis is not estimable")]
    NotEstimable,
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error("regularization parameter must be positive, got {0}")]
    NonPositiveLambda(f64),
    #[error("symmetric eigensolver failed: {0}")]
    EigenFailure(String),
    #[error("evaluation point coincides with an eigenvalue (z = {0})")]
    PoleHit(f64),
    #[error("Stieltjes transform is numerically degenerate at the evaluation point")]
    DegenerateTransform,
    #[error("could not invert the Stieltjes transform at grid index {0}")]
    InversionFailure(usize),
    #[error("linear program is infeasible")]
    LpInfeasible,
    #[error("linear program is unbounded")]
    LpUnbounded,
    #[error("simplex iteration limit reached")]
    LpIterationLimit,
    #[error("weight truncation removed every atom")]
    EmptyMeasure,
    #[error("argument h = {h} is outside (-inf, lambda/sigma_max = {bound})")]
    DomainViolation { h: f64, bound: f64 },
    #[error("no root found: {0}")]
    NoRoot(String),
    #[error("iteration did not converge: {0}")]
    NonConvergence(String),
    #[error("could not solve for the initial value s(0): {0}")]
    InitFailure(String),
    #[error("ODE denominator 1 - H2*zeta vanished at x = {0}")]
    SingularDenominator(f64),
    #[error("no solution of x^2 s'(x) = 1/gamma1 in [{lo}, {hi}]: achieved range [{f_lo}, {f_hi}], target {target}")]
    BetaOutOfRange { lo: f64, hi: f64, f_lo: f64, f_hi: f64, target: f64 },
    #[error("edge parameters were computed for lambda = {params} but the statistic uses lambda = {statistic}")]
    MismatchedLambda { params: f64, statistic: f64 },
    #[error("spectral moment order {0} is not supported (r <= 2)")]
    UnsupportedOrder(usize),
    #[error("invalid alternative prior: {0}")]
    InvalidPrior(String),
    #[error("every lambda grid point failed")]
    AllPointsFailed,
    #[error("invalid experiment spec: {0}")]
    InvalidSpec(String),
    #[error("{0}")]
    Parse(String),
    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl Error {
    /// True for errors caused by malformed or inconsistent inputs, as opposed
    /// to numerical failures on valid inputs.
    pub fn is_input_error(&self) -> bool {
        matches!(
            self,
            Error::RankDeficient(_)
                | Error::NotEstimable
                | Error::DimensionMismatch(_)
                | Error::InvalidModel(_)
                | Error::NonPositiveLambda(_)
                | Error::InvalidPrior(_)
                | Error::InvalidSpec(_)
                | Error::Parse(_)
                | Error::Io(_)
        )
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
