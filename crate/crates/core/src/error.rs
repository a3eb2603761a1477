use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("exterior degree {k} out of range 1..={d}")]
    DegreeOutOfRange { k: usize, d: usize },

    #[error("singular fiber: |det| = {det:e} below tolerance {tol:e}")]
    SingularFiber { det: f64, tol: f64 },

    #[error("SVD did not converge after {sweeps} sweeps")]
    NonConvergence { sweeps: usize },

    #[error("rank deficient factorization: |R[{index}][{index}]| = {value:e}")]
    RankDeficient { index: usize, value: f64 },

    #[error("invalid probability vector: {0}")]
    InvalidProbability(String),

    #[error("invalid point: {0}")]
    InvalidPoint(String),

    #[error("invalid system: {0}")]
    InvalidSystem(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("unknown fixture `{0}`")]
    UnknownFixture(String),

    #[error("{what} = {size} exceeds cap {cap}")]
    CapExceeded { what: &'static str, size: u128, cap: u128 },

    #[error("no contraction found up to n_max = {n_max} (last drift {last_drift})")]
    NoContractionFound { n_max: usize, last_drift: f64 },

    #[error("domain violation: {0}")]
    DomainViolation(String),

    #[error("contraction certificate required: {0}")]
    CertificateMissing(String),

    #[error("tolerance {tol:e} unreachable: needs n = {needed}, cap {cap}")]
    ToleranceUnreachable { tol: f64, needed: u128, cap: usize },

    #[error("invariance defect {defect:e} exceeds tolerance {tol:e}")]
    InvarianceDefect { defect: f64, tol: f64 },

    #[error("sections are not nested: {0}")]
    NonNested(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
