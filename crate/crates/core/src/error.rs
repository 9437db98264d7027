use thiserror::Error;

/// Errors produced by the numerical core.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension must be 1, 2 or 3 (got {0})")]
    InvalidDimension(usize),
    #[error("invalid resolution: {0}")]
    InvalidResolution(String),
    #[error("counting scale exceeds the domain: R0*sqrt(mu) = {scaled} < 1 (mu = {mu})")]
    ScaleExceedsDomain { mu: f64, scaled: f64 },
    #[error("counting cube at mu = {mu} is smaller than one grid cell ({cubes} cubes per side, {points} points per side)")]
    ScaleBelowResolution { mu: f64, cubes: usize, points: usize },
    #[error("grid mismatch: expected {expected} values, got {found}")]
    GridMismatch { expected: usize, found: usize },
    #[error("invalid parameters: {0}")]
    InvalidParameters(String),
    #[error("expected {expected} site amplitudes, got {found}")]
    SiteCountMismatch { expected: usize, found: usize },
    #[error("constant potential must be nonnegative (got {0})")]
    NegativeConstant(f64),
    #[error("potential must be nonnegative (found {value} at index {index})")]
    NegativePotential { index: usize, value: f64 },
    #[error("argument {0} outside [0, 1]")]
    OutOfRange(f64),
    #[error("malformed field file: {0}")]
    Format(String),
    #[error("payload checksum mismatch: header says {expected}, payload hashes to {found}")]
    ChecksumMismatch { expected: String, found: String },
    #[error("{dof} degrees of freedom exceed the dense limit {limit}")]
    TooLargeForDense { dof: usize, limit: usize },
    #[error("eigendecomposition failed: {0}")]
    EigenFailure(String),
    #[error("operator is singular: V vanishes identically, so Lu = 1 has no periodic solution")]
    SingularOperator,
    #[error("conjugate gradient did not converge: residual {residual:e} after {iterations} iterations")]
    NotConverged { iterations: usize, residual: f64 },
    #[error("landscape must be positive (found {value} at index {index})")]
    NonPositiveLandscape { index: usize, value: f64 },
    #[error("spectrum is empty")]
    EmptySpectrum,
    #[error("no constant up to {c_max} satisfies the bound (first violation at mu = {mu})")]
    NoFiniteConstant { c_max: f64, mu: f64 },
    #[error("Chernoff condition violated: need 0 < F < mu, got F = {f_value}, mu = {mu}")]
    ConditionViolated { mu: f64, f_value: f64 },
    #[error("curve must be positive with |log value| > 0 on the fit window (value {value} at mu = {mu})")]
    NonPositiveCurve { mu: f64, value: f64 },
    #[error("requested {requested} minima but only {available} are available")]
    InsufficientMinima { requested: usize, available: usize },
    #[error("cube is not resolvable on the grid: {0}")]
    CubeUnresolvable(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
