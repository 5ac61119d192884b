use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("window radius {radius} exceeds domain half-width {half_width}")]
    WindowExceedsDomain { radius: f64, half_width: f64 },

    #[error("interval must be positive, got {0}")]
    NonPositiveInterval(f64),

    #[error("grid spacing {spacing} does not divide the domain width {width}")]
    SpacingMismatch { spacing: f64, width: f64 },

    #[error("field contains a non-finite value at node {0}")]
    NonFinite(usize),

    #[error("incompatible grids: {0}")]
    GridMismatch(String),

    #[error("invalid quadrature spec: {0}")]
    InvalidQuadrature(String),

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("covariance is not symmetric positive definite")]
    NonSpdCovariance,

    #[error("input matrix is not symmetric positive definite")]
    NonSpdInput,

    #[error("grid too coarse: relative truncation estimate {estimate:.3e} exceeds {tolerance:.3e}")]
    GridTooCoarse { estimate: f64, tolerance: f64 },

    #[error(
        "truncated solves differ by {difference:.3e} on the field box (tolerance {tolerance:.3e})"
    )]
    TruncationInsufficient { difference: f64, tolerance: f64 },

    #[error("Laplace tail bound unreachable: needs t_max = {needed:.3e}, cap is {cap:.3e}")]
    TailBoundUnreachable { needed: f64, cap: f64 },

    #[error("report verdict is not converged")]
    NotConverged,

    #[error("no invariant measure: unnormalized mass keeps growing ({growth:.3} per doubling)")]
    NoInvariantMeasure { growth: f64 },

    #[error("evolution system did not stabilize (period-to-period change {change:.3e})")]
    NoStabilization { change: f64 },

    #[error("least-squares fit is ill-conditioned (condition number {0:.3e})")]
    IllConditioned(f64),

    #[error("expression parse error at column {column}: {message}")]
    ExpressionParse { column: usize, message: String },

    #[error("unsupported operation: {0}")]
    Unsupported(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
