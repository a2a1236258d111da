use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("source strength {0} must be > -1 and nonzero")]
    InvalidStrength(f64),
    #[error("two sources share the position ({0}, {1})")]
    DuplicateSource(f64, f64),
    #[error("weight evaluated at a negative-strength source ({0}, {1})")]
    EvaluationAtNegativeSource(f64, f64),
    #[error("harmonic part is not finite at ({0}, {1})")]
    NonFiniteHarmonicPart(f64, f64),
    #[error("Green's function pole |p| = {0} is not inside the unit disk")]
    SourceOnBoundary(f64),
    #[error("Green's function evaluated at its pole")]
    CoincidentPoints,
    #[error("expected one or two negative strengths, found {0}")]
    UnsupportedSignPattern(usize),
    #[error("radial grid has {0} nodes, at least 8 are required")]
    GridTooCoarse(usize),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("invalid mesh: {0}")]
    InvalidMesh(String),
    #[error("Newton iteration stalled after {iterations} iterations (residual {residual:e})")]
    NewtonDivergence { iterations: usize, residual: f64 },
    #[error("lambda = {lambda} is not below the threshold {threshold}")]
    LambdaOutOfRange { lambda: f64, threshold: f64 },
    #[error("solution residual {residual:e} exceeds tolerance {tol:e}")]
    NotConverged { residual: f64, tol: f64 },
    #[error("sparse factorization failed: {0}")]
    Factorization(String),
    #[error("region is not connected")]
    DisconnectedRegion,
    #[error("region is empty")]
    EmptyRegion,
    #[error("distribution function is not monotone at t = {0}")]
    NonMonotoneMu(f64),
    #[error("region extends outside the solution domain")]
    RegionNotInSolutionDomain,
    #[error("field takes the nonpositive value {0} inside the region")]
    SignError(f64),
    #[error("negative-part mass {negative} exceeds the remaining model mass {remaining}")]
    MassOverflow { negative: f64, remaining: f64 },
    #[error("minimizer does not change sign on the grid")]
    NoSignChange,
    #[error("eigensolver did not converge after {0} iterations")]
    SolverStall(usize),
    #[error("mass form is indefinite (pivot {0:e})")]
    IndefiniteB(f64),
    #[error("far-field fit residual {residual:e} exceeds tolerance {tol:e}")]
    TruncationTooSmall { residual: f64, tol: f64 },
    #[error("mesh contains the origin, its inversion is unbounded")]
    OriginInMesh,
    #[error("continuation step fell below {0:e} without convergence")]
    StepUnderflow(f64),
    #[error("config error: {0}")]
    Config(String),
    #[error("io error: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
