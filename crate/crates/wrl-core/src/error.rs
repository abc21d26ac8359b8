use std::path::PathBuf;

/// Errors produced anywhere in the library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("density has nonpositive mass {0}")]
    ZeroMass(f64),
    #[error("probability level {0} is outside [0, 1]")]
    QOutOfRange(f64),
    #[error("kernel scale must be positive, got {0}")]
    NonpositiveEpsilon(f64),
    #[error("periodization tail {tail:e} exceeds tolerance {tol:e} with {terms} terms")]
    InsufficientTerms { terms: usize, tail: f64, tol: f64 },
    #[error("kernel support {support} is wider than the domain {domain}")]
    KernelWiderThanDomain { support: f64, domain: f64 },
    #[error("time step {dt:e} exceeds the stable step {stable:e}")]
    CflViolation { dt: f64, stable: f64 },
    #[error("support radius {radius} reached the escape limit {limit} at t = {t}")]
    SupportEscape { radius: f64, limit: f64, t: f64 },
    #[error("Newton iteration did not converge at t = {t} (residual {residual:e})")]
    NonConvergedNewton { t: f64, residual: f64 },
    #[error("potential constants do not dominate sampled values: {0}")]
    PotentialMismatch(String),
    #[error("kernel scale {epsilon} is under-resolved by cell width {cell_width}")]
    KernelResolution { epsilon: f64, cell_width: f64 },
    #[error("degenerate state: {0}")]
    DegenerateState(String),
    #[error("masses differ: {0} vs {1}")]
    MassMismatch(f64, f64),
    #[error("source density has degenerate support")]
    DegenerateSupport,
    #[error("{0} atoms exceed the oracle limit of 64")]
    SizeLimit(usize),
    #[error("trajectory carries no velocity samples")]
    MissingVelocities,
    #[error("flow leaves the domain at x = {x} (violation {violation:e})")]
    DomainEscape { x: f64, violation: f64 },
    #[error("seed points do not match the grid")]
    SeedMismatch,
    #[error("parameter out of range: {0}")]
    Range(String),
    #[error("constraint violated: {0}")]
    ConstraintViolation(String),
    #[error("need at least 3 snapshots, got {0}")]
    InsufficientSnapshots(usize),
    #[error("rate fit needs positive values, got {0}")]
    NonpositiveValue(f64),
    #[error("clipped mass {0:e} exceeds the allowed budget")]
    ClippedMass(f64),
    #[error("grids differ")]
    GridMismatch,
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {msg}")]
    Parse { path: PathBuf, line: usize, msg: String },
    #[error("config: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, Error>;
