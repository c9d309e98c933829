use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Every failure the library can report.
///
/// Partition indices carried by the variants are 0-based.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid problem: {0}")]
    InvalidProblem(String),

    #[error("invalid solver configuration: {0}")]
    InvalidConfig(String),

    #[error("cannot split n={n}, m={m} into P={p} x Q={q} partitions")]
    InvalidPartitionCount { n: usize, m: usize, p: usize, q: usize },

    #[error("block ({p}, {q}) is missing from the grid")]
    MissingBlock { p: usize, q: usize },

    #[error("blocks of row partition {p} disagree on labels")]
    LabelMismatch { p: usize },

    #[error("block ({p}, {q}) does not match the grid dimensions")]
    BlockDimensionMismatch { p: usize, q: usize },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("dual variable {index} is outside the conjugate domain")]
    InfeasibleDual { index: usize },

    #[error("zero denominator in the coordinate step")]
    ZeroDenominator,

    #[error("index {index} out of range for length {len}")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("no local solution for column block {q}, sub-block {sub}")]
    MissingSlice { q: usize, sub: usize },

    #[error("worker {worker} panicked")]
    TaskPanic { worker: usize },

    #[error("cannot aggregate an empty group")]
    EmptyGroup,

    #[error("density must lie in (0, 1], got {0}")]
    InvalidDensity(f64),

    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },

    #[error("labels are not binary: {0}")]
    NonBinaryLabels(String),

    #[error("malformed dataset cache: {0}")]
    Cache(String),

    #[error("reference solver stopped after {epochs} epochs with duality gap {gap:e}")]
    MaxIterationsExceeded { epochs: usize, gap: f64 },

    #[error("reference objective must be positive, got {0}")]
    NonPositiveReference(f64),

    #[error("timings must be positive (t1={t1}, tp={tp})")]
    NonPositiveTime { t1: f64, tp: f64 },

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
