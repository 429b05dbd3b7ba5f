use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("requirement {value} in coordinate {coord} is outside (0, 1]")]
    RequirementOutOfRange { value: f64, coord: usize },

    #[error("invalid distribution parameter: {0}")]
    InvalidDistribution(String),

    #[error("no probability density is defined for this distribution")]
    NoDensity,

    #[error("grid must have at least one resource with K >= 1")]
    InvalidGrid,

    #[error("candidate enumeration would exceed the cap of {cap} options")]
    EnumerationTooLarge { cap: usize },

    #[error("{context} requires a one-dimensional grid")]
    NotOneDimensional { context: &'static str },

    #[error("K must be a power of two, got {k}")]
    NotPowerOfTwo { k: u32 },

    #[error("K must be even, got {k}")]
    NotEven { k: u32 },

    #[error("K must be odd in every coordinate (or even in every coordinate), got {got}")]
    BadParity { got: String },

    #[error("the pairing construction requires odd K in every coordinate, got {got}")]
    NotOdd { got: String },

    #[error("epsilon must be positive, got {0}")]
    InvalidEpsilon(f64),

    #[error("bucket masses must be weakly decreasing: p[{index}] = {value} exceeds p[{}] = {prev}", index - 1)]
    MassesNotDecreasing { index: usize, prev: f64, value: f64 },

    #[error("construction infeasible: intermediate mass proxy went negative at round {round}, index {index}")]
    ConstructionInfeasible { round: usize, index: usize },

    #[error("total service mass {mass:.6} exceeds 1{}", match required_k { Some(k) => format!("; smallest sufficient K is {k}"), None => String::from("; no finite K suffices at this load") })]
    MassOverflow { mass: f64, required_k: Option<u32> },

    #[error("no stable K exists: {reason}")]
    NoStableK { reason: String },

    #[error("required K exceeds the supported range (2^31)")]
    KOutOfRange,

    #[error("arrival rates not stabilizable over the given candidates (delta* = {delta:.6})")]
    NotStabilizable { delta: f64 },

    #[error("stability boundary unknown for this distribution; supply lambda* explicitly")]
    UnknownStabilityBoundary,

    #[error("switch rate theta must be positive, got {0}")]
    InvalidTheta(f64),

    #[error("linear program exceeds the cap of {cap} candidate options")]
    LpTooLarge { cap: usize },

    #[error("linear program did not converge within {0} pivots")]
    LpStalled(usize),

    #[error("linear program is unbounded")]
    LpUnbounded,

    #[error("cannot read trace file {path}: {source}")]
    TraceIo {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("trace column {column} not found; header has: {header}")]
    TraceColumnMissing { column: String, header: String },

    #[error("trace row {row}: cannot parse {field:?} as a number")]
    TraceParse { row: usize, field: String },

    #[error("trace is empty after filtering")]
    TraceEmpty,

    #[error("normalization removed every value")]
    AllValuesRemoved,

    #[error("config error in {field}: {message}")]
    Config { field: String, message: String },

    #[error("cannot read {path}: {source}")]
    InputIo {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("cannot write {path}: {source}")]
    OutputIo {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn config(field: &str, message: impl Into<String>) -> Self {
        Error::Config {
            field: field.to_string(),
            message: message.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
