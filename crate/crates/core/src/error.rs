use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("system matrix must have at least one row")]
    EmptySystem,

    #[error("matrix is not square: row {row} has {len} entries, expected {expected}")]
    NonSquare {
        row: usize,
        len: usize,
        expected: usize,
    },

    #[error("system has {dimension} states; cofactor expansion is capped at {cap}")]
    DimensionTooLarge { dimension: usize, cap: usize },

    #[error("{expected} orders expected, got {got}")]
    OrderCount { expected: usize, got: usize },

    #[error("order {index} = {value} lies outside the open interval (0, 2)")]
    OrderOutOfRange { index: usize, value: f64 },

    #[error("bound exponent {0} is negative or not finite")]
    InvalidExponent(f64),

    #[error("quasi-polynomial vanishes identically")]
    ZeroPolynomial,

    #[error("quasi-polynomials are not evaluated at the branch point s = 0")]
    EvaluateAtOrigin,

    #[error("parse error in `{input}`: {message}")]
    Parse { input: String, message: String },

    #[error("unknown symbol `{0}`")]
    UnknownSymbol(String),

    #[error("expected {expected} slice coordinates, got {got}")]
    PointArity { expected: usize, got: usize },

    #[error("{0} is not an exact rational; use `analyze` for real-valued orders")]
    NotRational(String),

    #[error("polynomial degree {degree} exceeds the root finder cap of {cap}")]
    DegreeTooLarge { degree: usize, cap: usize },

    #[error(
        "root finder did not converge after {iterations} sweeps (worst backward error {worst:e})"
    )]
    NoConvergence { iterations: usize, worst: f64 },

    #[error("phase change {0} is not an integer multiple of pi")]
    NonIntegralWinding(f64),

    #[error("elimination is degenerate: sin of the exponent difference vanishes")]
    DegenerateElimination,

    #[error("trinomial boundary needs exactly three terms with one constant term")]
    NotTrinomial,

    #[error("segment endpoints carry the same classification ({0})")]
    SameClassification(String),

    #[error("invalid slice: {0}")]
    InvalidSlice(String),

    #[error(
        "region {region} is labelled {expected} but its representative at {point:?} re-verifies as {found} ({source_name})"
    )]
    RegionInconsistent {
        region: usize,
        expected: String,
        found: String,
        point: Vec<f64>,
        source_name: &'static str,
    },

    #[error("spec field `{field}`: {message}")]
    Spec { field: String, message: String },

    #[error("simulation: {0}")]
    Simulation(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn parse(input: &str, message: impl Into<String>) -> Self {
        Error::Parse {
            input: input.to_string(),
            message: message.into(),
        }
    }

    pub(crate) fn spec(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Spec {
            field: field.into(),
            message: message.into(),
        }
    }
}
