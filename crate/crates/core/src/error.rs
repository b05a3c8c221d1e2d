use thiserror::Error;

/// Errors raised by the analysis and code-harness routines.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid field: {0}")]
    InvalidField(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("work budget exceeded: {needed} terms required, budget is {budget}")]
    BudgetExceeded { needed: u128, budget: u128 },

    #[error("invalid norm exponent {0}")]
    InvalidExponent(f64),

    #[error("value out of range: {0}")]
    OutOfRange(String),

    #[error("linear forms {0} and {1} are proportional")]
    ProportionalForms(usize, usize),

    #[error("linear form {0} is the zero form")]
    ZeroForm(usize),

    #[error("invalid linear system: {0}")]
    InvalidSystem(String),

    #[error("g_{index} depends on coordinate {index}")]
    DependsOnCoordinate { index: usize },

    /// The exact 2^r-th power of a Gowers norm came out negative or complex.
    #[error("Gowers average {re} + {im}i is not a nonnegative real")]
    NotNonnegative { re: f64, im: f64 },

    #[error("degree constraint violated: {0}")]
    DegreeConstraint(String),

    #[error("factor is not a refinement of the coarser factor")]
    NotRefinement,

    #[error("energy increment {increment} below required {required} at step {step}")]
    EnergyIncrement {
        step: usize,
        increment: f64,
        required: f64,
    },

    #[error("empty net")]
    EmptyNet,

    #[error("field too small: {0}")]
    FieldTooSmall(String),

    #[error("code has fewer than two codewords")]
    TooFewCodewords,

    #[error("code carries no local-correction certification")]
    CertificationAbsent,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
