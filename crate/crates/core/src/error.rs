use thiserror::Error;

/// Errors raised by the model, spectral, recursion, path and simulation routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("mean matrix at delay {delay} is not irreducible")]
    NonIrreducible { delay: usize },

    #[error("power iteration did not converge within {max_iters} iterations")]
    NoConvergence { max_iters: usize },

    #[error("row {row} of transition matrix sums to {sum}, expected 1")]
    NotStochastic { row: usize, sum: f64 },

    #[error("no bracket for the Malthusian root in [1e-9, 1e9]")]
    BracketFailure,

    #[error("model is not critical (theta = {theta})")]
    NotCritical { theta: f64 },

    #[error("mean matrices do not share Perron-Frobenius eigenvectors (max deviation {deviation})")]
    NotShared { deviation: f64 },

    #[error("lifetime tail series diverges: tail ratio * exp(-theta) = {ratio} >= 1")]
    TailDiverges { ratio: f64 },

    #[error("age distribution denominator vanishes")]
    DegenerateDenominator,

    #[error("mean trajectory overflowed at s = {step}")]
    HorizonTooLarge { step: usize },

    #[error("{what} exceeds cap {cap}")]
    CapExceeded { what: &'static str, cap: u64 },

    #[error("integer overflow computing {0}")]
    Overflow(&'static str),

    #[error("step distribution beta sums to {sum}, expected 1")]
    BetaNotNormalized { sum: f64 },

    #[error("every replica hit the population cap")]
    AllTruncated,

    #[error("schema error at {path}: {message}")]
    Schema { path: String, message: String },

    #[error("duplicate delay {0}")]
    DuplicateDelay(usize),

    #[error("negative entry at {path}")]
    NegativeEntry { path: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

impl Error {
    /// Short stable identifier used as the CLI diagnostic prefix.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::NonIrreducible { .. } => "non-irreducible",
            Error::NoConvergence { .. } => "no-convergence",
            Error::NotStochastic { .. } => "not-stochastic",
            Error::BracketFailure => "bracket-failure",
            Error::NotCritical { .. } => "not-critical",
            Error::NotShared { .. } => "not-shared",
            Error::TailDiverges { .. } => "tail-diverges",
            Error::DegenerateDenominator => "degenerate-denominator",
            Error::HorizonTooLarge { .. } => "horizon-too-large",
            Error::CapExceeded { .. } => "cap-exceeded",
            Error::Overflow(_) => "overflow",
            Error::BetaNotNormalized { .. } => "beta-not-normalized",
            Error::AllTruncated => "all-truncated",
            Error::Schema { .. } => "schema",
            Error::DuplicateDelay(_) => "duplicate-delay",
            Error::NegativeEntry { .. } => "negative-entry",
            Error::InvalidArgument(_) => "invalid-argument",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
