use thiserror::Error;

/// Errors surfaced by the estimation pipeline.
///
/// The CLI maps these onto exit codes: configuration problems are usage
/// errors, malformed input is a data error, and everything that reflects a
/// degenerate statistical situation (empty cells, exhausted risk sets,
/// monotone likelihoods) is a degeneracy error.
#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("{0}")]
    Domain(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("conflicting configuration: {0}")]
    ConflictingConfig(String),

    #[error("exposure column required but not measured")]
    MissingExposure,

    #[error("degenerate counts: {0}")]
    DegenerateCounts(String),

    #[error("degenerate incidence: {0}")]
    DegenerateIncidence(String),

    #[error("risk set exhausted at interval {0}")]
    RiskSetExhausted(u32),

    #[error("partial likelihood fit did not converge within {0} iterations")]
    CoxNoConverge(usize),

    #[error("monotone partial likelihood: {0}")]
    Separation(String),

    #[error("all {0} bootstrap replicates were degenerate")]
    BootstrapFailure(u32),

    #[error("test infeasible: {0}")]
    TestInfeasible(String),

    #[error("outside the bounded regime: {0}")]
    OutOfRegime(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for errors caused by empty cells, exhausted risk sets or other
    /// data configurations where the requested functional is undefined.
    pub fn is_degenerate(&self) -> bool {
        matches!(
            self,
            Error::DegenerateCounts(_)
                | Error::DegenerateIncidence(_)
                | Error::RiskSetExhausted(_)
                | Error::CoxNoConverge(_)
                | Error::Separation(_)
                | Error::BootstrapFailure(_)
                | Error::TestInfeasible(_)
                | Error::OutOfRegime(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
