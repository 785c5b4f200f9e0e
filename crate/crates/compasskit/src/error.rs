use thiserror::Error;

/// Errors surfaced by the toolkit.
///
/// `SloInfeasible` is kept separate from generic planning errors because the
/// CLI maps it to its own exit code.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration space: {0}")]
    InvalidSpace(String),

    #[error("invalid scenario: {0}")]
    InvalidScenario(String),

    #[error("oracle error: {0}")]
    Oracle(String),

    #[error("evaluation error: {0}")]
    Evaluation(String),

    #[error("planning error: {0}")]
    Planning(String),

    #[error("SLO infeasible: {0}")]
    SloInfeasible(String),

    #[error("simulation error: {0}")]
    Simulation(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),

    #[error("scenario parse error: {0}")]
    Toml(#[from] toml::de::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
