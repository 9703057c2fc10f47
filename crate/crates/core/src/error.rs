use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("no boundary pair at distance > {separation} found on the boundary of B({radius}) within {attempts} attempts")]
    SeparationInfeasible {
        radius: f64,
        separation: f64,
        attempts: u64,
    },

    #[error("walk did not stop within the hard cap of {cap} steps")]
    HorizonExceeded { cap: u64 },

    #[error("{what}: {needed} exceeds the budget of {budget}")]
    BudgetExceeded {
        what: &'static str,
        needed: u128,
        budget: u128,
    },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("path extension too short: time {time} needs {needed} stored vertices, path has {available}")]
    InsufficientExtension {
        time: usize,
        needed: usize,
        available: usize,
    },

    #[error("filter `{filter}` removed {removed_fraction:.3} of the mass (limit 0.9)")]
    DegenerateFilter {
        filter: String,
        removed_fraction: f64,
    },

    #[error("coupling marginal mismatch: {0}")]
    MarginalMismatch(String),

    #[error("drive step {step} failed: {reason}")]
    StepFailed { step: usize, reason: String },
}

pub type Result<T> = std::result::Result<T, Error>;
