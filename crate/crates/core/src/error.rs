use std::path::PathBuf;

/// Errors produced by the solvers and simulators.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A caller-supplied value is malformed or out of range.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// A documented precondition does not hold (for example a state of
    /// charge outside `[0, capacity]`).
    #[error("precondition violated: {0}")]
    Precondition(String),

    /// The argument lies outside the domain of the function.
    #[error("domain error: {0}")]
    Domain(String),

    /// Throughput moments contradict `x_low >= x_high` by more than their
    /// sampling error allows.
    #[error("inconsistent throughput moments for firm {firm}: x_low = {x_low}, x_high = {x_high}")]
    InconsistentMoments {
        firm: usize,
        x_low: f64,
        x_high: f64,
    },

    /// The first-order condition has no root on the bracket. `left_value`
    /// is the residual at the lower end, which tells a corner solution
    /// (`left_value <= 0`) apart from an interior one lying past the bracket.
    #[error("no root in [{lo}, {hi}] (residual at lower end {left_value})")]
    NoRoot { lo: f64, hi: f64, left_value: f64 },

    /// The first-order condition changes sign more than once on the bracket.
    #[error("ambiguous root: {} sign changes, roots {roots:?}", roots.len())]
    Ambiguous { roots: Vec<f64> },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// True for failures of a solver (as opposed to bad input).
    pub fn is_solver_failure(&self) -> bool {
        matches!(
            self,
            Error::NoRoot { .. } | Error::Ambiguous { .. } | Error::InconsistentMoments { .. }
        )
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidInput(msg.into())
}
