//! Crate-wide error type. Variants map onto the CLI exit code classes:
//! configuration/user errors (2), data errors (3), numerical failures (4).

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("non-finite input in {0}")]
    NonFinite(&'static str),

    #[error("bearing undefined for coincident points")]
    DegenerateBearing,

    #[error("path length mismatch: {left} vs {right}")]
    PathLengthMismatch { left: usize, right: usize },

    #[error("a path needs at least one point")]
    EmptyPath,

    #[error("winding plan keys do not match the neighbor set")]
    PlanMismatch,

    #[error("{got} neighbors exceed the planner capacity of {capacity}")]
    NeighborCapacity { got: usize, capacity: usize },

    #[error("parameter vector has length {got}, architecture needs {expected}")]
    ParamShape { got: usize, expected: usize },

    #[error("sequence lengths disagree: {0}")]
    LengthMismatch(&'static str),

    #[error("no feasible scenario found within {0} attempts")]
    InfeasibleScenario(usize),

    #[error("metric undefined: {0}")]
    MetricUndefined(&'static str),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid data: {0}")]
    Data(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Process exit code for the CLI: 2 user/config, 3 data, 4 numerical.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 2,
            Error::Numerical(_) => 4,
            Error::Io(_) | Error::Data(_) | Error::InfeasibleScenario(_) => 3,
            // Contract violations surfacing at the CLI boundary mean bad user input.
            _ => 2,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
