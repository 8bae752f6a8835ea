use thiserror::Error;

/// Errors raised by model construction, discretization and the solvers.
///
/// Soft invariant violations found by sampling are not errors; they are
/// collected in [`crate::model::ValidationReport`].
#[derive(Debug, Error)]
pub enum Error {
    #[error("malformed problem: {0}")]
    Malformed(String),

    #[error("control value {0} is not in the control grid")]
    UnknownControl(f64),

    #[error("grid error: {0}")]
    Grid(String),

    #[error("stability bound violated: {0}")]
    Stability(String),

    #[error("implicit driver fixed point did not converge at node (k={k}, i={i}) after {iterations} iterations")]
    NonConvergent { k: usize, i: usize, iterations: usize },

    #[error("barrier order violated on the grid at (k={k}, i={i}): h1={h1} > h2={h2}")]
    BarrierOrder { k: usize, i: usize, h1: f64, h2: f64 },

    #[error("index out of range: {0}")]
    Index(String),

    #[error("enumeration budget exceeded: {0}")]
    Budget(String),

    #[error("closed form not applicable: {0}")]
    ClosedForm(String),

    #[error("terminal bound violated: {0}")]
    TerminalBound(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
