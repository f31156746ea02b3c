//! Error type shared by the whole crate.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Failure class used to pick the process exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitClass {
    /// Invalid configuration or command-line usage.
    Config = 1,
    /// Unreadable, malformed, or insufficient input data.
    Data = 2,
    /// A numerical operation could not produce a meaningful result.
    Numerical = 3,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter {name} = {value}: {reason}")]
    Parameter {
        name: &'static str,
        value: f64,
        reason: &'static str,
    },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("insufficient tail: need at least {needed} points at or above the cutoff, got {got}")]
    InsufficientTail { needed: usize, got: usize },

    #[error("degenerate tail: {0}")]
    DegenerateTail(String),

    #[error("empty tail: no sample points at or above the cutoff")]
    EmptyTail,

    #[error("no cutoff candidate leaves at least {floor} tail points")]
    NoCandidates { floor: usize },

    #[error("cutoff mismatch: power-law fit uses s_min = {pl}, log-normal fit uses s_min = {ln}")]
    CutoffMismatch { pl: f64, ln: f64 },

    #[error("line {line}: {reason}")]
    MalformedRow { line: u64, reason: String },

    #[error("schema mismatch: missing columns {missing:?}")]
    SchemaMismatch { missing: Vec<String> },

    #[error("no CPI index value for month {month}")]
    MissingCpiMonth { month: String },

    #[error("empty snapshot: no records for {month}")]
    EmptySnapshot { month: String },

    #[error("empty sample")]
    EmptySample,

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Maps every error to the exit-code class the CLI reports.
    pub fn exit_class(&self) -> ExitClass {
        use Error::*;
        match self {
            Config(_) | Parameter { .. } => ExitClass::Config,
            MalformedRow { .. }
            | SchemaMismatch { .. }
            | MissingCpiMonth { .. }
            | EmptySnapshot { .. }
            | EmptySample
            | InsufficientTail { .. }
            | EmptyTail
            | NoCandidates { .. }
            | Io(_)
            | Csv(_)
            | Json(_) => ExitClass::Data,
            Domain(_) | DegenerateTail(_) | CutoffMismatch { .. } | Numerical(_) => {
                ExitClass::Numerical
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_classes_cover_the_three_failure_kinds() {
        assert_eq!(Error::Config("x".into()).exit_class() as i32, 1);
        assert_eq!(
            Error::Parameter {
                name: "zeta",
                value: 0.0,
                reason: "must be positive",
            }
            .exit_class() as i32,
            1
        );
        assert_eq!(Error::EmptySample.exit_class() as i32, 2);
        assert_eq!(
            Error::SchemaMismatch { missing: vec![] }.exit_class() as i32,
            2
        );
        assert_eq!(Error::Numerical("overflow".into()).exit_class() as i32, 3);
        assert_eq!(
            Error::DegenerateTail("flat".into()).exit_class() as i32,
            3
        );
    }
}
