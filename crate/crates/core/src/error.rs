use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Two operands or config sections disagree on a dimension.
    #[error("dimension mismatch at {context}: expected {expected}, found {found}")]
    Dimension {
        context: String,
        expected: String,
        found: String,
    },

    /// A value violates a documented precondition or type invariant.
    #[error("invalid input: {0}")]
    Invalid(String),

    /// Scenario document failed validation; `path` is a JSON pointer.
    #[error("config error at {path}: {message}")]
    Config { path: String, message: String },

    /// A privacy series or ledger sum does not converge.
    #[error("divergent configuration: {0}")]
    Divergent(String),

    /// No admissible design exists. `margin` is the amount by which the
    /// feasibility inequality is violated (nonnegative).
    #[error("infeasible design: {message} (margin {margin})")]
    Infeasible { message: String, margin: f64 },

    /// Numerical routine failed (eigensolver, overflow, orthonormalization).
    #[error("numerical failure: {0}")]
    Numeric(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn dim(context: impl Into<String>, expected: impl ToString, found: impl ToString) -> Self {
        Error::Dimension {
            context: context.into(),
            expected: expected.to_string(),
            found: found.to_string(),
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }

    pub(crate) fn config(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            path: path.into(),
            message: message.into(),
        }
    }

    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Dimension { .. } | Error::Invalid(_) | Error::Config { .. } => 2,
            Error::Infeasible { .. } | Error::Divergent(_) => 3,
            Error::Numeric(_) | Error::Io { .. } => 4,
        }
    }
}
