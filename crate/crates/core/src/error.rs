use std::fmt;

use crate::package::Diagnostic;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// The document does not match the schema (missing key, wrong unit tag, bad type).
    #[error("schema error at {path}: {message}")]
    Schema { path: String, message: String },

    /// The document parsed but violates one or more invariants.
    #[error("invalid package:\n{}", DiagnosticList(.0))]
    Invalid(Vec<Diagnostic>),

    /// A text file (trace, model, DSS) is malformed.
    #[error("{file}: line {line}: {message}")]
    Parse {
        file: String,
        line: usize,
        message: String,
    },

    /// Input outside the domain of an operation.
    #[error("{0}")]
    Domain(String),

    /// The package cannot be turned into a connected network.
    #[error("build error: {0}")]
    Build(String),

    /// An integrator, factorization or matrix function failed.
    #[error("numerical failure: {message}{}", .last_time.map(|t| format!(" (last good time {t} s)")).unwrap_or_default())]
    Numerical {
        message: String,
        last_time: Option<f64>,
    },

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn numerical(msg: impl Into<String>) -> Self {
        Error::Numerical {
            message: msg.into(),
            last_time: None,
        }
    }

    pub(crate) fn parse(file: &str, line: usize, msg: impl Into<String>) -> Self {
        Error::Parse {
            file: file.to_string(),
            line,
            message: msg.into(),
        }
    }

    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }

    /// Process exit code for this error: 2 for numerical failures, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Numerical { .. } => 2,
            _ => 1,
        }
    }
}

struct DiagnosticList<'a>(&'a [Diagnostic]);

impl fmt::Display for DiagnosticList<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (n, d) in self.0.iter().enumerate() {
            if n > 0 {
                writeln!(f)?;
            }
            write!(f, "  {d}")?;
        }
        Ok(())
    }
}
