use thiserror::Error;

/// Errors produced by fitting, sampling and I/O.
///
/// `Usage` and `Data` variants describe bad input; the rest are numerical
/// failures. [`Error::is_input_error`] splits the two for exit-code mapping.
#[derive(Debug, Error)]
pub enum Error {
    #[error("usage error: {0}")]
    Usage(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("region {region}: hazard piece {} (1-based) has no events, its log-hazard estimate diverges", .piece + 1)]
    EmptyPiece { region: String, piece: usize },

    #[error("region {region}: Newton iterations did not converge ({reason})")]
    NoConvergence { region: String, reason: String },

    #[error("region {region}: Hessian is singular (design rank deficient)")]
    RankDeficient { region: String },

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("{context}: {source}")]
    Context {
        context: String,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn with_context(self, context: impl Into<String>) -> Self {
        Error::Context {
            context: context.into(),
            source: Box::new(self),
        }
    }

    /// True for errors caused by the caller's input rather than a bug or
    /// numerical breakdown in the library.
    pub fn is_input_error(&self) -> bool {
        match self {
            Error::Usage(_)
            | Error::Data(_)
            | Error::EmptyPiece { .. }
            | Error::NoConvergence { .. }
            | Error::RankDeficient { .. }
            | Error::Io(_)
            | Error::Csv(_)
            | Error::Json(_) => true,
            Error::Numeric(_) => false,
            Error::Context { source, .. } => source.is_input_error(),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
