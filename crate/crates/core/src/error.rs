use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{file}:{line}: {message}")]
    Parse { file: String, line: usize, message: String },

    #[error("{file}:{line}: relationship for AS{a}-AS{b} conflicts with line {first_line}")]
    Conflict {
        file: String,
        line: usize,
        first_line: usize,
        a: u32,
        b: u32,
    },

    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("unknown country code {0}")]
    UnknownCountry(String),

    #[error("traceroute {0}: no hop resolved to an AS")]
    EmptyPath(String),

    #[error("linear model is degenerate ({0}); consider LASSO")]
    Degenerate(String),

    #[error("target {0} outside [0, 100]")]
    TargetOutOfRange(f64),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid configuration: {0}")]
    Config(String),
}

impl Error {
    pub(crate) fn parse(file: &str, line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            file: file.to_string(),
            line,
            message: message.into(),
        }
    }

    pub(crate) fn io(path: &std::path::Path, source: std::io::Error) -> Self {
        Error::Io {
            path: path.display().to_string(),
            source,
        }
    }
}
