use std::fmt;
use std::path::{Path, PathBuf};

use flowlab::FlowError;
use thiserror::Error;

/// A problem located in a scenario file.
#[derive(Debug, Clone, PartialEq)]
pub struct Diagnostic {
    pub path: PathBuf,
    pub line: usize,
    pub column: usize,
    pub message: String,
}

impl Diagnostic {
    /// Locates byte `offset` of `source` as a 1-based line and column.
    pub fn at(path: &Path, source: &str, offset: usize, message: impl Into<String>) -> Self {
        let offset = offset.min(source.len());
        let before = &source[..offset];
        let line = before.matches('\n').count() + 1;
        let column = before.rsplit('\n').next().map_or(0, |l| l.chars().count()) + 1;
        Diagnostic {
            path: path.to_path_buf(),
            line,
            column,
            message: message.into(),
        }
    }
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}:{}: {}", self.path.display(), self.line, self.column, self.message)
    }
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Scenario(Diagnostic),

    #[error("invalid scenario: {0}")]
    Invalid(String),

    #[error(transparent)]
    Flow(#[from] FlowError),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn offsets_map_to_lines_and_columns() {
        let src = "a = 1\nbb = 2\n";
        let d = Diagnostic::at(Path::new("s.toml"), src, 7, "here");
        assert_eq!((d.line, d.column), (2, 2));
        assert_eq!(d.to_string(), "s.toml:2:2: here");
        let d = Diagnostic::at(Path::new("s.toml"), src, 0, "start");
        assert_eq!((d.line, d.column), (1, 1));
    }
}
