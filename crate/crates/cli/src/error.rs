use std::path::Path;

use hetrain_core::Error;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),

    #[error("{path}: {source}")]
    File { path: String, source: Error },

    #[error(transparent)]
    Core(#[from] Error),
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Core(e.into())
    }
}

impl CliError {
    pub fn usage(msg: impl Into<String>) -> Self {
        CliError::Usage(msg.into())
    }

    pub fn at(path: &Path, source: impl Into<Error>) -> Self {
        CliError::File {
            path: path.display().to_string(),
            source: source.into(),
        }
    }

    /// 1 usage, 2 data or format, 3 protocol or timeout, 4 level exhausted.
    pub fn exit_code(&self) -> u8 {
        let core = match self {
            CliError::Usage(_) => return 1,
            CliError::File { source, .. } | CliError::Core(source) => source,
        };
        match core {
            Error::Protocol(_) | Error::Timeout { .. } => 3,
            Error::LevelExhausted { .. } => 4,
            _ => 2,
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes() {
        assert_eq!(CliError::usage("x").exit_code(), 1);
        assert_eq!(CliError::from(Error::Schema("x".into())).exit_code(), 2);
        assert_eq!(
            CliError::at(Path::new("f"), Error::Format("x".into())).exit_code(),
            2
        );
        let t = Error::Timeout {
            worker: "w".into(),
            secs: 1.0,
        };
        assert_eq!(CliError::from(t).exit_code(), 3);
        assert_eq!(CliError::from(Error::Protocol("x".into())).exit_code(), 3);
        let l = Error::LevelExhausted {
            op: "mult",
            needed: 1,
            available: 0,
        };
        assert_eq!(CliError::from(l).exit_code(), 4);
    }
}
