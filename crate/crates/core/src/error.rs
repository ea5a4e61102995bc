use thiserror::Error;

use crate::ast::AstError;
use crate::minilang::MiniLangError;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("unknown node kind '{0}' and the unknown-kind slot is disabled")]
    UnknownKind(String),
    #[error("invalid data: {0}")]
    Data(String),
    #[error("unsupported model format version {found} (this build reads up to {supported})")]
    Version { found: u32, supported: u32 },
    #[error("model file is corrupt: {0}")]
    Corrupt(String),
    #[error("checksum mismatch: model file is truncated or corrupt")]
    Checksum,
    #[error("training diverged: non-finite loss at epoch {epoch}, batch {batch}")]
    Diverged { epoch: usize, batch: usize },
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Ast(#[from] AstError),
    #[error(transparent)]
    MiniLang(#[from] MiniLangError),
}

impl Error {
    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
