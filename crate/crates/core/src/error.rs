use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid split: {n_train} training views requested out of {n_views}")]
    InvalidSplit { n_views: usize, n_train: usize },

    #[error("invalid kernel: {0}")]
    InvalidKernel(String),

    #[error("invalid dropout rate {0}")]
    InvalidRate(f64),

    #[error("invalid config `{key}`: {reason}")]
    InvalidConfig { key: String, reason: String },

    #[error("invalid protocol: {0}")]
    InvalidProtocol(String),

    #[error("non-finite gradient in parameter group `{group}`")]
    NonFiniteGradient { group: &'static str },

    #[error("non-finite loss at iteration {iteration}")]
    NonFiniteLoss { iteration: usize },

    #[error("parse error at byte {offset}: {message}")]
    Parse { offset: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn config(key: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::InvalidConfig {
            key: key.into(),
            reason: reason.into(),
        }
    }

    /// Wraps a serde_json error, translating its line/column into a byte offset of `src`.
    pub fn from_json(err: serde_json::Error, src: &str) -> Self {
        let offset = byte_offset(src, err.line(), err.column());
        Error::Parse {
            offset,
            message: err.to_string(),
        }
    }
}

fn byte_offset(src: &str, line: usize, column: usize) -> usize {
    if line == 0 {
        return 0;
    }
    let mut offset = 0;
    for (i, l) in src.split_inclusive('\n').enumerate() {
        if i + 1 == line {
            return offset + column.saturating_sub(1).min(l.len());
        }
        offset += l.len();
    }
    src.len()
}

pub type Result<T> = std::result::Result<T, Error>;
