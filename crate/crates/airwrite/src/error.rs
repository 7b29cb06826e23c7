use std::path::{Path, PathBuf};

/// Process exit code for each failure class.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Config,
    Data,
    Runtime,
}

impl ErrorKind {
    pub fn exit_code(self) -> i32 {
        match self {
            ErrorKind::Config => 2,
            ErrorKind::Data => 3,
            ErrorKind::Runtime => 4,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum AppError {
    #[error("config error: {0}")]
    Config(String),

    #[error("{path}: {message}")]
    Data { path: PathBuf, message: String },

    #[error("{path}:{line}: {message}")]
    Line {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("data error: {0}")]
    Invalid(String),

    #[error(transparent)]
    Core(#[from] airwrite_core::Error),

    #[error("{0}")]
    Runtime(String),
}

pub type AppResult<T> = Result<T, AppError>;

impl AppError {
    pub fn data(path: impl AsRef<Path>, message: impl ToString) -> Self {
        AppError::Data {
            path: path.as_ref().to_path_buf(),
            message: message.to_string(),
        }
    }

    pub fn kind(&self) -> ErrorKind {
        use airwrite_core::Error as E;
        match self {
            AppError::Config(_) => ErrorKind::Config,
            AppError::Data { .. } | AppError::Line { .. } | AppError::Invalid(_) => ErrorKind::Data,
            AppError::Runtime(_) => ErrorKind::Runtime,
            AppError::Core(e) => match e {
                E::InvalidConfig(_) | E::ConfigMismatch(_) => ErrorKind::Config,
                E::BadMagic { .. }
                | E::VersionMismatch { .. }
                | E::Truncated(_)
                | E::Checksum { .. }
                | E::Metadata(_)
                | E::MissingSplit(_)
                | E::EmptyDataset
                | E::LabelOutOfRange { .. }
                | E::GlyphSize { .. }
                | E::NonMonotonicTimestamp { .. }
                | E::StreamTooShort { .. }
                | E::NoMotion
                | E::LengthMismatch { .. } => ErrorKind::Data,
                _ => ErrorKind::Runtime,
            },
        }
    }

    pub fn exit_code(&self) -> i32 {
        self.kind().exit_code()
    }
}
