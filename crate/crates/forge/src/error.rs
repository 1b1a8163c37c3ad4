use std::path::PathBuf;

#[derive(thiserror::Error, Debug)]
pub enum ForgeError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Image {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },

    #[error("codec: {0}")]
    Codec(#[from] image::ImageError),

    #[error("manifest line {line}: {reason}")]
    Manifest { line: usize, reason: String },

    /// A parameter outside the allowed operation domain.
    #[error("{0}")]
    Domain(String),

    #[error("invalid data: {0}")]
    Data(String),

    #[error(transparent)]
    Core(#[from] amten_core::Error),
}

pub type Result<T> = std::result::Result<T, ForgeError>;

pub(crate) fn io_err(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> ForgeError {
    let path = path.into();
    move |source| ForgeError::Io { path, source }
}
