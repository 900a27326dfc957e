use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Structural validation of model inputs failed (dangling ids, empty
    /// images, non-finite positions, ...).
    #[error("invalid model: {0}")]
    InvalidModel(String),

    /// Vocabulary or embedding training could not run on the given data.
    #[error("training failed: {0}")]
    Training(String),

    /// Pipeline parameters violate their documented ranges.
    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    /// Synthetic scene configuration is out of range or unsatisfiable.
    #[error("invalid scene config: {0}")]
    InvalidConfig(String),

    /// Malformed or inconsistent model container data.
    #[error("container: {0}")]
    Container(String),

    /// Malformed query, params, results or ground-truth file.
    #[error("file format: {0}")]
    FileFormat(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
