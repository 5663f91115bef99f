use gisr_tensor::TensorError;

#[derive(Debug, thiserror::Error)]
pub enum CoreError {
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("argument error: {0}")]
    Argument(String),
    #[error("shape error: {0}")]
    Shape(String),
    #[error("numeric error: {0}")]
    Numeric(String),
    #[error("format error: {0}")]
    Format(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl CoreError {
    pub fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        CoreError::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }

    /// True for failures caused by non-finite or diverging numbers, as
    /// opposed to bad input.
    pub fn is_numeric(&self) -> bool {
        matches!(
            self,
            CoreError::Numeric(_) | CoreError::Tensor(TensorError::Numeric(_))
        )
    }
}

pub type Result<T> = std::result::Result<T, CoreError>;

pub(crate) fn arg<T>(msg: impl Into<String>) -> Result<T> {
    Err(CoreError::Argument(msg.into()))
}

pub(crate) fn shape<T>(msg: impl Into<String>) -> Result<T> {
    Err(CoreError::Shape(msg.into()))
}
