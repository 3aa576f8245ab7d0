use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("unsupported configuration: {0}")]
    Unsupported(String),
    #[error("operator construction failed: {0}")]
    Construction(String),
    #[error("step {step} failed: {reason} (last residual {residual:.3e})")]
    Step {
        step: usize,
        reason: String,
        residual: f64,
    },
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("serialization error: {0}")]
    Serialization(String),
}

impl Error {
    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }

    /// True for errors caused by the input configuration or the filesystem
    /// rather than by the numerics.
    pub fn is_config_or_io(&self) -> bool {
        matches!(
            self,
            Error::Config(_) | Error::Unsupported(_) | Error::Io { .. } | Error::Serialization(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn finite(name: &str, x: f64) -> Result<f64> {
    if x.is_finite() {
        Ok(x)
    } else {
        Err(Error::Domain(format!("{name} must be finite, got {x}")))
    }
}
