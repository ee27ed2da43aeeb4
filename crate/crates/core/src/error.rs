use thiserror::Error;

/// Failure classes shared by every module.
///
/// `Input` covers bad data (out-of-range p-values, mismatched lengths),
/// `Config` covers bad parameters, and `Internal` flags a broken invariant.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("input error: {0}")]
    Input(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("internal invariant violated: {0}")]
    Internal(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn input<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Input(msg.into()))
}

pub(crate) fn config<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Config(msg.into()))
}

pub(crate) fn check_alpha(alpha: f64, what: &str) -> Result<()> {
    if alpha.is_finite() && alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        config(format!("{what} must lie in (0, 1), got {alpha}"))
    }
}
