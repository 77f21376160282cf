use thiserror::Error;

/// Errors raised by parameter construction, the schemes, and the harness.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum CirError {
    /// A field is negative, NaN or infinite, or a grid is empty.
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    /// The configuration is structurally fine but outside the domain a scheme is defined on.
    #[error("domain error: {0}")]
    Domain(String),

    /// An operation was called with an input it does not accept (wrong scheme, bad lengths).
    #[error("usage error: {0}")]
    Usage(String),
}

pub type Result<T> = std::result::Result<T, CirError>;

pub(crate) fn check_nonneg(name: &'static str, value: f64) -> Result<f64> {
    if !value.is_finite() {
        return Err(CirError::InvalidParameter {
            name,
            reason: format!("must be finite, got {value}"),
        });
    }
    if value < 0.0 {
        return Err(CirError::InvalidParameter {
            name,
            reason: format!("must be nonnegative, got {value}"),
        });
    }
    Ok(value)
}
