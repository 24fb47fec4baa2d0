//! Error taxonomy shared by every module.
//!
//! Four broad classes matter operationally: a point escaping a domain box, a
//! shape (dimension) mismatch, a validation failure at construction time, and
//! a malformed scenario configuration. Everything downstream maps onto these.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// A point lies outside (or on the boundary of) the relevant domain box.
    #[error("point {point:?} lies outside the domain box")]
    Domain { point: Vec<f64> },

    /// A dimension or value-shape mismatch between two objects.
    #[error("shape mismatch: {0}")]
    Shape(String),

    /// A constructor-level invariant failed (e.g. non-antisymmetric structure
    /// constants, covering condition violated).
    #[error("validation failed: {0}")]
    Validation(String),

    /// An operation-level precondition failed (e.g. a non-vertical section
    /// passed where a vertical one is required).
    #[error("precondition violated: {0}")]
    Precondition(String),

    /// Scenario/configuration parsing or resolution failure.
    #[error("config error: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }
    pub fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }
    pub fn precondition(msg: impl Into<String>) -> Self {
        Error::Precondition(msg.into())
    }
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }
}
