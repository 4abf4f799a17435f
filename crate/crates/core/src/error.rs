use thiserror::Error;

/// Failure modes shared by every module of the engine.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("model ill-defined: {0}")]
    IllDefined(String),
    #[error("capacity exceeded: {0}")]
    Capacity(String),
    #[error("no coexistence: {0}")]
    NoCoexistence(String),
    #[error("flat coexistence: phi is constant between the minimizers")]
    FlatCoexistence,
    #[error("witness rejected: phi < phi0 at r = {radius}")]
    WitnessRejected { radius: f64 },
    #[error("degenerate measure: {0}")]
    Degenerate(String),
    #[error("internal error: {0}")]
    Internal(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Domain(msg.into()))
}

pub(crate) fn config<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Config(msg.into()))
}
