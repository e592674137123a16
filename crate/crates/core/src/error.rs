use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("numerical error: {0}")]
    Numerical(String),
    #[error("integration diverged at t = {t}: {msg}")]
    Divergence { t: f64, msg: String },
    #[error("tolerance {eps:e} unattainable at t = {t} (step floor reached)")]
    Tolerance { t: f64, eps: f64 },
    #[error("budget exceeded: {needed} cell simulations requested, budget {budget}")]
    Resource { needed: u64, budget: u64 },
    #[error("cell {cell}: {source}")]
    Cell {
        cell: String,
        #[source]
        source: Box<Error>,
    },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Process exit code for the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Io(_) => 2,
            Error::Resource { .. } => 1,
            Error::Cell { source, .. } => source.exit_code(),
            _ => 3,
        }
    }

    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
