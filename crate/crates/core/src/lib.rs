//! Reachability analysis of nonlinear ODEs by validated simulation and
//! trajectory-local discrepancy bounds, applied to parameter synthesis for
//! the C. elegans tap-withdrawal circuit.

pub mod circuit;
pub mod discrepancy;
pub mod error;
pub mod field;
pub mod interval;
pub mod linalg;
pub mod odesim;
pub mod output;
pub mod properties;
pub mod reach;
pub mod sweep;
pub mod validate;

pub use error::{Error, Result};

/// Engine version embedded in output headers.
pub const ENGINE_VERSION: &str = env!("CARGO_PKG_VERSION");

/// The circuit definition shipped with the crate.
pub const DEFAULT_CIRCUIT: &str = include_str!("../data/tw_circuit.toml");
