//! Mellin symbol and weight calculus for the Laplacian on a straight cone,
//! with finite-volume evolution solvers on the truncated cone collar.

pub mod error;
pub mod mellin;
pub mod solver;
pub mod spectrum;
pub mod weights;

pub use error::{ConeError, Result};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
