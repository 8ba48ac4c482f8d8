//! Semismooth Newton methods for composite problems `min f(x) + h(x)` with
//! a prox-friendly nonsmooth part, plus diagnostics for the regularity
//! conditions that drive their local convergence.

pub mod catalog;
pub mod diagnostics;
pub mod error;
pub mod exec;
pub mod experiments;
pub mod linalg;
pub mod manifold;
pub mod oracles;
pub mod problems;
pub mod residual;
pub mod rng;
pub mod solver;
pub mod verify;

pub use error::{Error, Result};
pub use linalg::{Matrix, Vector};

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");
