pub mod cli;
pub mod design;
pub mod error;
pub mod estimators;
pub mod eval;
pub mod hrf_basis;
pub mod linalg;
pub mod solver;
pub mod synth;

pub use error::{Error, Result};
