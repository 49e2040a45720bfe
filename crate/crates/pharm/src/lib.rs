//! p-harmonic replacement toolkit for monotone maps between circular domains.

pub mod cli;
pub mod error;
pub mod geometry;
pub mod mesh;
pub mod psolve;
pub mod replacement;
mod sparse;

pub use error::{Error, Result};
