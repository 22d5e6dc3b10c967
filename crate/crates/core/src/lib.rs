//! Estimation and inference for dynamic discrete choice models solved by
//! approximate dynamic programming, with certified bounds on how far the
//! approximate value differences can be from the exact ones.

pub mod bounds;
pub mod cli;
pub mod dp;
pub mod error;
pub mod experiments;
pub mod inference;
pub mod model;
pub mod rng;
pub mod sim;

pub use error::{Error, Result};
