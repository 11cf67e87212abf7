pub mod cli;
pub mod data;
pub mod error;
pub mod evalmetrics;
pub mod numerics;
pub mod model;
pub mod schedule;
pub mod training;
pub mod rng;
pub mod sampling;

pub use error::{Error, Result};
