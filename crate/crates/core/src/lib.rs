pub mod bezier;
pub mod env;
pub mod error;
pub mod eval;
pub mod experiment;
pub mod expert;
pub mod geometry;
pub mod nn;
pub mod policy;
pub mod reward;
pub mod rtd;
pub mod tracks;
pub mod trainer;

pub use error::{Error, Result};
