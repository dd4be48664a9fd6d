//! Distill expert policies into small interpretable classes, unfold them into
//! straight-line programs and measure how simulatable they are.

pub mod env;
pub mod error;
pub mod expert;
pub mod fit;
pub mod imitation;
pub mod metrics;
pub mod nn;
pub mod policy;
pub mod rng;
pub mod unfold;
pub mod verify;

pub use error::{Error, Result};
