pub mod agent;
pub mod env;
pub mod error;
pub mod harness;
pub mod metrics;
pub mod nn;
pub mod online_aware;

pub use error::{Error, Result};
