//! Distance marching: a learned distance-like field `u` with a direction
//! field `v`, trained without time conditioning, plus closed-form
//! denoising oracles, samplers and point-cloud metrics.

pub mod assignment;
pub mod data;
pub mod error;
pub mod field;
pub mod losses;
pub mod metrics;
pub mod oracles;
pub mod samplers;
pub mod trainer;
pub mod vecops;

pub use error::{Error, Result};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
