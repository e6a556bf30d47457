//! Simulation and locking algorithm for a four-stage silicon-photonics
//! dynamic polarization controller.

pub mod anneal;
pub mod device;
pub mod disturbance;
pub mod error;
pub mod harness;
pub mod jones;

pub use error::{Error, Result};
