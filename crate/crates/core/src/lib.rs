//! Discrete-event simulation of an electric ride-hailing fleet: trip
//! dispatch, charging policy, and the metrics that compare them.

pub mod charging;
pub mod config;
pub mod dispatch;
pub mod domain;
pub mod error;
pub mod geo;
pub mod ingest;
pub mod kernel;
pub mod log;
pub mod metrics;
mod processes;
pub mod scenario;
pub mod world;

pub use error::{Result, SimError};
