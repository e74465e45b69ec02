//! Front door of the teleoperation engine: wire protocol, live server,
//! trace files, the scripted cube tasks and the IK benchmark.

pub mod bench;
pub mod config;
pub mod error;
pub mod protocol;
pub mod server;
pub mod task;
pub mod trace;

pub use error::{GatewayError, Result};
