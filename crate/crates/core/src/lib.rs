pub mod batch;
pub mod error;
pub mod ik;
pub mod kinematics;
pub mod mapping;
pub mod robot_sim;
pub mod session;

pub use error::{Error, Result};
