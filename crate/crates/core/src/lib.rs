pub mod control;
pub mod error;
pub mod fixed_point;
pub mod flow;
pub mod group;
pub mod lift;
pub mod linalg;
pub mod reach;
pub mod scenario;
pub mod spectral;
pub mod verify;

pub use error::{Error, Result};
