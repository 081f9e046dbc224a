//! Vehicle platoon with delay-adaptive spacing over a lossy V2V network.

pub mod analysis;
pub mod control;
pub mod coordination;
pub mod dynamics;
pub mod error;
pub mod network;
pub mod sim;

pub use dynamics::{VehicleParams, VehicleState};
pub use error::{Error, Result};
