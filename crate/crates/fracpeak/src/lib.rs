pub mod cli;
pub mod corrections;
pub mod energy;
pub mod error;
pub mod gridcore;
pub mod groundstate;
pub mod linalg;
pub mod reduction;
pub mod verify;

pub use error::{Error, Result};
