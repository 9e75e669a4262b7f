pub mod assembly;
pub mod enthalpy;
pub mod error;
pub mod expr;
pub mod geometry;
pub mod harness;
pub mod solver;
pub mod spaces;
pub mod verify;

pub use error::{Error, Result};
