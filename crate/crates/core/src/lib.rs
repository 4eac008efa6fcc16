//! Rope system identification from a short wiggle observation, and
//! goal-conditioned trajectory optimization against the identified rope.

pub mod arm;
pub mod augment;
pub mod cmaes;
pub mod dataset;
pub mod digest;
pub mod error;
pub mod eval;
pub mod nn;
pub mod observation;
pub mod params;
pub mod pipeline;
pub mod seeds;
pub mod sim;
pub mod sysid;
pub mod tasks;
pub mod wiggle;

pub use error::{Error, Result};
