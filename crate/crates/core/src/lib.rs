//! RAN-slicing laboratory: a deterministic downlink slicing simulator behind
//! an episodic environment, closed-form baseline policies, SAC and CQL
//! trainers, the offline dataset pipeline and experiment orchestration.

pub mod algos;
pub mod datasets;
pub mod env;
pub mod error;
pub mod harness;
pub mod policies;
pub mod sim;

pub use error::{Error, Result};
