//! Dynamical synergy extraction for overactuated tendon-driven systems and a
//! grouped-action soft actor-critic that exploits the discovered groups.

pub mod cli;
pub mod digest;
pub mod error;
pub mod exec;
pub mod matrix;
pub mod muscle;
pub mod nn;
pub mod plant;
pub mod policy;
pub mod sac;
pub mod synergy;
pub mod tasks;

pub use error::{Error, Result};
pub use exec::Parallelism;
