//! Traffic-steering simulator for a dual-RAT (LTE macro + NR small cell)
//! network where every UE carries its own DQN agent.

pub mod agent;
pub mod central;
pub mod compression;
pub mod error;
pub mod federation;
pub mod harness;
pub mod nn;
pub mod ran;
pub mod rng;
pub mod sim;

pub use error::{Error, Result};
