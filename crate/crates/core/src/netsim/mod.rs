//! Deterministic packet-level simulation of two DENA-guarded sites.

use thiserror::Error;

pub mod channel;
pub mod dena;
pub mod engine;
pub mod experiments;
pub mod host;
pub mod nat;
pub mod scenario;
pub mod trace;

pub use channel::{ChannelModel, ChannelStats};
pub use engine::{run, run_with, RunOptions};
pub use nat::{nat_forward, Direction, NatError, NatState};
pub use scenario::Scenario;
pub use trace::Trace;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum NetsimError {
    #[error("configuration error: {0}")]
    Config(String),
}
