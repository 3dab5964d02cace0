//! Semi-on-demand (SoD) shared-autonomous-vehicle feeder simulator.
//!
//! A vehicle leaving the terminus serves scheduled fixed stops along the
//! first part of the corridor, then makes door-to-door stops inside its
//! assigned flexible zone(s) before returning. Dispatching of the
//! controllable part of the fleet can be delegated to a PPO-trained policy.

pub mod demand;
pub mod dispatch;
pub mod econ;
pub mod env;
pub mod error;
pub mod experiment;
pub mod matching;
pub mod network;
pub mod ppo;
pub mod scenario;
pub mod schedule;
pub mod sim;

pub use error::{Error, Result};
