//! Deep Q-learning laboratory: exact tabular oracles for small MDPs, a
//! dueling-MLP DQN trainer and diagnostics (neural tangent kernel, first-order
//! update decomposition, TD-error streams) that explain how learned Q values
//! move.

pub mod diagnostics;
pub mod dqn;
pub mod env;
pub mod error;
pub mod mdp;
pub mod metrics;
pub mod nn;
pub mod par;
pub mod report;
pub mod runner;

pub use error::{Error, Result};
