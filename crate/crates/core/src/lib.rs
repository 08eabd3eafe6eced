//! Crowdshipping assignment with a deep Q-network whose actions are
//! heuristic route edits, plus classical baselines.

pub mod actions;
pub mod baselines;
pub mod cli;
pub mod dqn;
pub mod env;
pub mod features;
pub mod instance;
pub mod plan;
pub mod reward;
pub mod rules;
