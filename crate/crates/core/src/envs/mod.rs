//! Simulated worlds and the sliding-horizon agent that acts in them.

pub mod agent;
pub mod env;
pub mod gridworld;
pub mod tmaze;

pub use agent::{run_episode, DecisionRule, EpisodeLog, EpisodeSettings, StepLog};
pub use env::{Environment, Scenario, World};
pub use gridworld::{build_gridworld, GridSpec};
pub use tmaze::{build_tmaze, TMazeSpec};
