//! Active-inference planning over discrete state spaces.
//!
//! Expected free energy, variational free energy with epistemic priors, and
//! the policy posterior they induce, all by exact enumeration.

pub mod efe;
pub mod envs;
pub mod epistemic;
pub mod error;
pub mod model;
pub mod modelfile;
pub mod oracle;
pub mod planner;
pub mod posterior;
pub mod prob;
pub mod random;
pub mod suite;

pub use error::{Error, Result};
