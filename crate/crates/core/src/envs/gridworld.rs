//! A small 4-connected grid with slippery moves and noisy position readings.
//!
//! Cells are numbered row-major from the top-left corner. A move succeeds
//! with probability `1 - slip_prob` and otherwise leaves the agent in place;
//! moves into a wall also stay put. The position reading is correct with
//! probability `1 - slip_prob` and otherwise names one of the other cells
//! uniformly.

use serde::{Deserialize, Serialize};

use crate::envs::env::Scenario;
use crate::error::{Error, Result};
use crate::model::{PreferencePrior, Preferences};
use crate::modelfile::{Labels, ModelFile, SCHEMA_VERSION};
use crate::prob::Categorical;

pub const MAX_CELLS: usize = 36;
/// Largest `|x-trajectories| · |y-trajectories|` a gridworld may span.
pub const MAX_TRAJECTORY_PAIRS: u128 = 4_000_000;
/// Preference mass placed on the goal at the final step.
pub const GOAL_MASS: f64 = 1.0 - 1e-4;

pub const UP: usize = 0;
pub const DOWN: usize = 1;
pub const LEFT: usize = 2;
pub const RIGHT: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GridSpec {
    pub width: usize,
    pub height: usize,
    pub slip_prob: f64,
    pub start: usize,
    pub goal: usize,
    pub horizon: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            width: 2,
            height: 2,
            slip_prob: 0.0,
            start: 0,
            goal: 3,
            horizon: 2,
        }
    }
}

impl GridSpec {
    pub fn cells(&self) -> usize {
        self.width * self.height
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.cells();
        if n == 0 || n > MAX_CELLS {
            return Err(Error::Config(format!(
                "grid of {n} cells (allowed 1..={MAX_CELLS})"
            )));
        }
        if !(0.0..=0.5).contains(&self.slip_prob) {
            return Err(Error::Config("slip_prob must lie in [0, 0.5]".into()));
        }
        if self.start >= n || self.goal >= n {
            return Err(Error::Config(
                "start and goal must be cells of the grid".into(),
            ));
        }
        if self.horizon == 0 {
            return Err(Error::Config("horizon must be at least 1".into()));
        }
        let pairs = (n as u128).checked_pow(2 * self.horizon as u32 + 1);
        if pairs.is_none_or(|p| p > MAX_TRAJECTORY_PAIRS) {
            return Err(Error::Config(format!(
                "{n} cells over horizon {} exceeds the enumeration budget",
                self.horizon
            )));
        }
        Ok(())
    }

    /// Cell reached by `action` from `cell` when the move succeeds.
    pub fn neighbour(&self, cell: usize, action: usize) -> usize {
        let (r, c) = (cell / self.width, cell % self.width);
        match action {
            UP if r > 0 => cell - self.width,
            DOWN if r + 1 < self.height => cell + self.width,
            LEFT if c > 0 => cell - 1,
            RIGHT if c + 1 < self.width => cell + 1,
            _ => cell,
        }
    }

    /// Fewest moves from `a` to `b`.
    pub fn distance(&self, a: usize, b: usize) -> usize {
        let (ra, ca) = (a / self.width, a % self.width);
        let (rb, cb) = (b / self.width, b % self.width);
        ra.abs_diff(rb) + ca.abs_diff(cb)
    }

    pub fn model_file(&self) -> Result<ModelFile> {
        self.validate()?;
        let n = self.cells();
        let eps = self.slip_prob;
        let transition = (0..4)
            .map(|a| {
                (0..n)
                    .map(|x| {
                        let mut row = vec![0.0; n];
                        row[x] += eps;
                        row[self.neighbour(x, a)] += 1.0 - eps;
                        row
                    })
                    .collect()
            })
            .collect();
        let likelihood = vec![(0..n)
            .map(|x| {
                (0..n)
                    .map(|y| {
                        if n == 1 {
                            1.0
                        } else if x == y {
                            1.0 - eps
                        } else {
                            eps / (n - 1) as f64
                        }
                    })
                    .collect()
            })
            .collect()];
        let goal: Vec<f64> = (0..n)
            .map(|x| {
                if n == 1 {
                    1.0
                } else if x == self.goal {
                    GOAL_MASS
                } else {
                    (1.0 - GOAL_MASS) / (n - 1) as f64
                }
            })
            .collect();
        let mut initial = vec![0.0; n];
        initial[self.start] = 1.0;
        let cells: Vec<String> = (0..n)
            .map(|x| format!("r{}c{}", x / self.width, x % self.width))
            .collect();
        Ok(ModelFile {
            schema_version: SCHEMA_VERSION,
            labels: Some(Labels {
                states: cells.clone(),
                observations: cells,
                actions: ["up", "down", "left", "right"]
                    .iter()
                    .map(|s| s.to_string())
                    .collect(),
                hypotheses: vec!["grid".into()],
            }),
            initial_state: initial,
            theta_prior: vec![1.0],
            likelihood,
            transition,
            horizon: self.horizon,
            policies: None,
            policy_prior: None,
            preference: Preferences::Fixed(PreferencePrior::final_step(Categorical::from_probs(
                &goal,
            )?)),
            obs_preference: None,
        })
    }
}

/// The gridworld model, its goal preference and a world identical to the model.
pub fn build_gridworld(spec: &GridSpec) -> Result<Scenario> {
    Scenario::from_file(spec.model_file()?)
}
