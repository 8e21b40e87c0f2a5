//! A four-location T-maze with an informative cue.
//!
//! The agent starts in the center. One arm is rewarding; which one is the
//! unknown hypothesis `θ`. The center emits cue symbols at random, the cue
//! location shows the rewarding side without noise, and the arms pay out
//! stochastically. Arms are absorbing.

use serde::{Deserialize, Serialize};

use crate::envs::env::Scenario;
use crate::error::{Error, Result};
use crate::model::{PreferenceMode, PreferencePrior, Preferences};
use crate::modelfile::{Labels, ModelFile, SCHEMA_VERSION};
use crate::prob::{Categorical, LOAD_TOL};

pub const CENTER: usize = 0;
pub const LEFT: usize = 1;
pub const RIGHT: usize = 2;
pub const CUE: usize = 3;

pub const OBS_CUE_LEFT: usize = 0;
pub const OBS_CUE_RIGHT: usize = 1;
pub const OBS_REWARD: usize = 2;
pub const OBS_NO_REWARD: usize = 3;

pub const REWARD_LEFT: usize = 0;
pub const REWARD_RIGHT: usize = 1;

/// Preference mass for one future step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepPreference {
    /// Mass on the rewarding arm.
    pub rewarding_arm: f64,
    /// Mass on each of the three other locations.
    pub elsewhere: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TMazeSpec {
    /// Reward probability in the rewarding arm; the other arm pays the complement.
    pub reward_probability: f64,
    pub theta_prior: Vec<f64>,
    /// One entry per step; the horizon is its length.
    pub steps: Vec<StepPreference>,
}

impl Default for TMazeSpec {
    fn default() -> Self {
        Self {
            reward_probability: 0.8,
            theta_prior: vec![0.5, 0.5],
            steps: vec![
                StepPreference {
                    rewarding_arm: 0.34,
                    elsewhere: 0.22,
                },
                StepPreference {
                    rewarding_arm: 0.97,
                    elsewhere: 0.01,
                },
            ],
        }
    }
}

fn complement(p: f64) -> f64 {
    ((1.0 - p) * 1e12).round() / 1e12
}

impl TMazeSpec {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.reward_probability) {
            return Err(Error::Config(
                "reward_probability must lie in [0, 1]".into(),
            ));
        }
        if self.theta_prior.len() != 2 {
            return Err(Error::Config("theta_prior needs two entries".into()));
        }
        if self.steps.is_empty() {
            return Err(Error::Config("at least one step is required".into()));
        }
        for (k, s) in self.steps.iter().enumerate() {
            let total = s.rewarding_arm + 3.0 * s.elsewhere;
            if s.rewarding_arm <= 0.0 || s.elsewhere <= 0.0 || (total - 1.0).abs() > LOAD_TOL {
                return Err(Error::Config(format!(
                    "step {k} preference must be positive and sum to 1"
                )));
            }
        }
        Ok(())
    }

    /// The model file this spec describes.
    pub fn model_file(&self) -> Result<ModelFile> {
        self.validate()?;
        let p = self.reward_probability;
        let q = complement(p);
        let center = vec![0.5, 0.5, 0.0, 0.0];
        let good = vec![0.0, 0.0, p, q];
        let bad = vec![0.0, 0.0, q, p];
        let likelihood = vec![
            vec![
                center.clone(),
                good.clone(),
                bad.clone(),
                vec![1.0, 0.0, 0.0, 0.0],
            ],
            vec![center, bad, good, vec![0.0, 1.0, 0.0, 0.0]],
        ];
        let onehot =
            |i: usize| -> Vec<f64> { (0..4).map(|j| if i == j { 1.0 } else { 0.0 }).collect() };
        let transition = (0..4)
            .map(|a| {
                (0..4)
                    .map(|x| {
                        if x == LEFT || x == RIGHT {
                            onehot(x)
                        } else {
                            onehot(a)
                        }
                    })
                    .collect()
            })
            .collect();
        let per_hypothesis = [LEFT, RIGHT]
            .iter()
            .map(|&arm| {
                let targets = self
                    .steps
                    .iter()
                    .map(|s| {
                        let row: Vec<f64> = (0..4)
                            .map(|x| {
                                if x == arm {
                                    s.rewarding_arm
                                } else {
                                    s.elsewhere
                                }
                            })
                            .collect();
                        Categorical::from_probs(&row)
                    })
                    .collect::<Result<Vec<_>>>()?;
                Ok(PreferencePrior {
                    mode: PreferenceMode::PerStep,
                    targets,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let names = |v: &[&str]| v.iter().map(|s| s.to_string()).collect();
        Ok(ModelFile {
            schema_version: SCHEMA_VERSION,
            labels: Some(Labels {
                states: names(&["center", "left", "right", "cue"]),
                observations: names(&["cue_left", "cue_right", "reward", "no_reward"]),
                actions: names(&["go_center", "go_left", "go_right", "go_cue"]),
                hypotheses: names(&["reward_left", "reward_right"]),
            }),
            initial_state: onehot(CENTER),
            theta_prior: self.theta_prior.clone(),
            likelihood,
            transition,
            horizon: self.steps.len(),
            policies: None,
            policy_prior: None,
            preference: Preferences::PerHypothesis(per_hypothesis),
            obs_preference: None,
        })
    }
}

/// The T-maze model, its preferences and a world identical to the model.
pub fn build_tmaze(spec: &TMazeSpec) -> Result<Scenario> {
    Scenario::from_file(spec.model_file()?)
}

/// The committed default T-maze tables.
pub const TMAZE_JSON: &str = include_str!("../../data/tmaze.json");

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prob::{mutual_information, Axis, JointTable};

    #[test]
    fn default_spec_matches_the_committed_file() {
        let committed = ModelFile::from_json(TMAZE_JSON).unwrap();
        assert_eq!(TMazeSpec::default().model_file().unwrap(), committed);
    }

    #[test]
    fn default_dimensions() {
        let s = build_tmaze(&TMazeSpec::default()).unwrap();
        assert_eq!(s.model.num_states(), 4);
        assert_eq!(s.model.num_actions(), 4);
        assert_eq!(s.model.num_hypotheses(), 2);
        assert_eq!(s.model.horizon(), 2);
        assert_eq!(s.model.num_policies(), 16);
        assert_eq!(s.world, crate::envs::env::World::mirror(&s.model));
    }

    #[test]
    fn cue_is_deterministic_per_context() {
        let s = build_tmaze(&TMazeSpec::default()).unwrap();
        assert_eq!(s.model.likelihood_prob(REWARD_LEFT, CUE, OBS_CUE_LEFT), 1.0);
        assert_eq!(
            s.model.likelihood_prob(REWARD_RIGHT, CUE, OBS_CUE_RIGHT),
            1.0
        );
    }

    #[test]
    fn cue_reveals_one_bit_about_the_context() {
        let s = build_tmaze(&TMazeSpec::default()).unwrap();
        let m = &s.model;
        let mut w = Vec::new();
        for y in 0..4 {
            for t in 0..2 {
                w.push(m.theta_prior().log_prob(t) + m.likelihood_log_prob(t, CUE, y));
            }
        }
        let j = JointTable::new(vec![Axis::new("y", 4), Axis::new("theta", 2)], w).unwrap();
        let mi = mutual_information(&j, &["y"], &["theta"], &[]).unwrap();
        assert!((mi - 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn arms_are_absorbing() {
        let s = build_tmaze(&TMazeSpec::default()).unwrap();
        for a in 0..4 {
            assert_eq!(s.model.transition_prob(a, LEFT, LEFT), 1.0);
            assert_eq!(s.model.transition_prob(a, RIGHT, RIGHT), 1.0);
            assert_eq!(s.model.transition_prob(a, CENTER, a), 1.0);
        }
    }

    #[test]
    fn invalid_specs_are_rejected() {
        let mut s = TMazeSpec::default();
        s.steps[0].elsewhere = 0.3;
        assert!(build_tmaze(&s).is_err());
        let s = TMazeSpec {
            reward_probability: 1.5,
            ..TMazeSpec::default()
        };
        assert!(build_tmaze(&s).is_err());
    }
}
