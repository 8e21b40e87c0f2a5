//! JSON model files.
//!
//! ```json
//! {
//!   "schema_version": 1,
//!   "initial_state": [1.0, 0.0],
//!   "theta_prior": [0.5, 0.5],
//!   "likelihood": [[[..]]],      // [θ][x][y]
//!   "transition": [[[..]]],      // [a][x][x']
//!   "horizon": 2,
//!   "policies": [[0, 1], ..],    // optional, default: every action sequence
//!   "policy_prior": [..],        // optional, default: uniform
//!   "preference": {"fixed": {"mode": "per_step", "targets": [[..], ..]}},
//!   "obs_preference": {"targets": [[..], ..]}   // optional
//! }
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    GenerativeModel, ObsPreferencePrior, Policy, PolicySet, Preferences, DEFAULT_POLICY_CAP,
};
use crate::prob::Categorical;

pub const SCHEMA_VERSION: u32 = 1;

/// Optional human-readable names.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Labels {
    #[serde(default)]
    pub states: Vec<String>,
    #[serde(default)]
    pub observations: Vec<String>,
    #[serde(default)]
    pub actions: Vec<String>,
    #[serde(default)]
    pub hypotheses: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    pub schema_version: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<Labels>,
    pub initial_state: Vec<f64>,
    pub theta_prior: Vec<f64>,
    pub likelihood: Vec<Vec<Vec<f64>>>,
    pub transition: Vec<Vec<Vec<f64>>>,
    pub horizon: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub policies: Option<Vec<Policy>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub policy_prior: Option<Vec<f64>>,
    pub preference: Preferences,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub obs_preference: Option<ObsPreferencePrior>,
}

/// A model together with its preferences.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadedModel {
    pub model: GenerativeModel,
    pub preferences: Preferences,
    pub obs_preference: Option<ObsPreferencePrior>,
}

fn categorical(what: &str, probs: &[f64]) -> Result<Categorical> {
    Categorical::from_probs(probs).map_err(|e| match e {
        Error::RowNotNormalized { sum, tolerance, .. } => Error::RowNotNormalized {
            table: what.to_string(),
            row: "0".into(),
            sum,
            tolerance,
        },
        other => Error::InvalidModel(format!("`{what}`: {other}")),
    })
}

impl ModelFile {
    pub fn from_json(text: &str) -> Result<Self> {
        let file: ModelFile = serde_json::from_str(text)?;
        if file.schema_version != SCHEMA_VERSION {
            return Err(Error::Config(format!(
                "unsupported schema_version {} (expected {SCHEMA_VERSION})",
                file.schema_version
            )));
        }
        Ok(file)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Validate every table and assemble the model.
    pub fn build(&self) -> Result<LoadedModel> {
        let initial = categorical("initial_state", &self.initial_state)?;
        let theta = categorical("theta_prior", &self.theta_prior)?;
        let num_actions = self.transition.len();
        let policies = match &self.policies {
            Some(list) => {
                let prior = match &self.policy_prior {
                    Some(p) => categorical("policy_prior", p)?,
                    None => Categorical::uniform(list.len())?,
                };
                PolicySet::new(list.clone(), prior)?
            }
            None => {
                let set = PolicySet::exhaustive(num_actions, self.horizon, DEFAULT_POLICY_CAP)?;
                match &self.policy_prior {
                    Some(p) => {
                        PolicySet::new(set.policies().to_vec(), categorical("policy_prior", p)?)?
                    }
                    None => set,
                }
            }
        };
        let model = GenerativeModel::new(
            &initial,
            &theta,
            &self.likelihood,
            &self.transition,
            self.horizon,
            policies,
        )?;
        // resolving once checks shapes against the model
        self.preferences_for(&model)?;
        if let Some(obs) = &self.obs_preference {
            obs.over_trajectories(&model.space())?;
        }
        Ok(LoadedModel {
            model,
            preferences: self.preference.clone(),
            obs_preference: self.obs_preference.clone(),
        })
    }

    fn preferences_for(&self, model: &GenerativeModel) -> Result<()> {
        self.preference.resolve(model)?.over_trajectories(model)?;
        Ok(())
    }
}
