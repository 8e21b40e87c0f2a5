//! Experiment configuration documents.
//!
//! ```json
//! {
//!   "model": {"gridworld": {"width": 3, "height": 2, "goal": 5}},
//!   "mode": "kl_control",
//!   "seeds": [1, 2, 3],
//!   "out_dir": "results/grid"
//! }
//! ```

use std::path::{Path, PathBuf};

use efe_core::envs::{build_gridworld, build_tmaze, DecisionRule, GridSpec, Scenario, TMazeSpec};
use efe_core::modelfile::ModelFile;
use efe_core::planner::{PlannerMode, PriorVariant};
use serde::{Deserialize, Serialize};

use crate::{CliError, Result};

/// Environment variable that overrides the configured output directory.
pub const OUT_DIR_ENV: &str = "EFE_OUT_DIR";

const DEFAULT_OUT_DIR: &str = "results";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelSource {
    Tmaze(TMazeSpec),
    Gridworld(GridSpec),
    /// A model file, relative paths resolved against the config file.
    File(PathBuf),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerifyOptions {
    pub theorem: bool,
    pub oracle: bool,
    /// Number of suite seeds, `0..suite_seeds`.
    pub suite_seeds: u64,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self {
            theorem: true,
            oracle: true,
            suite_seeds: 200,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: ModelSource,
    #[serde(default)]
    pub mode: PlannerMode,
    #[serde(default)]
    pub prior_variant: PriorVariant,
    #[serde(default)]
    pub decision: DecisionRule,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    /// Steps per episode; the model horizon when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub steps: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out_dir: Option<PathBuf>,
    #[serde(default)]
    pub verify: VerifyOptions,
}

fn default_seeds() -> Vec<u64> {
    vec![0]
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            model: ModelSource::Tmaze(TMazeSpec::default()),
            mode: PlannerMode::default(),
            prior_variant: PriorVariant::default(),
            decision: DecisionRule::default(),
            seeds: default_seeds(),
            steps: None,
            out_dir: None,
            verify: VerifyOptions::default(),
        }
    }
}

impl ExperimentConfig {
    /// Read a config file; relative model paths become relative to it.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        let mut cfg: ExperimentConfig = serde_json::from_str(&text)
            .map_err(|e| CliError::Usage(format!("config {}: {e}", path.display())))?;
        if let ModelSource::File(p) = &mut cfg.model {
            if p.is_relative() {
                if let Some(dir) = path.parent() {
                    *p = dir.join(&*p);
                }
            }
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if let ModelSource::File(p) = &self.model {
            if !p.is_file() {
                return Err(CliError::Usage(format!(
                    "model file {} does not exist",
                    p.display()
                )));
            }
        }
        if self.decision == DecisionRule::Sample && self.seeds.is_empty() {
            return Err(CliError::Usage(
                "sampled decisions need at least one seed".into(),
            ));
        }
        Ok(())
    }

    /// Flag, then environment, then config, then `results`.
    pub fn out_dir(&self, flag: Option<&Path>) -> PathBuf {
        if let Some(p) = flag {
            return p.to_path_buf();
        }
        if let Some(p) = std::env::var_os(OUT_DIR_ENV).filter(|v| !v.is_empty()) {
            return PathBuf::from(p);
        }
        self.out_dir
            .clone()
            .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR))
    }

    pub fn scenario(&self) -> Result<Scenario> {
        let built = match &self.model {
            ModelSource::Tmaze(spec) => build_tmaze(spec),
            ModelSource::Gridworld(spec) => build_gridworld(spec),
            ModelSource::File(path) => {
                return ModelFile::load(path)
                    .and_then(Scenario::from_file)
                    .map_err(|e| CliError::Usage(format!("model file {}: {e}", path.display())));
            }
        };
        built.map_err(|e| CliError::Usage(format!("builtin model: {e}")))
    }
}
