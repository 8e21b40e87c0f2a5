//! The sliding-horizon agent: plan, act, observe, update, replan.

use std::fmt;
use std::str::FromStr;

use rand::distr::{weighted::WeightedIndex, Distribution};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::efe::PolicyEfe;
use crate::envs::env::Environment;
use crate::error::{Error, Result};
use crate::model::{GenerativeModel, Preferences};
use crate::planner::{optimal_policy, PlannerMode, PriorVariant};

/// How the first action is chosen from the policy posterior.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecisionRule {
    /// Highest-mass policy, ties to the lowest index.
    #[default]
    Argmax,
    /// A seeded draw from the policy posterior.
    Sample,
}

impl fmt::Display for DecisionRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DecisionRule::Argmax => "argmax",
            DecisionRule::Sample => "sample",
        })
    }
}

impl FromStr for DecisionRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "argmax" => Ok(DecisionRule::Argmax),
            "sample" => Ok(DecisionRule::Sample),
            _ => Err(Error::Config(format!("unknown decision rule `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpisodeSettings {
    pub mode: PlannerMode,
    pub variant: PriorVariant,
    pub decision: DecisionRule,
    pub steps: usize,
}

/// Everything recorded for one executed step.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepLog {
    pub step: usize,
    pub chosen_policy: Vec<usize>,
    pub action: usize,
    pub observation: usize,
    pub true_state: usize,
    /// Remaining policies at planning time.
    pub policies: Vec<Vec<usize>>,
    pub policy_posterior: Vec<f64>,
    pub efe: Vec<PolicyEfe>,
    pub g_mode: Vec<f64>,
    pub f_value: f64,
    /// Belief over the current state after the update.
    pub state_belief: Vec<f64>,
    /// Belief over hypotheses after the update.
    pub theta_belief: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpisodeLog {
    pub schema_version: u32,
    pub seed: u64,
    pub settings: EpisodeSettings,
    pub true_theta: usize,
    pub initial_state: usize,
    pub initial_state_belief: Vec<f64>,
    pub initial_theta_belief: Vec<f64>,
    pub steps: Vec<StepLog>,
    pub final_state: usize,
    /// `log p̂(x_final)` under the final-step target of the true hypothesis.
    pub reward_proxy: f64,
    /// Whether the final state carries the largest final-step target mass.
    pub reached_preferred: bool,
}

impl EpisodeLog {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Run up to `settings.steps` plan-act-update cycles.
///
/// The decision generator is seeded from `env.seed()` so episodes replay
/// exactly.
pub fn run_episode(
    model: &GenerativeModel,
    preferences: &Preferences,
    env: &mut Environment,
    settings: EpisodeSettings,
) -> Result<EpisodeLog> {
    if settings.steps > model.horizon() {
        return Err(Error::Config(format!(
            "{} steps requested but the model plans only {} ahead",
            settings.steps,
            model.horizon()
        )));
    }
    let final_target = preferences
        .for_hypothesis(env.true_theta())
        .and_then(|p| p.final_target().cloned())
        .ok_or_else(|| Error::Config("preferences have no final-step target".into()))?;
    let mut decide_rng = ChaCha8Rng::seed_from_u64(env.seed() ^ 0x5eed_dec1_5105_0000);
    let mut model = model.clone();
    let mut prefs = preferences.clone();
    let initial_state = env.true_state();
    let initial_state_belief = model.initial_state_belief().probs();
    let initial_theta_belief = model.theta_prior().probs();
    let mut steps = Vec::with_capacity(settings.steps);
    for step in 0..settings.steps {
        let pref = prefs.resolve(&model)?.over_trajectories(&model)?;
        let plan = optimal_policy(&model, &pref, settings.mode, settings.variant)?;
        let chosen = match settings.decision {
            DecisionRule::Argmax => plan.best_policy(),
            DecisionRule::Sample => WeightedIndex::new(plan.policy_posterior.probs())
                .map_err(|e| Error::InvalidDistribution(e.to_string()))?
                .sample(&mut decide_rng),
        };
        let policy = model.policies()[chosen].clone();
        let action = policy.actions[0];
        let observation = env.step(action)?;
        model = model.belief_update(action, observation)?;
        prefs = prefs.advance();
        steps.push(StepLog {
            step,
            chosen_policy: policy.actions,
            action,
            observation,
            true_state: env.true_state(),
            policies: plan.policies.iter().map(|p| p.actions.clone()).collect(),
            policy_posterior: plan.policy_posterior.probs(),
            efe: plan.efe.per_policy.clone(),
            g_mode: plan.g_mode.clone(),
            f_value: plan.f_value,
            state_belief: model.initial_state_belief().probs(),
            theta_belief: model.theta_prior().probs(),
        });
    }
    let final_state = env.true_state();
    Ok(EpisodeLog {
        schema_version: crate::modelfile::SCHEMA_VERSION,
        seed: env.seed(),
        settings,
        true_theta: env.true_theta(),
        initial_state,
        initial_state_belief,
        initial_theta_belief,
        steps,
        final_state,
        reward_proxy: final_target.log_prob(final_state),
        reached_preferred: final_state == final_target.argmax(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::env::World;
    use crate::envs::tmaze::{build_tmaze, TMazeSpec, CUE};
    use crate::model::{PolicySet, PreferencePrior};
    use crate::prob::Categorical;

    fn settings(steps: usize) -> EpisodeSettings {
        EpisodeSettings {
            mode: PlannerMode::FullEfe,
            variant: PriorVariant::Unnormalized,
            decision: DecisionRule::Argmax,
            steps,
        }
    }

    #[test]
    fn single_policy_is_replayed() {
        let policies = PolicySet::new(
            vec![crate::model::Policy::new(vec![1, 0])],
            Categorical::uniform(1).unwrap(),
        )
        .unwrap();
        let m = GenerativeModel::new(
            &Categorical::point_mass(2, 0).unwrap(),
            &Categorical::uniform(1).unwrap(),
            &[vec![vec![1.0, 0.0], vec![0.0, 1.0]]],
            &[
                vec![vec![1.0, 0.0], vec![1.0, 0.0]],
                vec![vec![0.0, 1.0], vec![0.0, 1.0]],
            ],
            2,
            policies,
        )
        .unwrap();
        let prefs = Preferences::Fixed(PreferencePrior::final_step(
            Categorical::uniform(2).unwrap(),
        ));
        let mut env = World::mirror(&m).environment(1).unwrap();
        let log = run_episode(&m, &prefs, &mut env, settings(2)).unwrap();
        let actions: Vec<usize> = log.steps.iter().map(|s| s.action).collect();
        assert_eq!(actions, vec![1, 0]);
        // point-mass beliefs stay on the true trajectory
        assert_eq!(log.steps[0].state_belief, vec![0.0, 1.0]);
        assert_eq!(log.steps[1].state_belief, vec![1.0, 0.0]);
    }

    #[test]
    fn zero_steps_gives_an_empty_log() {
        let s = build_tmaze(&TMazeSpec::default()).unwrap();
        let mut env = s.world.environment(5).unwrap();
        let log = run_episode(&s.model, &s.preferences, &mut env, settings(0)).unwrap();
        assert!(log.steps.is_empty());
        assert_eq!(log.final_state, log.initial_state);
    }

    #[test]
    fn too_many_steps_is_a_config_error() {
        let s = build_tmaze(&TMazeSpec::default()).unwrap();
        let mut env = s.world.environment(5).unwrap();
        assert!(matches!(
            run_episode(&s.model, &s.preferences, &mut env, settings(3)),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn tmaze_agent_checks_the_cue_then_collects() {
        let s = build_tmaze(&TMazeSpec::default()).unwrap();
        for seed in 0..10 {
            let mut env = s.world.environment(seed).unwrap();
            let log = run_episode(&s.model, &s.preferences, &mut env, settings(2)).unwrap();
            assert_eq!(log.steps[0].action, CUE);
            assert!(log.reached_preferred, "{log:?}");
        }
    }

    #[test]
    fn sampled_episodes_replay_exactly() {
        let s = build_tmaze(&TMazeSpec::default()).unwrap();
        let run = |seed| {
            let mut env = s.world.environment(seed).unwrap();
            let st = EpisodeSettings {
                decision: DecisionRule::Sample,
                ..settings(2)
            };
            run_episode(&s.model, &s.preferences, &mut env, st)
                .unwrap()
                .to_json()
                .unwrap()
        };
        assert_eq!(run(42), run(42));
    }
}
