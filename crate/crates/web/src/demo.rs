use efe_core::envs::{
    build_gridworld, build_tmaze, run_episode, DecisionRule, EpisodeSettings, GridSpec, Scenario,
    TMazeSpec,
};
use efe_core::planner::{optimal_policy, PlannerMode, PlannerResult, PriorVariant};
use efe_core::suite::theorem_checks;
use efe_core::Result;
use serde::Serialize;

#[derive(Debug, Serialize)]
pub struct PolicyRow {
    pub policy_id: usize,
    pub actions: Vec<String>,
    pub risk: f64,
    pub ambiguity: f64,
    pub novelty: f64,
    pub g: f64,
    pub q_star: f64,
}

#[derive(Debug, Serialize)]
pub struct PlanView {
    pub mode: PlannerMode,
    pub variant: PriorVariant,
    /// Ascending `g`.
    pub rows: Vec<PolicyRow>,
}

#[derive(Debug, Serialize)]
pub struct TheoremView {
    pub seed: u64,
    pub corrupt: bool,
    pub checks: Vec<efe_core::suite::CheckRow>,
}

#[derive(Debug, Serialize)]
pub struct EpisodeView {
    pub width: usize,
    pub height: usize,
    pub goal: usize,
    /// True cell before each step and after the last.
    pub path: Vec<usize>,
    pub actions: Vec<String>,
    pub reached_goal: bool,
    pub first_plan: PlanView,
}

fn labels(s: &Scenario) -> Vec<String> {
    s.file
        .labels
        .as_ref()
        .map(|l| l.actions.clone())
        .unwrap_or_default()
}

fn name(labels: &[String], a: usize) -> String {
    labels.get(a).cloned().unwrap_or_else(|| a.to_string())
}

fn view(plan: &PlannerResult, labels: &[String]) -> PlanView {
    PlanView {
        mode: plan.mode,
        variant: plan.variant,
        rows: plan
            .ranking()
            .into_iter()
            .map(|u| {
                let e = &plan.efe.per_policy[u];
                PolicyRow {
                    policy_id: u,
                    actions: plan.policies[u]
                        .actions
                        .iter()
                        .map(|&a| name(labels, a))
                        .collect(),
                    risk: e.risk,
                    ambiguity: e.ambiguity,
                    novelty: e.novelty,
                    g: plan.g_mode[u],
                    q_star: plan.policy_posterior.prob(u),
                }
            })
            .collect(),
    }
}

fn plan_scenario(s: &Scenario, mode: PlannerMode, variant: PriorVariant) -> Result<PlanView> {
    let pref = s
        .preferences
        .resolve(&s.model)?
        .over_trajectories(&s.model)?;
    Ok(view(
        &optimal_policy(&s.model, &pref, mode, variant)?,
        &labels(s),
    ))
}

pub fn tmaze_plan(
    reward_probability: f64,
    final_preference: f64,
    mode: &str,
    variant: &str,
) -> Result<String> {
    let mut spec = TMazeSpec {
        reward_probability,
        ..TMazeSpec::default()
    };
    if let Some(last) = spec.steps.last_mut() {
        last.rewarding_arm = final_preference;
        last.elsewhere = (1.0 - final_preference) / 3.0;
    }
    let s = build_tmaze(&spec)?;
    let out = plan_scenario(&s, mode.parse()?, variant.parse()?)?;
    Ok(serde_json::to_string(&out)?)
}

pub fn theorem_check(seed: u64, corrupt: bool) -> Result<String> {
    let checks = theorem_checks(seed, corrupt)?;
    Ok(serde_json::to_string(&TheoremView {
        seed,
        corrupt,
        checks,
    })?)
}

pub fn gridworld_episode(spec: &GridSpec, mode: &str, seed: u64) -> Result<String> {
    let s = build_gridworld(spec)?;
    let mode: PlannerMode = mode.parse()?;
    let first_plan = plan_scenario(&s, mode, PriorVariant::Unnormalized)?;
    let mut env = s.world.environment(seed)?;
    let log = run_episode(
        &s.model,
        &s.preferences,
        &mut env,
        EpisodeSettings {
            mode,
            variant: PriorVariant::Unnormalized,
            decision: DecisionRule::Argmax,
            steps: s.model.horizon(),
        },
    )?;
    let names = labels(&s);
    let mut path = vec![log.initial_state];
    path.extend(log.steps.iter().map(|st| st.true_state));
    Ok(serde_json::to_string(&EpisodeView {
        width: spec.width,
        height: spec.height,
        goal: spec.goal,
        path,
        actions: log.steps.iter().map(|st| name(&names, st.action)).collect(),
        reached_goal: log.final_state == spec.goal,
        first_plan,
    })?)
}
