//! The rollout generative model and its exact predictive quantities.
//!
//! A model predicts `horizon` future steps from the current state `x0`:
//!
//! ```text
//! p(y, x, θ, u) = p(x0, θ) p(u) Π_k p(y_k | x_k, θ) p(x_k | x_{k-1}, u_k)
//! ```
//!
//! `x` is the state trajectory `(x0, x1, .., xH)` and `y` the observation
//! trajectory `(y1, .., yH)`. The current state is part of the trajectory so
//! that `y` and `θ` stay conditionally independent of `u` given `x` even
//! after a belief update has correlated `x0` with `θ`.
//!
//! `θ` ranges over a finite set of likelihood hypotheses and only enters
//! through `p(y | x, θ)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::prob::{log_sum_exp, Axis, Categorical, ConditionalTable, JointTable};

/// Largest policy set [`enumerate_policies`] will build by default.
pub const DEFAULT_POLICY_CAP: usize = 4096;

/// An open-loop sequence of future actions.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Policy {
    pub actions: Vec<usize>,
}

impl Policy {
    pub fn new(actions: Vec<usize>) -> Self {
        Self { actions }
    }

    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }
}

impl std::fmt::Display for Policy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let parts: Vec<String> = self.actions.iter().map(|a| a.to_string()).collect();
        write!(f, "{}", parts.join("-"))
    }
}

/// Every action sequence of length `horizon`, in lexicographic order.
pub fn enumerate_policies(num_actions: usize, horizon: usize, cap: usize) -> Result<Vec<Policy>> {
    if num_actions == 0 {
        return Err(Error::InvalidModel("no actions".into()));
    }
    let count = (num_actions as u128)
        .checked_pow(horizon as u32)
        .unwrap_or(u128::MAX);
    if count > cap as u128 {
        return Err(Error::PolicySpaceTooLarge { count, cap });
    }
    let mut out = Vec::with_capacity(count as usize);
    for mut i in 0..count as usize {
        let mut actions = vec![0; horizon];
        for slot in actions.iter_mut().rev() {
            *slot = i % num_actions;
            i /= num_actions;
        }
        out.push(Policy::new(actions));
    }
    Ok(out)
}

/// Indexing of state and observation trajectories (mixed radix, earliest step
/// most significant).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TrajectorySpace {
    pub num_states: usize,
    pub num_obs: usize,
    pub horizon: usize,
}

impl TrajectorySpace {
    /// Number of state trajectories `(x0, .., xH)`.
    pub fn num_x(&self) -> usize {
        self.num_states.pow(self.horizon as u32 + 1)
    }

    /// Number of observation trajectories `(y1, .., yH)`.
    pub fn num_y(&self) -> usize {
        self.num_obs.pow(self.horizon as u32)
    }

    pub fn decode_x(&self, mut idx: usize) -> Vec<usize> {
        let mut out = vec![0; self.horizon + 1];
        for slot in out.iter_mut().rev() {
            *slot = idx % self.num_states;
            idx /= self.num_states;
        }
        out
    }

    pub fn encode_x(&self, states: &[usize]) -> usize {
        states.iter().fold(0, |acc, &s| acc * self.num_states + s)
    }

    pub fn decode_y(&self, mut idx: usize) -> Vec<usize> {
        let mut out = vec![0; self.horizon];
        for slot in out.iter_mut().rev() {
            *slot = idx % self.num_obs;
            idx /= self.num_obs;
        }
        out
    }

    pub fn encode_y(&self, obs: &[usize]) -> usize {
        obs.iter().fold(0, |acc, &o| acc * self.num_obs + o)
    }
}

/// Finite set of allowable policies with a prior over them.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicySet {
    policies: Vec<Policy>,
    prior: Categorical,
}

impl PolicySet {
    pub fn new(policies: Vec<Policy>, prior: Categorical) -> Result<Self> {
        if policies.is_empty() {
            return Err(Error::InvalidModel("empty policy set".into()));
        }
        if prior.len() != policies.len() {
            return Err(Error::Shape(format!(
                "policy prior over {} entries for {} policies",
                prior.len(),
                policies.len()
            )));
        }
        for (i, p) in policies.iter().enumerate() {
            if policies[..i].contains(p) {
                return Err(Error::InvalidModel(format!("policy {p} listed twice")));
            }
        }
        Ok(Self { policies, prior })
    }

    /// All sequences of length `horizon` with a uniform prior.
    pub fn exhaustive(num_actions: usize, horizon: usize, cap: usize) -> Result<Self> {
        let policies = enumerate_policies(num_actions, horizon, cap)?;
        let prior = Categorical::uniform(policies.len())?;
        Self::new(policies, prior)
    }

    pub fn policies(&self) -> &[Policy] {
        &self.policies
    }

    pub fn prior(&self) -> &Categorical {
        &self.prior
    }

    pub fn len(&self) -> usize {
        self.policies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.policies.is_empty()
    }
}

/// The rollout model `p(y, x, θ, u)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GenerativeModel {
    num_states: usize,
    num_obs: usize,
    num_actions: usize,
    num_hypotheses: usize,
    horizon: usize,
    /// log p(x0, θ), layout [x0][θ]
    initial_log: Vec<f64>,
    /// log p(y | x, θ), layout [θ][x][y]
    likelihood_log: Vec<f64>,
    /// log p(x' | x, a), layout [a][x][x']
    transition_log: Vec<f64>,
    policies: PolicySet,
}

fn flatten_rows(
    table: &str,
    rows: &[Vec<Vec<f64>>],
    outer: usize,
    inner: usize,
    width: usize,
) -> Result<Vec<f64>> {
    if rows.len() != outer {
        return Err(Error::Shape(format!(
            "`{table}` has {} blocks, expected {outer}",
            rows.len()
        )));
    }
    let mut out = Vec::with_capacity(outer * inner * width);
    for (i, block) in rows.iter().enumerate() {
        if block.len() != inner {
            return Err(Error::Shape(format!(
                "`{table}[{i}]` has {} rows, expected {inner}",
                block.len()
            )));
        }
        for (j, row) in block.iter().enumerate() {
            if row.len() != width {
                return Err(Error::Shape(format!(
                    "`{table}[{i}][{j}]` has {} entries, expected {width}",
                    row.len()
                )));
            }
            let sum: f64 = row.iter().sum();
            if row.iter().any(|p| !p.is_finite() || *p < 0.0) {
                return Err(Error::InvalidDistribution(format!(
                    "`{table}[{i}][{j}]` has a negative or non-finite entry"
                )));
            }
            if (sum - 1.0).abs() > crate::prob::LOAD_TOL {
                return Err(Error::RowNotNormalized {
                    table: table.to_string(),
                    row: format!("[{i}][{j}]"),
                    sum,
                    tolerance: crate::prob::LOAD_TOL,
                });
            }
            out.extend(row.iter().map(|p| (p / sum).ln()));
        }
    }
    Ok(out)
}

impl GenerativeModel {
    /// Build from linear-domain tables.
    ///
    /// `likelihood[θ][x][y] = p(y | x, θ)` and `transition[a][x][x'] = p(x' | x, a)`.
    pub fn new(
        initial_state: &Categorical,
        theta_prior: &Categorical,
        likelihood: &[Vec<Vec<f64>>],
        transition: &[Vec<Vec<f64>>],
        horizon: usize,
        policies: PolicySet,
    ) -> Result<Self> {
        let mut initial = Vec::with_capacity(initial_state.len() * theta_prior.len());
        for x in 0..initial_state.len() {
            for t in 0..theta_prior.len() {
                initial.push(initial_state.prob(x) * theta_prior.prob(t));
            }
        }
        Self::with_initial_joint(
            initial_state.len(),
            &initial,
            theta_prior.len(),
            likelihood,
            transition,
            horizon,
            policies,
        )
    }

    /// Like [`GenerativeModel::new`] but with a joint `p(x0, θ)` laid out `[x0][θ]`.
    pub fn with_initial_joint(
        num_states: usize,
        initial_joint: &[f64],
        num_hypotheses: usize,
        likelihood: &[Vec<Vec<f64>>],
        transition: &[Vec<Vec<f64>>],
        horizon: usize,
        policies: PolicySet,
    ) -> Result<Self> {
        if num_states == 0 || num_hypotheses == 0 {
            return Err(Error::InvalidModel("empty state or hypothesis set".into()));
        }
        if initial_joint.len() != num_states * num_hypotheses {
            return Err(Error::Shape("initial joint size".into()));
        }
        let init_cat = Categorical::from_probs(initial_joint)?;
        let num_obs = likelihood
            .first()
            .and_then(|b| b.first())
            .map(|r| r.len())
            .ok_or_else(|| Error::InvalidModel("empty likelihood".into()))?;
        if num_obs == 0 {
            return Err(Error::InvalidModel("no observations".into()));
        }
        let num_actions = transition.len();
        if num_actions == 0 {
            return Err(Error::InvalidModel("no actions".into()));
        }
        let likelihood_log = flatten_rows(
            "likelihood",
            likelihood,
            num_hypotheses,
            num_states,
            num_obs,
        )?;
        let transition_log = flatten_rows(
            "transition",
            transition,
            num_actions,
            num_states,
            num_states,
        )?;
        for p in policies.policies() {
            if p.len() != horizon {
                return Err(Error::InvalidModel(format!(
                    "policy {p} has length {} but horizon is {horizon}",
                    p.len()
                )));
            }
            if let Some(a) = p.actions.iter().find(|&&a| a >= num_actions) {
                return Err(Error::InvalidModel(format!(
                    "policy {p} uses unknown action {a}"
                )));
            }
        }
        Ok(Self {
            num_states,
            num_obs,
            num_actions,
            num_hypotheses,
            horizon,
            initial_log: init_cat.log_probs().to_vec(),
            likelihood_log,
            transition_log,
            policies,
        })
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_obs(&self) -> usize {
        self.num_obs
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn num_hypotheses(&self) -> usize {
        self.num_hypotheses
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn space(&self) -> TrajectorySpace {
        TrajectorySpace {
            num_states: self.num_states,
            num_obs: self.num_obs,
            horizon: self.horizon,
        }
    }

    pub fn policy_set(&self) -> &PolicySet {
        &self.policies
    }

    pub fn policies(&self) -> &[Policy] {
        self.policies.policies()
    }

    pub fn policy_prior(&self) -> &Categorical {
        self.policies.prior()
    }

    pub fn num_policies(&self) -> usize {
        self.policies.len()
    }

    /// Replace the policy set, keeping every table.
    pub fn with_policies(&self, policies: PolicySet) -> Result<Self> {
        let mut out = self.clone();
        for p in policies.policies() {
            if p.len() != self.horizon || p.actions.iter().any(|&a| a >= self.num_actions) {
                return Err(Error::InvalidModel(format!(
                    "policy {p} does not fit the model"
                )));
            }
        }
        out.policies = policies;
        Ok(out)
    }

    /// Same tables with a different horizon and the exhaustive uniform policy set.
    pub fn with_horizon(&self, horizon: usize, cap: usize) -> Result<Self> {
        let mut out = self.clone();
        out.horizon = horizon;
        out.policies = PolicySet::exhaustive(self.num_actions, horizon, cap)?;
        Ok(out)
    }

    pub fn initial_joint_prob(&self, x0: usize, theta: usize) -> f64 {
        self.initial_log[x0 * self.num_hypotheses + theta].exp()
    }

    pub fn likelihood_prob(&self, theta: usize, x: usize, y: usize) -> f64 {
        self.likelihood_log_prob(theta, x, y).exp()
    }

    pub fn transition_prob(&self, action: usize, x: usize, next: usize) -> f64 {
        self.transition_log_prob(action, x, next).exp()
    }

    #[inline]
    pub fn likelihood_log_prob(&self, theta: usize, x: usize, y: usize) -> f64 {
        self.likelihood_log[(theta * self.num_states + x) * self.num_obs + y]
    }

    #[inline]
    pub fn transition_log_prob(&self, action: usize, x: usize, next: usize) -> f64 {
        self.transition_log[(action * self.num_states + x) * self.num_states + next]
    }

    /// `p(x0, θ)` as a table over axes `("x0", "theta")`.
    pub fn initial_joint(&self) -> JointTable {
        JointTable::from_log_weights(
            vec![
                Axis::new("x0", self.num_states),
                Axis::new("theta", self.num_hypotheses),
            ],
            self.initial_log.clone(),
        )
        .expect("initial joint is normalized on construction")
    }

    /// Marginal belief over the current state.
    pub fn initial_state_belief(&self) -> Categorical {
        let w: Vec<f64> = self
            .initial_log
            .chunks(self.num_hypotheses)
            .map(log_sum_exp)
            .collect();
        Categorical::from_log_weights(&w).expect("normalized")
    }

    /// Marginal belief over the parameter hypotheses.
    pub fn theta_prior(&self) -> Categorical {
        let w: Vec<f64> = (0..self.num_hypotheses)
            .map(|t| {
                let col: Vec<f64> = (0..self.num_states)
                    .map(|x| self.initial_log[x * self.num_hypotheses + t])
                    .collect();
                log_sum_exp(&col)
            })
            .collect();
        Categorical::from_log_weights(&w).expect("normalized")
    }

    /// `p(y | x, θ)` as a conditional table (target `y`, given `theta, x`).
    pub fn likelihood(&self) -> ConditionalTable {
        let slices = self
            .likelihood_log
            .chunks(self.num_obs)
            .map(|c| Some(c.to_vec()))
            .collect();
        ConditionalTable::from_log_slices(
            vec![Axis::new("y", self.num_obs)],
            vec![
                Axis::new("theta", self.num_hypotheses),
                Axis::new("x", self.num_states),
            ],
            slices,
        )
        .expect("validated on construction")
    }

    /// `p(x' | x, a)` as a conditional table (target `x_next`, given `a, x`).
    pub fn transition(&self) -> ConditionalTable {
        let slices = self
            .transition_log
            .chunks(self.num_states)
            .map(|c| Some(c.to_vec()))
            .collect();
        ConditionalTable::from_log_slices(
            vec![Axis::new("x_next", self.num_states)],
            vec![
                Axis::new("a", self.num_actions),
                Axis::new("x", self.num_states),
            ],
            slices,
        )
        .expect("validated on construction")
    }

    fn log_state_marginal(&self) -> Vec<f64> {
        self.initial_log
            .chunks(self.num_hypotheses)
            .map(log_sum_exp)
            .collect()
    }

    /// `log p(x | u)` for every state trajectory.
    pub fn log_x_given_policy(&self, policy: &Policy) -> Vec<f64> {
        let space = self.space();
        let init = self.log_state_marginal();
        (0..space.num_x())
            .map(|i| {
                let xs = space.decode_x(i);
                let mut l = init[xs[0]];
                for (k, &a) in policy.actions.iter().enumerate() {
                    if l == f64::NEG_INFINITY {
                        break;
                    }
                    l += self.transition_log_prob(a, xs[k], xs[k + 1]);
                }
                l
            })
            .collect()
    }

    /// `log p(y, θ | x)`, layout `[x][y][θ]`. This factor does not depend on
    /// the policy. Rows for trajectories whose `x0` has no mass are `-inf`.
    pub fn log_y_theta_given_x(&self) -> Vec<f64> {
        let space = self.space();
        let (nx, ny, nt) = (space.num_x(), space.num_y(), self.num_hypotheses);
        let init_x = self.log_state_marginal();
        let mut out = vec![f64::NEG_INFINITY; nx * ny * nt];
        for xi in 0..nx {
            let xs = space.decode_x(xi);
            if init_x[xs[0]] == f64::NEG_INFINITY {
                continue;
            }
            for yi in 0..ny {
                let ys = space.decode_y(yi);
                for t in 0..nt {
                    let mut l = self.initial_log[xs[0] * nt + t] - init_x[xs[0]];
                    for (k, &y) in ys.iter().enumerate() {
                        l += self.likelihood_log_prob(t, xs[k + 1], y);
                    }
                    out[(xi * ny + yi) * nt + t] = l;
                }
            }
        }
        out
    }

    fn step_axes(&self) -> Vec<Axis> {
        let mut axes = Vec::new();
        for k in 1..=self.horizon {
            axes.push(Axis::new(format!("y{k}"), self.num_obs));
        }
        for k in 0..=self.horizon {
            axes.push(Axis::new(format!("x{k}"), self.num_states));
        }
        axes.push(Axis::new("theta", self.num_hypotheses));
        axes
    }

    /// Exact `p(y, x, θ | u)` over per-step axes `y1..yH, x0..xH, theta`.
    ///
    /// Use [`JointTable::reshape`] with [`GenerativeModel::trajectory_axes`]
    /// to view it over whole trajectories.
    pub fn predictive_joint(&self, policy: &Policy) -> Result<JointTable> {
        if policy.len() != self.horizon {
            return Err(Error::Shape(format!(
                "policy of length {} for horizon {}",
                policy.len(),
                self.horizon
            )));
        }
        let space = self.space();
        let (nx, ny, nt) = (space.num_x(), space.num_y(), self.num_hypotheses);
        let lx = self.log_x_given_policy(policy);
        let lyt = self.log_y_theta_given_x();
        let mut out = vec![f64::NEG_INFINITY; nx * ny * nt];
        for yi in 0..ny {
            for xi in 0..nx {
                if lx[xi] == f64::NEG_INFINITY {
                    continue;
                }
                for t in 0..nt {
                    out[(yi * nx + xi) * nt + t] = lx[xi] + lyt[(xi * ny + yi) * nt + t];
                }
            }
        }
        JointTable::from_log_weights(self.step_axes(), out)
    }

    /// Trajectory-level axes `y, x, theta` matching [`GenerativeModel::predictive_joint`].
    pub fn trajectory_axes(&self) -> Vec<Axis> {
        let space = self.space();
        vec![
            Axis::new("y", space.num_y()),
            Axis::new("x", space.num_x()),
            Axis::new("theta", self.num_hypotheses),
        ]
    }

    /// Exact `p(u, y, x, θ)` over axes `u, y1..yH, x0..xH, theta`.
    pub fn predictive_joint_all(&self) -> Result<JointTable> {
        let mut log_w = Vec::new();
        for (ui, policy) in self.policies().iter().enumerate() {
            let lu = self.policy_prior().log_prob(ui);
            let j = self.predictive_joint(policy)?;
            log_w.extend(j.log_probs().iter().map(|l| l + lu));
        }
        let mut axes = vec![Axis::new("u", self.num_policies())];
        axes.extend(self.step_axes());
        JointTable::from_log_weights(axes, log_w)
    }

    /// Exact Bayes update after taking `action` and then observing `observation`.
    ///
    /// The returned model starts one step later, keeps the joint posterior
    /// over `(x, θ)` and plans over the tails of the policies that began with
    /// `action`.
    pub fn belief_update(&self, action: usize, observation: usize) -> Result<GenerativeModel> {
        if self.horizon == 0 {
            return Err(Error::InvalidModel(
                "belief update on a model with no remaining steps".into(),
            ));
        }
        if action >= self.num_actions || observation >= self.num_obs {
            return Err(Error::Shape(format!(
                "action {action} / observation {observation} out of range"
            )));
        }
        let nt = self.num_hypotheses;
        let ns = self.num_states;
        let mut joint = vec![f64::NEG_INFINITY; ns * nt];
        for next in 0..ns {
            for t in 0..nt {
                let terms: Vec<f64> = (0..ns)
                    .map(|x0| {
                        self.initial_log[x0 * nt + t] + self.transition_log_prob(action, x0, next)
                    })
                    .collect();
                joint[next * nt + t] =
                    log_sum_exp(&terms) + self.likelihood_log_prob(t, next, observation);
            }
        }
        let z = log_sum_exp(&joint);
        if z == f64::NEG_INFINITY {
            return Err(Error::ImpossibleObservation {
                action,
                observation,
            });
        }
        for l in joint.iter_mut() {
            *l -= z;
        }

        let mut tails: Vec<Policy> = Vec::new();
        let mut tail_w: Vec<f64> = Vec::new();
        for (i, p) in self.policies().iter().enumerate() {
            if p.actions[0] != action {
                continue;
            }
            let tail = Policy::new(p.actions[1..].to_vec());
            let w = self.policy_prior().log_prob(i);
            match tails.iter().position(|t| *t == tail) {
                Some(j) => tail_w[j] = log_sum_exp(&[tail_w[j], w]),
                None => {
                    tails.push(tail);
                    tail_w.push(w);
                }
            }
        }
        if tails.is_empty() || log_sum_exp(&tail_w) == f64::NEG_INFINITY {
            return Err(Error::ActionNotAllowed { action });
        }
        let policies = PolicySet::new(tails, Categorical::from_log_weights(&tail_w)?)?;

        let mut out = self.clone();
        out.horizon -= 1;
        out.initial_log = joint;
        out.policies = policies;
        Ok(out)
    }
}

/// How per-step state targets combine into a trajectory preference.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PreferenceMode {
    /// One target per future step; the trajectory preference is their product.
    PerStep,
    /// A single target on the final state; earlier steps are uniform.
    FinalStep,
}

/// Preferred future states `p̂(x)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreferencePrior {
    pub mode: PreferenceMode,
    pub targets: Vec<Categorical>,
}

/// A resolved preference over whole state trajectories (log domain).
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryPreference {
    pub log_probs: Vec<f64>,
}

impl PreferencePrior {
    pub fn per_step(targets: Vec<Categorical>) -> Self {
        Self {
            mode: PreferenceMode::PerStep,
            targets,
        }
    }

    pub fn final_step(target: Categorical) -> Self {
        Self {
            mode: PreferenceMode::FinalStep,
            targets: vec![target],
        }
    }

    /// The target for future step `k` (1-based) under a given horizon.
    pub fn step_target(&self, k: usize, horizon: usize, num_states: usize) -> Result<Categorical> {
        match self.mode {
            PreferenceMode::PerStep => {
                if self.targets.len() != horizon {
                    return Err(Error::Shape(format!(
                        "{} per-step targets for horizon {horizon}",
                        self.targets.len()
                    )));
                }
                Ok(self.targets[k - 1].clone())
            }
            PreferenceMode::FinalStep => {
                if self.targets.len() != 1 {
                    return Err(Error::Shape(
                        "final-step preference needs exactly one target".into(),
                    ));
                }
                if k == horizon {
                    Ok(self.targets[0].clone())
                } else {
                    Categorical::uniform(num_states)
                }
            }
        }
    }

    /// The target on the last planned step.
    pub fn final_target(&self) -> Option<&Categorical> {
        self.targets.last()
    }

    /// Drop the step that has just been executed.
    pub fn advance(&self) -> Self {
        match self.mode {
            PreferenceMode::PerStep => Self {
                mode: self.mode,
                targets: self.targets.iter().skip(1).cloned().collect(),
            },
            PreferenceMode::FinalStep => self.clone(),
        }
    }

    /// `log p̂(x)` over state trajectories. The factor for the current state is
    /// the model's own belief about it.
    pub fn over_trajectories(&self, model: &GenerativeModel) -> Result<TrajectoryPreference> {
        let space = model.space();
        let ns = model.num_states();
        let mut steps = Vec::with_capacity(space.horizon + 1);
        steps.push(model.initial_state_belief());
        for k in 1..=space.horizon {
            let t = self.step_target(k, space.horizon, ns)?;
            if t.len() != ns {
                return Err(Error::Shape(format!(
                    "step-{k} target has {} states, model has {ns}",
                    t.len()
                )));
            }
            steps.push(t);
        }
        let log_probs = (0..space.num_x())
            .map(|i| {
                space
                    .decode_x(i)
                    .iter()
                    .enumerate()
                    .map(|(k, &s)| steps[k].log_prob(s))
                    .sum()
            })
            .collect();
        Ok(TrajectoryPreference { log_probs })
    }
}

/// Preferences that are either fixed or specified per parameter hypothesis.
///
/// Per-hypothesis preferences are mixed with the model's current belief over
/// `θ`, step by step, each time they are resolved.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preferences {
    Fixed(PreferencePrior),
    PerHypothesis(Vec<PreferencePrior>),
}

impl Preferences {
    pub fn resolve(&self, model: &GenerativeModel) -> Result<PreferencePrior> {
        match self {
            Preferences::Fixed(p) => Ok(p.clone()),
            Preferences::PerHypothesis(per) => {
                if per.len() != model.num_hypotheses() {
                    return Err(Error::Shape(format!(
                        "{} preference sets for {} hypotheses",
                        per.len(),
                        model.num_hypotheses()
                    )));
                }
                let mode = per[0].mode;
                let n = per[0].targets.len();
                if per.iter().any(|p| p.mode != mode || p.targets.len() != n) {
                    return Err(Error::Shape(
                        "per-hypothesis preferences disagree in shape".into(),
                    ));
                }
                let belief = model.theta_prior();
                let mut targets = Vec::with_capacity(n);
                for k in 0..n {
                    let ns = per[0].targets[k].len();
                    let mut w = vec![0.0; ns];
                    for (t, p) in per.iter().enumerate() {
                        for (s, slot) in w.iter_mut().enumerate() {
                            *slot += belief.prob(t) * p.targets[k].prob(s);
                        }
                    }
                    let logs: Vec<f64> = w.iter().map(|v| v.ln()).collect();
                    targets.push(Categorical::from_log_weights(&logs)?);
                }
                Ok(PreferencePrior { mode, targets })
            }
        }
    }

    pub fn advance(&self) -> Self {
        match self {
            Preferences::Fixed(p) => Preferences::Fixed(p.advance()),
            Preferences::PerHypothesis(per) => {
                Preferences::PerHypothesis(per.iter().map(|p| p.advance()).collect())
            }
        }
    }

    /// The preference an observer who knows `θ` would hold.
    pub fn for_hypothesis(&self, theta: usize) -> Option<&PreferencePrior> {
        match self {
            Preferences::Fixed(p) => Some(p),
            Preferences::PerHypothesis(per) => per.get(theta),
        }
    }
}

/// Preferred future observations `p̂(y)`, one target per future step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObsPreferencePrior {
    pub targets: Vec<Categorical>,
}

impl ObsPreferencePrior {
    /// `log p̂(y)` over observation trajectories.
    pub fn over_trajectories(&self, space: &TrajectorySpace) -> Result<Vec<f64>> {
        if self.targets.len() != space.horizon {
            return Err(Error::Shape(format!(
                "{} observation targets for horizon {}",
                self.targets.len(),
                space.horizon
            )));
        }
        if let Some(t) = self.targets.iter().find(|t| t.len() != space.num_obs) {
            return Err(Error::Shape(format!(
                "observation target of size {}",
                t.len()
            )));
        }
        Ok((0..space.num_y())
            .map(|i| {
                space
                    .decode_y(i)
                    .iter()
                    .zip(&self.targets)
                    .map(|(&y, t)| t.log_prob(y))
                    .sum()
            })
            .collect())
    }
}
