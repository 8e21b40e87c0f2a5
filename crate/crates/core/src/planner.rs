//! Variational free energy with epistemic priors, its decomposition into
//! expected free energy plus complexity, and the policy posterior it induces.
//!
//! ```text
//! F[q] = E_q log q(y,x,θ,u) / (p(y,x,θ,u) p̂(x) p̃(u) p̃(x) p̃(y,x))
//!      = E_{q(u)} G(u) + E_q log q(y,x,θ,u) / p(y,x,θ,u)
//! q*(u) = softmax(-P(u) - G(u) - C(u))
//! ```

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::efe::{efe, EfeBreakdown, PolicyEfe};
use crate::epistemic::{epistemic_priors, EpistemicPriors};
use crate::error::{Error, Result};
use crate::model::{GenerativeModel, Policy, TrajectoryPreference};
use crate::posterior::{exact_posterior, StructuredPosterior};
use crate::prob::{entropy_log, kl_divergence_log, Axis, Categorical, ConditionalTable};

/// Which components of `G(u)` drive policy selection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlannerMode {
    /// risk + ambiguity - novelty
    #[default]
    FullEfe,
    /// risk only
    KlControl,
    /// ambiguity - novelty
    BayesDesign,
    /// same as [`PlannerMode::KlControl`]
    UtilityOnly,
}

impl PlannerMode {
    pub fn cost(&self, e: &PolicyEfe) -> f64 {
        match self {
            PlannerMode::FullEfe => e.risk + e.ambiguity - e.novelty,
            PlannerMode::KlControl | PlannerMode::UtilityOnly => e.risk,
            PlannerMode::BayesDesign => e.ambiguity - e.novelty,
        }
    }
}

impl fmt::Display for PlannerMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PlannerMode::FullEfe => "full_efe",
            PlannerMode::KlControl => "kl_control",
            PlannerMode::BayesDesign => "bayes_design",
            PlannerMode::UtilityOnly => "utility_only",
        })
    }
}

impl FromStr for PlannerMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full_efe" => Ok(PlannerMode::FullEfe),
            "kl_control" => Ok(PlannerMode::KlControl),
            "bayes_design" => Ok(PlannerMode::BayesDesign),
            "utility_only" => Ok(PlannerMode::UtilityOnly),
            _ => Err(Error::Config(format!("unknown planner mode `{s}`"))),
        }
    }
}

/// Whether the epistemic priors are softmax-normalized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PriorVariant {
    Normalized,
    #[default]
    Unnormalized,
}

impl PriorVariant {
    pub fn is_normalized(&self) -> bool {
        matches!(self, PriorVariant::Normalized)
    }
}

impl fmt::Display for PriorVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PriorVariant::Normalized => "normalized",
            PriorVariant::Unnormalized => "unnormalized",
        })
    }
}

impl FromStr for PriorVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "normalized" => Ok(PriorVariant::Normalized),
            "unnormalized" => Ok(PriorVariant::Unnormalized),
            _ => Err(Error::Config(format!("unknown prior variant `{s}`"))),
        }
    }
}

fn check_sizes(
    post: &StructuredPosterior,
    model: &GenerativeModel,
    pref: &TrajectoryPreference,
) -> Result<()> {
    let shape = post.shape();
    if shape.space != model.space()
        || shape.num_policies != model.num_policies()
        || shape.num_hypotheses != model.num_hypotheses()
    {
        return Err(Error::Shape(
            "posterior was not built for this model".into(),
        ));
    }
    if pref.log_probs.len() != shape.space.num_x() {
        return Err(Error::Shape(
            "preference does not match state trajectories".into(),
        ));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum ObsTerm {
    Undefined,
    Unsupported,
    Value(f64),
}

impl ObsTerm {
    fn value(self) -> Option<f64> {
        match self {
            ObsTerm::Value(v) => Some(v),
            _ => None,
        }
    }
}

/// `KL[q(y,θ|x) || p(y,θ|x)]` per state trajectory.
fn observation_complexity(
    post: &StructuredPosterior,
    model: &GenerativeModel,
) -> Result<Vec<ObsTerm>> {
    let shape = post.shape();
    let (nx, ny, nt) = (
        shape.space.num_x(),
        shape.space.num_y(),
        shape.num_hypotheses,
    );
    let lyt = model.log_y_theta_given_x();
    (0..nx)
        .map(|x| {
            let Some(qy) = post.q_y_given_x().slice(x) else {
                return Ok(ObsTerm::Undefined);
            };
            let mut q = vec![f64::NEG_INFINITY; ny * nt];
            for y in 0..ny {
                if qy[y] == f64::NEG_INFINITY {
                    continue;
                }
                let qt = post
                    .q_theta_given_xy()
                    .slice(x * ny + y)
                    .ok_or_else(|| Error::UndefinedSlice(format!("q(theta|x={x},y={y})")))?;
                for t in 0..nt {
                    q[y * nt + t] = qy[y] + qt[t];
                }
            }
            let p = &lyt[x * ny * nt..(x + 1) * ny * nt];
            Ok(match kl_divergence_log(&q, p) {
                Ok(v) => ObsTerm::Value(v),
                Err(_) => ObsTerm::Unsupported,
            })
        })
        .collect()
}

/// `C(u) = KL[q(y,x,θ|u) || p(y,x,θ|u)]` for every policy.
pub fn complexity(post: &StructuredPosterior, model: &GenerativeModel) -> Result<Vec<f64>> {
    let shape = post.shape();
    if shape.num_policies != model.num_policies() || shape.space != model.space() {
        return Err(Error::Shape(
            "posterior was not built for this model".into(),
        ));
    }
    let obs = observation_complexity(post, model)?;
    let mut out = Vec::with_capacity(shape.num_policies);
    for (u, policy) in model.policies().iter().enumerate() {
        let qx = post.q_x_given_u().slice(u).expect("defined");
        let px = model.log_x_given_policy(policy);
        let mut c = 0.0;
        for x in 0..qx.len() {
            if qx[x] == f64::NEG_INFINITY {
                continue;
            }
            let trajectory = || shape.space.decode_x(x);
            if px[x] == f64::NEG_INFINITY {
                return Err(Error::ComplexityUndefined {
                    policy: u,
                    detail: format!(
                        "state trajectory {:?} is impossible under the model",
                        trajectory()
                    ),
                });
            }
            let inner = match obs[x] {
                ObsTerm::Value(v) => v,
                ObsTerm::Undefined => {
                    return Err(Error::ComplexityUndefined {
                        policy: u,
                        detail: format!("q(y|x) undefined at {:?}", trajectory()),
                    })
                }
                ObsTerm::Unsupported => {
                    return Err(Error::ComplexityUndefined {
                        policy: u,
                        detail: format!(
                            "q(y,theta|x) has mass the model lacks at {:?}",
                            trajectory()
                        ),
                    })
                }
            };
            c += qx[x].exp() * (qx[x] - px[x] + inner);
        }
        out.push(c);
    }
    Ok(out)
}

/// Per-policy bracket of `F`:
/// `B(u) = E_{q(y,x,θ|u)} log q(y,x,θ|u) / (p(y,x,θ|u) p̂(x) p̃(u) p̃(x) p̃(y,x))`.
pub fn policy_free_energies(
    post: &StructuredPosterior,
    model: &GenerativeModel,
    pref: &TrajectoryPreference,
    priors: &EpistemicPriors,
) -> Result<Vec<f64>> {
    check_sizes(post, model, pref)?;
    let shape = post.shape();
    let (nx, ny, nt) = (
        shape.space.num_x(),
        shape.space.num_y(),
        shape.num_hypotheses,
    );
    let lyt = model.log_y_theta_given_x();
    let undefined = |u: usize, x: usize, y: Option<usize>, what: &str| {
        let ys = y.map(|y| shape.space.decode_y(y));
        Error::VfeUndefined(format!(
            "{what} at u = {u}, x = {:?}, y = {ys:?}",
            shape.space.decode_x(x)
        ))
    };
    // per-state inner sums are shared across policies
    let mut inner: Vec<Option<std::result::Result<f64, Option<usize>>>> = Vec::with_capacity(nx);
    for x in 0..nx {
        let Some(qy) = post.q_y_given_x().slice(x) else {
            inner.push(None);
            continue;
        };
        let mut acc = 0.0;
        let mut bad = None;
        'ys: for y in 0..ny {
            if qy[y] == f64::NEG_INFINITY {
                continue;
            }
            let (Some(qt), Some(lyx)) = (
                post.q_theta_given_xy().slice(x * ny + y),
                priors.log_yx[x * ny + y],
            ) else {
                bad = Some(y);
                break;
            };
            let mut th = 0.0;
            for t in 0..nt {
                if qt[t] == f64::NEG_INFINITY {
                    continue;
                }
                let lp = lyt[(x * ny + y) * nt + t];
                if lp == f64::NEG_INFINITY {
                    bad = Some(y);
                    break 'ys;
                }
                th += qt[t].exp() * (qt[t] - lp);
            }
            acc += qy[y].exp() * (qy[y] - lyx + th);
        }
        inner.push(Some(match bad {
            Some(y) => Err(Some(y)),
            None => Ok(acc),
        }));
    }
    let mut out = Vec::with_capacity(shape.num_policies);
    for (u, policy) in model.policies().iter().enumerate() {
        let qx = post.q_x_given_u().slice(u).expect("defined");
        let px = model.log_x_given_policy(policy);
        let mut b = -priors.log_u[u];
        for x in 0..nx {
            if qx[x] == f64::NEG_INFINITY {
                continue;
            }
            if px[x] == f64::NEG_INFINITY {
                return Err(undefined(u, x, None, "impossible state trajectory"));
            }
            if pref.log_probs[x] == f64::NEG_INFINITY {
                return Err(undefined(u, x, None, "zero preference"));
            }
            let lx =
                priors.log_x[x].ok_or_else(|| undefined(u, x, None, "undefined state prior"))?;
            let rest = match &inner[x] {
                None => return Err(undefined(u, x, None, "undefined q(y|x)")),
                Some(Err(y)) => return Err(undefined(u, x, *y, "unsupported observation factor")),
                Some(Ok(v)) => *v,
            };
            b += qx[x].exp() * (qx[x] - px[x] - pref.log_probs[x] - lx + rest);
        }
        out.push(b);
    }
    Ok(out)
}

/// `F[q]` with the supplied epistemic priors.
pub fn vfe_with_priors(
    post: &StructuredPosterior,
    model: &GenerativeModel,
    pref: &TrajectoryPreference,
    priors: &EpistemicPriors,
) -> Result<f64> {
    let b = policy_free_energies(post, model, pref, priors)?;
    let qu = post.q_u();
    let pu = model.policy_prior();
    let mut f = 0.0;
    for (u, bu) in b.iter().enumerate() {
        let l = qu.log_prob(u);
        if l == f64::NEG_INFINITY {
            continue;
        }
        if pu.log_prob(u) == f64::NEG_INFINITY {
            return Err(Error::VfeUndefined(format!("policy {u} has no prior mass")));
        }
        f += l.exp() * (l - pu.log_prob(u) + bu);
    }
    Ok(f)
}

/// `F[q]` with epistemic priors built from `post` itself.
pub fn vfe(
    post: &StructuredPosterior,
    model: &GenerativeModel,
    pref: &TrajectoryPreference,
    variant: PriorVariant,
) -> Result<f64> {
    let priors = epistemic_priors(post, variant.is_normalized())?;
    vfe_with_priors(post, model, pref, &priors)
}

/// Both sides of the free-energy decomposition, evaluated separately.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TheoremReport {
    /// `F[q]` with unnormalized priors.
    pub f_direct: f64,
    /// `E_{q(u)} G(u)`
    pub expected_g: f64,
    /// `E_q log q(y,x,θ,u) / p(y,x,θ,u)`
    pub complexity_total: f64,
    pub residual: f64,
    /// `|B(u) - G(u) - C(u)|` per policy.
    pub lemma_residuals: Vec<f64>,
    /// `F_unnormalized - F_normalized`
    pub constant_shift: f64,
    /// Log-partition constants recorded while normalizing.
    pub log_partition_total: f64,
}

impl TheoremReport {
    pub fn max_lemma_residual(&self) -> f64 {
        self.lemma_residuals.iter().copied().fold(0.0, f64::max)
    }
}

/// Evaluate the decomposition with priors built from `post`.
pub fn verify_theorem(
    post: &StructuredPosterior,
    model: &GenerativeModel,
    pref: &TrajectoryPreference,
) -> Result<TheoremReport> {
    let priors = epistemic_priors(post, false)?;
    verify_theorem_with_priors(post, model, pref, &priors)
}

/// Evaluate the decomposition with caller-supplied unnormalized priors.
pub fn verify_theorem_with_priors(
    post: &StructuredPosterior,
    model: &GenerativeModel,
    pref: &TrajectoryPreference,
    priors: &EpistemicPriors,
) -> Result<TheoremReport> {
    let b = policy_free_energies(post, model, pref, priors)?;
    let f_direct = vfe_with_priors(post, model, pref, priors)?;
    let g = efe(post, pref)?;
    let c = complexity(post, model)?;
    let qu = post.q_u();
    let mut expected_g = 0.0;
    let mut weighted_c = 0.0;
    for u in 0..qu.len() {
        let w = qu.prob(u);
        if w > 0.0 {
            expected_g += w * g.per_policy[u].total;
            weighted_c += w * c[u];
        }
    }
    let policy_kl = kl_divergence_log(qu.log_probs(), model.policy_prior().log_probs())?;
    let complexity_total = policy_kl + weighted_c;
    let lemma_residuals = b
        .iter()
        .zip(&g.per_policy)
        .zip(&c)
        .map(|((bu, gu), cu)| (bu - gu.total - cu).abs())
        .collect();
    let norm = epistemic_priors(post, true)?;
    let f_norm = vfe_with_priors(post, model, pref, &norm)?;
    let f_unnorm = vfe(post, model, pref, PriorVariant::Unnormalized)?;
    Ok(TheoremReport {
        f_direct,
        expected_g,
        complexity_total,
        residual: (f_direct - expected_g - complexity_total).abs(),
        lemma_residuals,
        constant_shift: f_unnorm - f_norm,
        log_partition_total: norm.log_partition.total(),
    })
}

/// Per-policy planning outcome.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PlannerResult {
    pub mode: PlannerMode,
    pub variant: PriorVariant,
    pub policies: Vec<Policy>,
    /// `P(u) = -log p(u)`
    pub prior_cost: Vec<f64>,
    pub efe: EfeBreakdown,
    /// `G(u)` with the mode's component mask applied.
    pub g_mode: Vec<f64>,
    pub complexity: Vec<f64>,
    pub policy_posterior: Categorical,
    /// `F[q]` at the reported policy posterior.
    pub f_value: f64,
}

impl PlannerResult {
    /// Policy indices ordered by ascending `g_mode`, ties by index.
    pub fn ranking(&self) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.policies.len()).collect();
        idx.sort_by(|&a, &b| self.g_mode[a].total_cmp(&self.g_mode[b]).then(a.cmp(&b)));
        idx
    }

    /// The policy with the highest posterior mass, ties by index.
    pub fn best_policy(&self) -> usize {
        self.policy_posterior.argmax()
    }
}

fn policy_scores(p: &[f64], g: &[f64], c: &[f64]) -> Vec<f64> {
    p.iter()
        .zip(g)
        .zip(c)
        .map(|((p, g), c)| -p - g - c)
        .collect()
}

fn assemble(
    post: &StructuredPosterior,
    model: &GenerativeModel,
    pref: &TrajectoryPreference,
    mode: PlannerMode,
    variant: PriorVariant,
) -> Result<(PlannerResult, StructuredPosterior)> {
    let breakdown = efe(post, pref)?;
    let c = complexity(post, model)?;
    let prior_cost: Vec<f64> = model
        .policy_prior()
        .log_probs()
        .iter()
        .map(|l| -l)
        .collect();
    let g_mode: Vec<f64> = breakdown.per_policy.iter().map(|e| mode.cost(e)).collect();
    let q = Categorical::from_log_weights(&policy_scores(&prior_cost, &g_mode, &c))?;
    let post = post.with_policy_posterior(q.clone())?;
    let f_value = vfe(&post, model, pref, variant)?;
    Ok((
        PlannerResult {
            mode,
            variant,
            policies: model.policies().to_vec(),
            prior_cost,
            efe: breakdown,
            g_mode,
            complexity: c,
            policy_posterior: q,
            f_value,
        },
        post,
    ))
}

/// The policy posterior under the exact predictive posterior.
pub fn optimal_policy(
    model: &GenerativeModel,
    pref: &TrajectoryPreference,
    mode: PlannerMode,
    variant: PriorVariant,
) -> Result<PlannerResult> {
    let post = exact_posterior(model)?;
    assemble(&post, model, pref, mode, variant).map(|(r, _)| r)
}

/// Restriction placed on the posterior during constrained minimization.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Constraint {
    /// `q(u)` free; all other factors at the exact predictive posterior.
    Free,
    /// `q(u)` restricted to a point mass.
    PointMass,
    /// `q(x|u)` restricted to a product of per-step marginals.
    MeanFieldStates,
}

/// Outcome of [`minimize_constrained`].
#[derive(Debug, Clone, PartialEq)]
pub struct ConstrainedResult {
    pub posterior: StructuredPosterior,
    pub result: PlannerResult,
    /// `F` before the first sweep followed by `F` after each sweep.
    pub f_trace: Vec<f64>,
    pub converged: bool,
}

/// `a(x) = -log p̃(x) + E_{q(y|x)}[log q(y|x) - log p̃(y,x) + KL[q(θ|x,y) || p(θ|x,y) ...]]`
/// collapsed into one per-trajectory cost: everything in `B(u)` below `q(x|u)`.
fn state_costs(post: &StructuredPosterior, model: &GenerativeModel) -> Result<Vec<Option<f64>>> {
    let priors = epistemic_priors(post, false)?;
    let obs = observation_complexity(post, model)?;
    let ny = post.shape().space.num_y();
    Ok((0..post.shape().space.num_x())
        .map(|x| {
            let (Some(lx), Some(c)) = (priors.log_x[x], obs[x].value()) else {
                return None;
            };
            let qy = post.q_y_given_x().slice(x)?;
            let mut d = 0.0;
            for y in 0..ny {
                if qy[y] > f64::NEG_INFINITY {
                    d += qy[y].exp() * priors.log_yx[x * ny + y]?;
                }
            }
            Some(-lx + c - d)
        })
        .collect())
}

/// Replace `q(x|u)` by a product of per-step marginals, one coordinate pass.
///
/// With `ℓ(x) = -log p(x|u) - log p̂(x) + a(x)`, the policy bracket is
/// `E[ℓ] - 2 H[q(x|u)]`, so each marginal update `q_k ∝ exp(-E_{q_-k}[ℓ] / 2)`
/// is an exact coordinate minimization.
fn mean_field_pass(
    post: &StructuredPosterior,
    model: &GenerativeModel,
    pref: &TrajectoryPreference,
    marginals: &mut [Vec<Vec<f64>>],
    sweep: usize,
) -> Result<StructuredPosterior> {
    let space = post.shape().space;
    let (ns, nx) = (space.num_states, space.num_x());
    let a = state_costs(post, model)?;
    let mut slices = Vec::with_capacity(model.num_policies());
    for (u, policy) in model.policies().iter().enumerate() {
        let px = model.log_x_given_policy(policy);
        let cost: Vec<f64> = (0..nx)
            .map(|x| match a[x] {
                Some(ax) if px[x] > f64::NEG_INFINITY && pref.log_probs[x] > f64::NEG_INFINITY => {
                    -px[x] - pref.log_probs[x] + ax
                }
                _ => f64::INFINITY,
            })
            .collect();
        let m = &mut marginals[u];
        for k in 0..=space.horizon {
            let mut expected = vec![0.0; ns];
            let mut infinite = vec![false; ns];
            for (x, &l) in cost.iter().enumerate() {
                let xs = space.decode_x(x);
                let w: f64 = xs
                    .iter()
                    .enumerate()
                    .filter(|&(j, _)| j != k)
                    .map(|(j, &s)| m[j][s])
                    .product();
                if w == 0.0 {
                    continue;
                }
                if l.is_infinite() {
                    infinite[xs[k]] = true;
                } else {
                    expected[xs[k]] += w * l;
                }
            }
            let logits: Vec<f64> = (0..ns)
                .map(|s| {
                    if infinite[s] {
                        f64::NEG_INFINITY
                    } else {
                        -expected[s] / 2.0
                    }
                })
                .collect();
            let updated =
                Categorical::from_log_weights(&logits).map_err(|_| Error::Diverged { sweep })?;
            m[k] = updated.probs();
        }
        let joint: Vec<f64> = (0..nx)
            .map(|x| {
                space
                    .decode_x(x)
                    .iter()
                    .enumerate()
                    .map(|(k, &s)| m[k][s].ln())
                    .sum()
            })
            .collect();
        slices.push(Some(joint));
    }
    let table = ConditionalTable::from_log_slices(
        vec![Axis::new("x", nx)],
        vec![Axis::new("u", model.num_policies())],
        slices,
    )?;
    post.with_state_factor(table)
}

/// Coordinate minimization of `F` within a restricted posterior family.
///
/// Each sweep refreshes the epistemic priors from the current posterior,
/// sets `q(u)` to its exact coordinate minimizer, then (for
/// [`Constraint::MeanFieldStates`]) updates every per-step state marginal.
/// Stops once `|ΔF| < tolerance` or after `sweeps` sweeps.
pub fn minimize_constrained(
    model: &GenerativeModel,
    pref: &TrajectoryPreference,
    constraint: Constraint,
    variant: PriorVariant,
    sweeps: usize,
    tolerance: f64,
) -> Result<ConstrainedResult> {
    if sweeps == 0 {
        return Err(Error::Config("at least one sweep is required".into()));
    }
    let mut post = exact_posterior(model)?;
    let space = model.space();
    let mut marginals = Vec::new();
    if constraint == Constraint::MeanFieldStates {
        // start every policy at its most probable trajectory, which has finite cost
        for policy in model.policies() {
            let px = model.log_x_given_policy(policy);
            let best = (0..px.len()).fold(0, |b, x| if px[x] > px[b] { x } else { b });
            let m: Vec<Vec<f64>> = space
                .decode_x(best)
                .iter()
                .map(|&s| Categorical::point_mass(space.num_states, s).map(|c| c.probs()))
                .collect::<Result<_>>()?;
            marginals.push(m);
        }
        let table = ConditionalTable::from_log_slices(
            vec![Axis::new("x", space.num_x())],
            vec![Axis::new("u", model.num_policies())],
            marginals
                .iter()
                .map(|m| {
                    Some(
                        (0..space.num_x())
                            .map(|x| {
                                space
                                    .decode_x(x)
                                    .iter()
                                    .enumerate()
                                    .map(|(k, &s)| m[k][s].ln())
                                    .sum()
                            })
                            .collect(),
                    )
                })
                .collect(),
        )?;
        post = post.with_state_factor(table)?;
    }
    let evaluate = |p: &StructuredPosterior, sweep: usize| -> Result<f64> {
        let f = vfe(p, model, pref, variant)?;
        if f.is_finite() {
            Ok(f)
        } else {
            Err(Error::Diverged { sweep })
        }
    };
    let mut f_trace = vec![evaluate(&post, 0)?];
    let mut converged = false;
    for sweep in 1..=sweeps {
        let breakdown = efe(&post, pref)?;
        let c = complexity(&post, model)?;
        let prior_cost: Vec<f64> = model
            .policy_prior()
            .log_probs()
            .iter()
            .map(|l| -l)
            .collect();
        let scores = policy_scores(&prior_cost, &breakdown.totals(), &c);
        let q_u = match constraint {
            Constraint::PointMass => {
                let best =
                    (0..scores.len()).fold(0, |b, u| if scores[u] > scores[b] { u } else { b });
                Categorical::point_mass(scores.len(), best)?
            }
            _ => Categorical::from_log_weights(&scores)?,
        };
        post = post.with_policy_posterior(q_u)?;
        if constraint == Constraint::MeanFieldStates {
            post = mean_field_pass(&post, model, pref, &mut marginals, sweep)?;
        }
        let f = evaluate(&post, sweep)?;
        let prev = *f_trace.last().expect("non-empty");
        f_trace.push(f);
        if (f - prev).abs() < tolerance {
            converged = true;
            break;
        }
    }
    let breakdown = efe(&post, pref)?;
    let c = complexity(&post, model)?;
    let prior_cost: Vec<f64> = model
        .policy_prior()
        .log_probs()
        .iter()
        .map(|l| -l)
        .collect();
    let f_value = *f_trace.last().expect("non-empty");
    let result = PlannerResult {
        mode: PlannerMode::FullEfe,
        variant,
        policies: model.policies().to_vec(),
        prior_cost,
        g_mode: breakdown.totals(),
        efe: breakdown,
        complexity: c,
        policy_posterior: post.q_u().clone(),
        f_value,
    };
    Ok(ConstrainedResult {
        posterior: post,
        result,
        f_trace,
        converged,
    })
}

/// `H[q(x|u)]` per policy; the log of the unnormalized policy prior.
pub fn state_entropies(post: &StructuredPosterior) -> Vec<f64> {
    (0..post.shape().num_policies)
        .map(|u| entropy_log(post.q_x_given_u().slice(u).expect("defined")))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{PolicySet, PreferencePrior, DEFAULT_POLICY_CAP};
    use crate::posterior::random_posterior;
    use crate::posterior::PosteriorShape;

    fn random_model(seed: u64) -> GenerativeModel {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut row = |n: usize| -> Vec<f64> {
            let w: Vec<f64> = (0..n).map(|_| rng.random::<f64>() + 0.05).collect();
            let s: f64 = w.iter().sum();
            w.iter().map(|v| v / s).collect()
        };
        let init = row(2);
        let theta = row(2);
        let lik: Vec<Vec<Vec<f64>>> = (0..2).map(|_| (0..2).map(|_| row(2)).collect()).collect();
        let tr: Vec<Vec<Vec<f64>>> = (0..2).map(|_| (0..2).map(|_| row(2)).collect()).collect();
        let prior = row(2);
        let policies = PolicySet::new(
            crate::model::enumerate_policies(2, 1, DEFAULT_POLICY_CAP).unwrap(),
            Categorical::from_probs(&prior).unwrap(),
        )
        .unwrap();
        GenerativeModel::new(
            &Categorical::from_probs(&init).unwrap(),
            &Categorical::from_probs(&theta).unwrap(),
            &lik,
            &tr,
            1,
            policies,
        )
        .unwrap()
    }

    fn pref_for(m: &GenerativeModel) -> TrajectoryPreference {
        PreferencePrior::per_step(vec![Categorical::from_probs(&[0.7, 0.3]).unwrap()])
            .over_trajectories(m)
            .unwrap()
    }

    #[test]
    fn exact_posterior_has_no_complexity() {
        let m = random_model(1);
        let c = complexity(&exact_posterior(&m).unwrap(), &m).unwrap();
        assert!(c.iter().all(|v| v.abs() < 1e-15));
    }

    #[test]
    fn decomposition_holds_on_random_posteriors() {
        for seed in 0..50 {
            let m = random_model(seed);
            let post = random_posterior(PosteriorShape::of_model(&m), seed + 1000);
            let r = verify_theorem(&post, &m, &pref_for(&m)).unwrap();
            assert!(r.residual < 1e-9, "{r:?}");
            assert!(r.max_lemma_residual() < 1e-9, "{r:?}");
            assert!((r.constant_shift + r.log_partition_total).abs() < 1e-9);
        }
    }

    #[test]
    fn exact_posterior_complexity_is_policy_kl() {
        let m = random_model(3);
        let post = exact_posterior(&m).unwrap();
        let r = verify_theorem(&post, &m, &pref_for(&m)).unwrap();
        assert!(r.residual < 1e-9);
        assert!(r.complexity_total.abs() < 1e-12);
        let q = post
            .with_policy_posterior(Categorical::from_probs(&[0.9, 0.1]).unwrap())
            .unwrap();
        let r = verify_theorem(&q, &m, &pref_for(&m)).unwrap();
        let kl = kl_divergence_log(q.q_u().log_probs(), m.policy_prior().log_probs()).unwrap();
        assert!((r.complexity_total - kl).abs() < 1e-12);
    }

    #[test]
    fn corrupted_policy_prior_breaks_the_identity_by_ln_two() {
        let m = random_model(4);
        let post = random_posterior(PosteriorShape::of_model(&m), 9);
        let mut priors = epistemic_priors(&post, false).unwrap();
        priors.corrupt_policy_prior(2.0);
        let r = verify_theorem_with_priors(&post, &m, &pref_for(&m), &priors).unwrap();
        assert!((r.residual - 2f64.ln()).abs() < 1e-9);
    }

    #[test]
    fn softmax_arithmetic_of_the_policy_posterior() {
        let q = Categorical::from_log_weights(&policy_scores(
            &[2f64.ln(), 2f64.ln()],
            &[2f64.ln(), 0.0],
            &[0.0, 0.0],
        ))
        .unwrap();
        assert!((q.prob(0) - 1.0 / 3.0).abs() < 1e-15);
        assert!((q.prob(1) - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn optimal_policy_matches_closed_form() {
        let m = random_model(5);
        let pref = pref_for(&m);
        for mode in [
            PlannerMode::FullEfe,
            PlannerMode::KlControl,
            PlannerMode::BayesDesign,
        ] {
            let r = optimal_policy(&m, &pref, mode, PriorVariant::Unnormalized).unwrap();
            let expect = crate::prob::softmax(
                &(0..2)
                    .map(|u| -r.prior_cost[u] - mode.cost(&r.efe.per_policy[u]))
                    .collect::<Vec<_>>(),
            )
            .unwrap();
            assert!(expect.total_variation(&r.policy_posterior) < 1e-12);
        }
    }

    #[test]
    fn mode_masks() {
        let e = PolicyEfe::new(1.25, 0.5, 0.125);
        assert_eq!(PlannerMode::FullEfe.cost(&e), e.total);
        assert_eq!(PlannerMode::KlControl.cost(&e), 1.25);
        assert_eq!(PlannerMode::UtilityOnly.cost(&e), 1.25);
        assert_eq!(PlannerMode::BayesDesign.cost(&e), 0.375);
        assert_eq!(
            "bayes_design".parse::<PlannerMode>().unwrap(),
            PlannerMode::BayesDesign
        );
        assert!("nope".parse::<PlannerMode>().is_err());
    }

    #[test]
    fn free_family_converges_to_closed_form() {
        let m = random_model(6);
        let pref = pref_for(&m);
        let r = minimize_constrained(
            &m,
            &pref,
            Constraint::Free,
            PriorVariant::Unnormalized,
            10,
            1e-12,
        )
        .unwrap();
        let exact =
            optimal_policy(&m, &pref, PlannerMode::FullEfe, PriorVariant::Unnormalized).unwrap();
        assert!(r.converged);
        assert_eq!(r.f_trace.len(), 3);
        assert!(
            r.result
                .policy_posterior
                .total_variation(&exact.policy_posterior)
                < 1e-9
        );
        assert!((r.result.f_value - exact.f_value).abs() < 1e-9);
    }

    #[test]
    fn point_mass_family_picks_the_argmin() {
        let m = random_model(7);
        let pref = pref_for(&m);
        let exact =
            optimal_policy(&m, &pref, PlannerMode::FullEfe, PriorVariant::Unnormalized).unwrap();
        let r = minimize_constrained(
            &m,
            &pref,
            Constraint::PointMass,
            PriorVariant::Unnormalized,
            5,
            1e-12,
        )
        .unwrap();
        assert_eq!(
            r.result.policy_posterior.argmax(),
            exact.policy_posterior.argmax()
        );
        assert_eq!(
            r.result
                .policy_posterior
                .prob(exact.policy_posterior.argmax()),
            1.0
        );
    }

    #[test]
    fn mean_field_descent_is_monotone() {
        for seed in 0..10 {
            let m = random_model(seed + 20);
            let pref = pref_for(&m);
            let r = minimize_constrained(
                &m,
                &pref,
                Constraint::MeanFieldStates,
                PriorVariant::Unnormalized,
                50,
                1e-12,
            )
            .unwrap();
            for w in r.f_trace.windows(2) {
                assert!(w[1] <= w[0] + 1e-12, "{:?}", r.f_trace);
            }
            assert!(r.result.complexity.iter().all(|&c| c >= -1e-12));
        }
    }
}
