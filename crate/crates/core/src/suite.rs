//! The seeded verification suite: every identity checked against its
//! tolerance on random models and posteriors.

use serde::Serialize;

use crate::efe::{check_template, check_template_prime, efe};
use crate::epistemic::epistemic_priors;
use crate::error::Result;
use crate::model::{GenerativeModel, TrajectoryPreference};
use crate::oracle::{
    oracle_ambiguity_via_joint, oracle_belief_update, oracle_complexity, oracle_efe,
    oracle_efe_posterior, oracle_efe_single_sum, oracle_policy_posterior, oracle_vfe,
};
use crate::planner::{
    complexity, optimal_policy, verify_theorem_with_priors, vfe, PlannerMode, PriorVariant,
};
use crate::posterior::{exact_posterior, random_posterior, PosteriorShape, StructuredPosterior};
use crate::prob::{
    conditional_entropy, entropy_log, kl_divergence_log, mutual_information, softmax, Axis,
    JointTable, ALGEBRA_TOL, THEOREM_TOL,
};
use crate::random::{random_model, single_hypothesis, RandomModelSpec};

/// Agreement tolerance between main modules and the oracle.
pub const ORACLE_TOL: f64 = 1e-10;
/// Simplex grid resolution and the matching total-variation tolerance.
pub const GRID_RESOLUTION: f64 = 1e-3;

/// One verification result.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckRow {
    pub check_name: String,
    pub seed: u64,
    pub residual: f64,
    pub tolerance: f64,
    pub pass: bool,
}

impl CheckRow {
    pub fn new(check_name: &str, seed: u64, residual: f64, tolerance: f64) -> Self {
        Self {
            check_name: check_name.to_string(),
            seed,
            residual,
            tolerance,
            pass: residual <= tolerance,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteOptions {
    pub seeds: Vec<u64>,
    /// Multiply `p̃(u)` by two in the theorem checks without recording it.
    pub corrupt_policy_prior: bool,
    pub theorem: bool,
    pub oracle: bool,
}

impl Default for SuiteOptions {
    fn default() -> Self {
        Self {
            seeds: (0..200).collect(),
            corrupt_policy_prior: false,
            theorem: true,
            oracle: true,
        }
    }
}

fn max_abs(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

/// Seeds for the different random draws of one suite seed.
fn sub_seed(seed: u64, k: u64) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(k)
}

/// Posteriors that differ from `post` only in `q(u)`.
pub fn policy_family(
    post: &StructuredPosterior,
    seed: u64,
    size: usize,
) -> Vec<StructuredPosterior> {
    (0..size as u64)
        .map(|k| {
            let draw = random_posterior(post.shape(), sub_seed(seed, 100 + k));
            post.with_policy_posterior(draw.q_u().clone())
                .expect("same shape")
        })
        .collect()
}

/// Decomposition, lemma and normalization-shift checks on one random case.
pub fn theorem_checks(seed: u64, corrupt: bool) -> Result<Vec<CheckRow>> {
    let case = random_model(&RandomModelSpec::standard(), sub_seed(seed, 1))?;
    let m = &case.model;
    let pref = case.preference.over_trajectories(m)?;
    let post = random_posterior(PosteriorShape::of_model(m), sub_seed(seed, 2));
    let mut priors = epistemic_priors(&post, false)?;
    if corrupt {
        priors.corrupt_policy_prior(2.0);
    }
    let r = verify_theorem_with_priors(&post, m, &pref, &priors)?;
    let mut rows = vec![
        CheckRow::new("theorem_identity", seed, r.residual, THEOREM_TOL),
        CheckRow::new("lemma_identity", seed, r.max_lemma_residual(), THEOREM_TOL),
        CheckRow::new(
            "normalized_shift_matches_constants",
            seed,
            (r.constant_shift + r.log_partition_total).abs(),
            THEOREM_TOL,
        ),
    ];
    // the shift is one constant across posteriors that share every conditional
    let family = policy_family(&post, seed, 6);
    let mut shifts = Vec::new();
    let mut f_un = Vec::new();
    let mut f_no = Vec::new();
    for q in &family {
        let a = vfe(q, m, &pref, PriorVariant::Unnormalized)?;
        let b = vfe(q, m, &pref, PriorVariant::Normalized)?;
        shifts.push(a - b);
        f_un.push(a);
        f_no.push(b);
    }
    let spread = shifts
        .iter()
        .map(|s| (s - shifts[0]).abs())
        .fold(0.0, f64::max);
    rows.push(CheckRow::new(
        "normalized_shift_constant_over_family",
        seed,
        spread,
        THEOREM_TOL,
    ));
    let argmin = |v: &[f64]| (0..v.len()).fold(0, |b, i| if v[i] < v[b] { i } else { b });
    let moved = if argmin(&f_un) == argmin(&f_no) {
        0.0
    } else {
        1.0
    };
    rows.push(CheckRow::new(
        "normalized_argmin_invariant",
        seed,
        moved,
        0.0,
    ));
    Ok(rows)
}

/// `G` and `G'` against their template forms.
pub fn template_checks(seed: u64) -> Result<Vec<CheckRow>> {
    let case = random_model(&RandomModelSpec::standard(), sub_seed(seed, 1))?;
    let m = &case.model;
    let post = random_posterior(PosteriorShape::of_model(m), sub_seed(seed, 2));
    let pref = case.preference.over_trajectories(m)?;
    let obs = case.obs_preference.over_trajectories(&m.space())?;
    let exact = exact_posterior(m)?;
    Ok(vec![
        CheckRow::new(
            "efe_template",
            seed,
            check_template(&post, &pref)?.residual,
            ORACLE_TOL,
        ),
        CheckRow::new(
            "efe_template_exact",
            seed,
            check_template(&exact, &pref)?.residual,
            ORACLE_TOL,
        ),
        CheckRow::new(
            "efe_prime_template",
            seed,
            check_template_prime(&post, &obs)?.residual,
            ORACLE_TOL,
        ),
    ])
}

/// Closed-form policy posterior in the exact regime.
pub fn policy_posterior_checks(seed: u64) -> Result<Vec<CheckRow>> {
    let case = random_model(&RandomModelSpec::standard(), sub_seed(seed, 1))?;
    let m = &case.model;
    let pref = case.preference.over_trajectories(m)?;
    let r = optimal_policy(m, &pref, PlannerMode::FullEfe, PriorVariant::Unnormalized)?;
    let c_max = r.complexity.iter().map(|c| c.abs()).fold(0.0, f64::max);
    let direct = efe(&exact_posterior(m)?, &pref)?;
    let scores: Vec<f64> = (0..m.num_policies())
        .map(|u| m.policy_prior().log_prob(u) - direct.per_policy[u].total)
        .collect();
    let closed = softmax(&scores)?;
    let mut rows = vec![
        CheckRow::new("exact_complexity_zero", seed, c_max, ALGEBRA_TOL),
        CheckRow::new(
            "policy_posterior_closed_form",
            seed,
            closed.total_variation(&r.policy_posterior),
            ALGEBRA_TOL,
        ),
    ];
    let two = random_model(&RandomModelSpec::two_policies(), sub_seed(seed, 3))?;
    let tm = &two.model;
    let tp = two.preference.over_trajectories(tm)?;
    let q =
        optimal_policy(tm, &tp, PlannerMode::FullEfe, PriorVariant::Unnormalized)?.policy_posterior;
    let grid = oracle_policy_posterior(tm, &two.preference, false, GRID_RESOLUTION)?;
    rows.push(CheckRow::new(
        "policy_posterior_grid",
        seed,
        grid.total_variation(&q),
        GRID_RESOLUTION,
    ));
    Ok(rows)
}

/// Entropy, divergence and mutual-information expectation forms on random joints.
pub fn information_checks(seed: u64) -> Result<Vec<CheckRow>> {
    let mut out = Vec::new();
    // a random q(u, x): conditional entropy equals the expected slice entropy
    let post = random_posterior(
        PosteriorShape {
            space: crate::model::TrajectorySpace {
                num_states: 3,
                num_obs: 2,
                horizon: 1,
            },
            num_policies: 4,
            num_hypotheses: 3,
        },
        sub_seed(seed, 4),
    );
    let nx = post.shape().space.num_x();
    let ny = post.shape().space.num_y();
    let nt = post.shape().num_hypotheses;
    let mut ux = Vec::new();
    for u in 0..4 {
        for &l in post.q_x_given_u().slice(u).expect("defined") {
            ux.push(post.q_u().log_prob(u) + l);
        }
    }
    let joint = JointTable::new(vec![Axis::new("u", 4), Axis::new("x", nx)], ux)?;
    let direct = conditional_entropy(&joint, &["x"], &["u"])?;
    let expected: f64 = (0..4)
        .map(|u| post.q_u().prob(u) * entropy_log(post.q_x_given_u().slice(u).expect("defined")))
        .sum();
    out.push(CheckRow::new(
        "conditional_entropy_form",
        seed,
        (direct - expected).abs(),
        ALGEBRA_TOL,
    ));

    // q(x, y, θ) from the same posterior with q(x) uniform
    let mut w = Vec::with_capacity(nx * ny * nt);
    for x in 0..nx {
        let qy = post.q_y_given_x().slice(x).expect("defined");
        for y in 0..ny {
            let qt = post.q_theta_given_xy().slice(x * ny + y).expect("defined");
            for t in 0..nt {
                w.push(qy[y] + qt[t]);
            }
        }
    }
    let xyt = JointTable::from_log_weights(
        vec![
            Axis::new("x", nx),
            Axis::new("y", ny),
            Axis::new("theta", nt),
        ],
        w,
    )?;
    let mi = mutual_information(&xyt, &["y"], &["theta"], &["x"])?;
    let theta_x = post.theta_given_x()?;
    let lx = -(nx as f64).ln();
    let mut expected_d = 0.0;
    let mut worst_form = 0.0f64;
    for x in 0..nx {
        let tx = theta_x.slice(x).expect("defined");
        let qy = post.q_y_given_x().slice(x).expect("defined");
        for y in 0..ny {
            let qt = post.q_theta_given_xy().slice(x * ny + y).expect("defined");
            let d = kl_divergence_log(qt, tx)?;
            // the same divergence through q(yθ|x) / (q(y|x) q(θ|x))
            let alt: f64 = (0..nt)
                .map(|t| qt[t].exp() * ((qy[y] + qt[t]) - qy[y] - tx[t]))
                .sum();
            worst_form = worst_form.max((d - alt).abs());
            expected_d += (lx + qy[y]).exp() * d;
        }
    }
    out.push(CheckRow::new(
        "divergence_two_forms",
        seed,
        worst_form,
        ALGEBRA_TOL,
    ));
    out.push(CheckRow::new(
        "mutual_information_form",
        seed,
        (mi - expected_d).abs(),
        ALGEBRA_TOL,
    ));
    Ok(out)
}

/// Component masks and the single-hypothesis reduction.
pub fn reduction_checks(seed: u64) -> Result<Vec<CheckRow>> {
    let case = random_model(&RandomModelSpec::standard(), sub_seed(seed, 1))?;
    let m = &case.model;
    let pref = case.preference.over_trajectories(m)?;
    let kl = optimal_policy(m, &pref, PlannerMode::KlControl, PriorVariant::Unnormalized)?;
    let bd = optimal_policy(
        m,
        &pref,
        PlannerMode::BayesDesign,
        PriorVariant::Unnormalized,
    )?;
    let full = optimal_policy(m, &pref, PlannerMode::FullEfe, PriorVariant::Unnormalized)?;
    let kl_dev = (0..m.num_policies())
        .map(|u| (kl.g_mode[u] - kl.efe.per_policy[u].risk).abs())
        .fold(0.0, f64::max);
    let bd_dev = (0..m.num_policies())
        .map(|u| {
            let e = &bd.efe.per_policy[u];
            (bd.g_mode[u] - (e.ambiguity - e.novelty)).abs()
        })
        .fold(0.0, f64::max);
    let full_dev = (0..m.num_policies())
        .map(|u| {
            let e = &full.efe.per_policy[u];
            (full.g_mode[u] - (e.risk + e.ambiguity - e.novelty)).abs()
        })
        .fold(0.0, f64::max);
    let single = single_hypothesis(&case)?;
    let spref = case.preference.over_trajectories(&single)?;
    let nov = efe(&exact_posterior(&single)?, &spref)?
        .per_policy
        .iter()
        .map(|e| e.novelty.abs())
        .fold(0.0, f64::max);
    let rand_single = random_posterior(PosteriorShape::of_model(&single), sub_seed(seed, 5));
    let nov_rand = efe(&rand_single, &spref)?
        .per_policy
        .iter()
        .map(|e| e.novelty.abs())
        .fold(0.0, f64::max);
    Ok(vec![
        CheckRow::new("kl_control_is_risk", seed, kl_dev, 0.0),
        CheckRow::new("bayes_design_is_ambiguity_minus_novelty", seed, bd_dev, 0.0),
        CheckRow::new("full_efe_is_sum", seed, full_dev, 0.0),
        CheckRow::new("single_hypothesis_no_novelty", seed, nov.max(nov_rand), 0.0),
    ])
}

fn efe_term_diff(a: &[crate::efe::PolicyEfe], b: &[crate::efe::PolicyEfe]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| {
            (x.risk - y.risk)
                .abs()
                .max((x.ambiguity - y.ambiguity).abs())
                .max((x.novelty - y.novelty).abs())
                .max((x.total - y.total).abs())
        })
        .fold(0.0, f64::max)
}

/// Main modules against the brute-force oracle on a horizon-2 model with at
/// most three states, observations and hypotheses.
pub fn oracle_checks(seed: u64) -> Result<Vec<CheckRow>> {
    let case = random_model(&RandomModelSpec::oracle(), sub_seed(seed, 6))?;
    let m = &case.model;
    let pref = case.preference.over_trajectories(m)?;
    let exact = exact_posterior(m)?;
    let post = random_posterior(PosteriorShape::of_model(m), sub_seed(seed, 7));
    let mut rows = Vec::new();

    let main_exact = efe(&exact, &pref)?.per_policy;
    let or_exact = oracle_efe(m, &case.preference)?;
    rows.push(CheckRow::new(
        "oracle_efe_exact",
        seed,
        efe_term_diff(&main_exact, &or_exact),
        ORACLE_TOL,
    ));
    let single_sum = oracle_efe_single_sum(m, &case.preference)?;
    let totals: Vec<f64> = or_exact.iter().map(|e| e.total).collect();
    rows.push(CheckRow::new(
        "oracle_efe_two_paths",
        seed,
        max_abs(&single_sum, &totals),
        ALGEBRA_TOL,
    ));
    let amb: Vec<f64> = or_exact.iter().map(|e| e.ambiguity).collect();
    rows.push(CheckRow::new(
        "oracle_ambiguity_two_paths",
        seed,
        max_abs(&oracle_ambiguity_via_joint(m)?, &amb),
        ALGEBRA_TOL,
    ));

    let main_rand = efe(&post, &pref)?.per_policy;
    let or_rand = oracle_efe_posterior(&post, m, &case.preference)?;
    rows.push(CheckRow::new(
        "oracle_efe_random",
        seed,
        efe_term_diff(&main_rand, &or_rand),
        ORACLE_TOL,
    ));

    for (name, q) in [("exact", &exact), ("random", &post)] {
        for (variant, normalized) in [
            (PriorVariant::Unnormalized, false),
            (PriorVariant::Normalized, true),
        ] {
            let a = vfe(q, m, &pref, variant)?;
            let b = oracle_vfe(q, m, &case.preference, normalized)?;
            rows.push(CheckRow::new(
                &format!("oracle_vfe_{name}_{variant}"),
                seed,
                (a - b).abs(),
                ORACLE_TOL,
            ));
        }
    }

    let c = complexity(&post, m)?;
    rows.push(CheckRow::new(
        "oracle_complexity",
        seed,
        max_abs(&c, &oracle_complexity(&post, m)?),
        ORACLE_TOL,
    ));

    // a belief update on an action the policies allow and an observation with mass
    let action = m.policies()[(seed as usize) % m.num_policies()].actions[0];
    let observation = (seed as usize / 7) % m.num_obs();
    let updated = m.belief_update(action, observation)?;
    let or_joint = oracle_belief_update(m, action, observation)?;
    let (ns, nt) = (m.num_states(), m.num_hypotheses());
    let mut worst = 0.0f64;
    for x in 0..ns {
        for t in 0..nt {
            worst = worst.max((updated.initial_joint_prob(x, t) - or_joint[x * nt + t]).abs());
        }
    }
    rows.push(CheckRow::new(
        "oracle_belief_update",
        seed,
        worst,
        ORACLE_TOL,
    ));
    Ok(rows)
}

/// Decomposition checks on a given model.
///
/// Every posterior shares the exact predictive conditionals and differs only
/// in `q(u)`, so it stays within the support of models with zero entries.
pub fn model_checks(
    model: &GenerativeModel,
    pref: &TrajectoryPreference,
    seeds: &[u64],
    corrupt: bool,
) -> Result<Vec<CheckRow>> {
    let exact = exact_posterior(model)?;
    let mut rows = Vec::new();
    for &seed in seeds {
        let post = policy_family(&exact, seed, 1).remove(0);
        let mut priors = epistemic_priors(&post, false)?;
        if corrupt {
            priors.corrupt_policy_prior(2.0);
        }
        let r = verify_theorem_with_priors(&post, model, pref, &priors)?;
        rows.push(CheckRow::new(
            "model_theorem_identity",
            seed,
            r.residual,
            THEOREM_TOL,
        ));
        rows.push(CheckRow::new(
            "model_lemma_identity",
            seed,
            r.max_lemma_residual(),
            THEOREM_TOL,
        ));
        rows.push(CheckRow::new(
            "model_normalized_shift",
            seed,
            (r.constant_shift + r.log_partition_total).abs(),
            THEOREM_TOL,
        ));
    }
    Ok(rows)
}

/// Run the selected groups for every seed.
pub fn run_suite(opts: &SuiteOptions) -> Result<Vec<CheckRow>> {
    let mut rows = Vec::new();
    for &seed in &opts.seeds {
        if opts.theorem {
            rows.extend(theorem_checks(seed, opts.corrupt_policy_prior)?);
            rows.extend(template_checks(seed)?);
            rows.extend(policy_posterior_checks(seed)?);
            rows.extend(information_checks(seed)?);
            rows.extend(reduction_checks(seed)?);
        }
        if opts.oracle {
            rows.extend(oracle_checks(seed)?);
        }
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tmaze_model_checks_pass_and_corruption_shows() {
        let s = crate::envs::build_tmaze(&crate::envs::TMazeSpec::default()).unwrap();
        let pref = s
            .preferences
            .resolve(&s.model)
            .unwrap()
            .over_trajectories(&s.model)
            .unwrap();
        for r in model_checks(&s.model, &pref, &[0, 1, 2], false).unwrap() {
            assert!(r.pass, "{r:?}");
        }
        let bad = model_checks(&s.model, &pref, &[0], true).unwrap();
        assert!((bad[0].residual - 2f64.ln()).abs() < 1e-9);
    }

    #[test]
    fn a_few_seeds_pass_everything() {
        let rows = run_suite(&SuiteOptions {
            seeds: (0..5).collect(),
            ..SuiteOptions::default()
        })
        .unwrap();
        for r in &rows {
            assert!(r.pass, "{r:?}");
        }
    }

    #[test]
    fn corruption_breaks_only_the_decomposition_checks() {
        let rows = run_suite(&SuiteOptions {
            seeds: vec![3],
            corrupt_policy_prior: true,
            oracle: false,
            ..SuiteOptions::default()
        })
        .unwrap();
        let theorem = rows
            .iter()
            .find(|r| r.check_name == "theorem_identity")
            .unwrap();
        assert!(!theorem.pass);
        assert!((theorem.residual - 2f64.ln()).abs() < 1e-9);
        assert!(rows
            .iter()
            .filter(|r| !r.pass)
            .all(|r| r.check_name.ends_with("identity")));
    }
}
