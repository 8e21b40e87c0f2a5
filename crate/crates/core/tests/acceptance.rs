//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit on any failure.

use std::process::ExitCode;
use std::time::Instant;

use efe_core::envs::tmaze::{build_tmaze, TMazeSpec, CUE, LEFT, RIGHT};
use efe_core::envs::{run_episode, DecisionRule, EpisodeSettings};
use efe_core::oracle::oracle_efe;
use efe_core::planner::{optimal_policy, PlannerMode, PriorVariant};
use efe_core::suite::{run_suite, CheckRow, SuiteOptions};

const SEEDS: u64 = 200;

struct Outcome {
    pass: bool,
    detail: String,
}

fn summarize(rows: &[CheckRow], prefixes: &[&str]) -> Outcome {
    let selected: Vec<&CheckRow> = rows
        .iter()
        .filter(|r| prefixes.iter().any(|p| r.check_name.starts_with(p)))
        .collect();
    let failed: Vec<&&CheckRow> = selected.iter().filter(|r| !r.pass).collect();
    let worst = selected
        .iter()
        .map(|r| r.residual / r.tolerance.max(f64::MIN_POSITIVE))
        .fold(0.0, f64::max);
    let seeds: std::collections::BTreeSet<u64> = selected.iter().map(|r| r.seed).collect();
    let mut detail = format!(
        "{} checks over {} seeds, {} failed, worst residual/tolerance {:.3e}",
        selected.len(),
        seeds.len(),
        failed.len(),
        worst
    );
    if let Some(f) = failed.first() {
        detail.push_str(&format!(
            "; first failure {} seed {} residual {:.3e}",
            f.check_name, f.seed, f.residual
        ));
    }
    Outcome {
        pass: !selected.is_empty() && failed.is_empty() && seeds.len() as u64 >= SEEDS,
        detail,
    }
}

fn negative_control() -> Outcome {
    let rows = run_suite(&SuiteOptions {
        seeds: (0..SEEDS).collect(),
        corrupt_policy_prior: true,
        oracle: false,
        ..SuiteOptions::default()
    })
    .expect("suite runs");
    let theorem: Vec<&CheckRow> = rows
        .iter()
        .filter(|r| r.check_name == "theorem_identity")
        .collect();
    let all_fail = theorem.iter().all(|r| !r.pass);
    let off = theorem
        .iter()
        .map(|r| (r.residual - 2f64.ln()).abs())
        .fold(0.0, f64::max);
    Outcome {
        pass: all_fail && off < 1e-9 && theorem.len() as u64 == SEEDS,
        detail: format!(
            "{} corrupted cases, all rejected: {all_fail}, max |residual - ln 2| = {off:.3e}",
            theorem.len()
        ),
    }
}

fn tmaze_contrast() -> Outcome {
    let s = build_tmaze(&TMazeSpec::default()).expect("committed tables build");
    let m = &s.model;
    let pref_prior = s.preferences.resolve(m).expect("resolves");
    let pref = pref_prior
        .over_trajectories(m)
        .expect("trajectory preference");
    let oracle = oracle_efe(m, &pref_prior).expect("oracle");
    let policies = m.policies();
    let direct_min = (0..policies.len())
        .filter(|&u| [LEFT, RIGHT].contains(&policies[u].actions[0]))
        .map(|u| oracle[u].total)
        .fold(f64::INFINITY, f64::min);
    let cue_arm: Vec<f64> = (0..policies.len())
        .filter(|&u| policies[u].actions == [CUE, LEFT] || policies[u].actions == [CUE, RIGHT])
        .map(|u| oracle[u].total)
        .collect();
    let full =
        optimal_policy(m, &pref, PlannerMode::FullEfe, PriorVariant::Unnormalized).expect("plan");
    let kl =
        optimal_policy(m, &pref, PlannerMode::KlControl, PriorVariant::Unnormalized).expect("plan");
    let main_vs_oracle = (0..policies.len())
        .map(|u| (full.efe.per_policy[u].total - oracle[u].total).abs())
        .fold(0.0, f64::max);
    let full_top = &policies[full.ranking()[0]];
    let kl_top = &policies[kl.ranking()[0]];
    let ordering = cue_arm.iter().all(|&g| g < direct_min);

    let settings = EpisodeSettings {
        mode: PlannerMode::FullEfe,
        variant: PriorVariant::Unnormalized,
        decision: DecisionRule::Argmax,
        steps: m.horizon(),
    };
    let mut successes = 0;
    let mut cue_first = 0;
    for seed in 1..=100 {
        let mut env = s.world.environment(seed).expect("environment");
        let log = run_episode(m, &s.preferences, &mut env, settings).expect("episode");
        successes += usize::from(log.reached_preferred);
        cue_first += usize::from(log.steps[0].action == CUE);
    }
    let pass = full_top.actions[0] == CUE
        && ordering
        && [LEFT, RIGHT].contains(&kl_top.actions[0])
        && successes == 100
        && main_vs_oracle < 1e-10;
    Outcome {
        pass,
        detail: format!(
            "full_efe top {full_top}, kl_control top {kl_top}, G(cue,arm) = {:.4} vs direct-arm min {direct_min:.4}, \
             cue first {cue_first}/100, rewarding arm {successes}/100, |main - oracle| {main_vs_oracle:.1e}",
            cue_arm.first().copied().unwrap_or(f64::NAN)
        ),
    }
}

fn main() -> ExitCode {
    let start = Instant::now();
    let rows = run_suite(&SuiteOptions {
        seeds: (0..SEEDS).collect(),
        ..SuiteOptions::default()
    })
    .expect("suite runs");
    let suite_time = start.elapsed();

    let criteria: Vec<(&str, Box<dyn Fn() -> Outcome>)> = vec![
        (
            "free-energy decomposition",
            Box::new(|| summarize(&rows, &["theorem_identity"])),
        ),
        (
            "per-policy lemma",
            Box::new(|| summarize(&rows, &["lemma_identity"])),
        ),
        (
            "normalized-prior shift",
            Box::new(|| summarize(&rows, &["normalized_"])),
        ),
        (
            "optimal policy posterior",
            Box::new(|| summarize(&rows, &["exact_complexity_zero", "policy_posterior_"])),
        ),
        (
            "cost templates",
            Box::new(|| summarize(&rows, &["efe_template", "efe_prime_template"])),
        ),
        (
            "entropy and information forms",
            Box::new(|| {
                summarize(
                    &rows,
                    &[
                        "conditional_entropy_form",
                        "divergence_two_forms",
                        "mutual_information_form",
                    ],
                )
            }),
        ),
        (
            "special-case reductions",
            Box::new(|| {
                summarize(
                    &rows,
                    &[
                        "kl_control_is_risk",
                        "bayes_design_is_",
                        "full_efe_is_sum",
                        "single_hypothesis_no_novelty",
                    ],
                )
            }),
        ),
        ("T-maze behavioural contrast", Box::new(tmaze_contrast)),
        (
            "oracle agreement",
            Box::new(|| summarize(&rows, &["oracle_"])),
        ),
        ("negative control", Box::new(negative_control)),
    ];

    println!(
        "acceptance suite ({SEEDS} seeds, shared suite run {:.2?})",
        suite_time
    );
    let mut failures = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let t = Instant::now();
        let o = run();
        if !o.pass {
            failures += 1;
        }
        println!(
            "criterion {:>2} {} {name}: {} ({:.2?})",
            i + 1,
            if o.pass { "PASS" } else { "FAIL" },
            o.detail,
            t.elapsed()
        );
    }
    println!(
        "{} of {} criteria passed",
        criteria.len() - failures,
        criteria.len()
    );
    if failures == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
