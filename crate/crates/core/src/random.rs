//! Seeded random models for property checks.
//!
//! Every table row is a symmetric Dirichlet(1) draw, so all entries are
//! strictly positive and any structured posterior is supported.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::model::{
    enumerate_policies, GenerativeModel, ObsPreferencePrior, PolicySet, PreferencePrior,
};
use crate::prob::Categorical;

/// Inclusive size ranges for random models.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RandomModelSpec {
    pub states: (usize, usize),
    pub observations: (usize, usize),
    pub hypotheses: (usize, usize),
    pub actions: (usize, usize),
    pub policies: (usize, usize),
    pub horizon: (usize, usize),
}

impl RandomModelSpec {
    /// Up to 4 states, 3 observations, 3 hypotheses, 5 policies, horizon 2.
    pub fn standard() -> Self {
        Self {
            states: (2, 4),
            observations: (2, 3),
            hypotheses: (1, 3),
            actions: (1, 3),
            policies: (1, 5),
            horizon: (1, 2),
        }
    }

    /// Up to 3 states, 3 observations, 3 hypotheses, horizon exactly 2.
    pub fn oracle() -> Self {
        Self {
            states: (2, 3),
            observations: (2, 3),
            hypotheses: (1, 3),
            actions: (1, 3),
            policies: (1, 5),
            horizon: (2, 2),
        }
    }

    /// Exactly two policies over a short horizon.
    pub fn two_policies() -> Self {
        Self {
            states: (2, 3),
            observations: (2, 3),
            hypotheses: (1, 2),
            actions: (2, 2),
            policies: (2, 2),
            horizon: (1, 1),
        }
    }
}

/// A random model with matching random preferences.
#[derive(Debug, Clone, PartialEq)]
pub struct RandomCase {
    pub model: GenerativeModel,
    pub preference: PreferencePrior,
    pub obs_preference: ObsPreferencePrior,
}

fn dirichlet(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let w: Vec<f64> = (0..n)
        .map(|_| rng.sample::<f64, _>(Exp1).max(1e-3))
        .collect();
    let s: f64 = w.iter().sum();
    w.iter().map(|v| v / s).collect()
}

fn pick(rng: &mut ChaCha8Rng, (lo, hi): (usize, usize)) -> usize {
    rng.random_range(lo..=hi)
}

/// Draw a model from `spec` with a generator seeded by `seed`.
pub fn random_model(spec: &RandomModelSpec, seed: u64) -> Result<RandomCase> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ns = pick(&mut rng, spec.states);
    let no = pick(&mut rng, spec.observations);
    let nt = pick(&mut rng, spec.hypotheses);
    let na = pick(&mut rng, spec.actions);
    let h = pick(&mut rng, spec.horizon);
    let mut all = enumerate_policies(na, h, usize::MAX)?;
    let np = pick(
        &mut rng,
        (
            spec.policies.0.min(all.len()),
            spec.policies.1.min(all.len()),
        ),
    );
    all.shuffle(&mut rng);
    all.truncate(np);
    all.sort();
    let policies = PolicySet::new(all, Categorical::from_probs(&dirichlet(&mut rng, np))?)?;
    let initial = Categorical::from_probs(&dirichlet(&mut rng, ns))?;
    let theta = Categorical::from_probs(&dirichlet(&mut rng, nt))?;
    let likelihood: Vec<Vec<Vec<f64>>> = (0..nt)
        .map(|_| (0..ns).map(|_| dirichlet(&mut rng, no)).collect())
        .collect();
    let transition: Vec<Vec<Vec<f64>>> = (0..na)
        .map(|_| (0..ns).map(|_| dirichlet(&mut rng, ns)).collect())
        .collect();
    let model = GenerativeModel::new(&initial, &theta, &likelihood, &transition, h, policies)?;
    let preference = PreferencePrior::per_step(
        (0..h)
            .map(|_| Categorical::from_probs(&dirichlet(&mut rng, ns)))
            .collect::<Result<_>>()?,
    );
    let obs_preference = ObsPreferencePrior {
        targets: (0..h)
            .map(|_| Categorical::from_probs(&dirichlet(&mut rng, no)))
            .collect::<Result<_>>()?,
    };
    Ok(RandomCase {
        model,
        preference,
        obs_preference,
    })
}

/// A model like `case.model` but with a single hypothesis: the first.
pub fn single_hypothesis(case: &RandomCase) -> Result<GenerativeModel> {
    let m = &case.model;
    let (ns, no) = (m.num_states(), m.num_obs());
    let initial = Categorical::from_probs(
        &(0..ns)
            .map(|x| m.initial_state_belief().prob(x))
            .collect::<Vec<_>>(),
    )?;
    let likelihood = vec![(0..ns)
        .map(|x| (0..no).map(|y| m.likelihood_prob(0, x, y)).collect())
        .collect()];
    let transition: Vec<Vec<Vec<f64>>> = (0..m.num_actions())
        .map(|a| {
            (0..ns)
                .map(|x| (0..ns).map(|n| m.transition_prob(a, x, n)).collect())
                .collect()
        })
        .collect();
    GenerativeModel::new(
        &initial,
        &Categorical::uniform(1)?,
        &likelihood,
        &transition,
        m.horizon(),
        m.policy_set().clone(),
    )
}
