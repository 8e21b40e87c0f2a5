use rand::distr::{weighted::WeightedIndex, Distribution};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::model::{GenerativeModel, Preferences};
use crate::modelfile::{LoadedModel, ModelFile};

/// The true tables a simulated world runs on.
#[derive(Debug, Clone, PartialEq)]
pub struct World {
    /// `p(x0, θ)`, layout `[x0][θ]`
    pub initial_joint: Vec<f64>,
    pub num_hypotheses: usize,
    /// `[θ][x][y]`
    pub likelihood: Vec<Vec<Vec<f64>>>,
    /// `[a][x][x']`
    pub transition: Vec<Vec<Vec<f64>>>,
}

impl World {
    /// A world whose tables are exactly the model's (a well-specified agent).
    pub fn mirror(model: &GenerativeModel) -> Self {
        let (ns, no, nt, na) = (
            model.num_states(),
            model.num_obs(),
            model.num_hypotheses(),
            model.num_actions(),
        );
        Self {
            initial_joint: (0..ns)
                .flat_map(|x| (0..nt).map(move |t| (x, t)))
                .map(|(x, t)| model.initial_joint_prob(x, t))
                .collect(),
            num_hypotheses: nt,
            likelihood: (0..nt)
                .map(|t| {
                    (0..ns)
                        .map(|x| (0..no).map(|y| model.likelihood_prob(t, x, y)).collect())
                        .collect()
                })
                .collect(),
            transition: (0..na)
                .map(|a| {
                    (0..ns)
                        .map(|x| (0..ns).map(|n| model.transition_prob(a, x, n)).collect())
                        .collect()
                })
                .collect(),
        }
    }

    /// Start an episode: `(x0, θ)` is drawn from the initial joint with a
    /// generator seeded by `seed`, which then drives every later draw.
    pub fn environment(&self, seed: u64) -> Result<Environment> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let idx = draw(&mut rng, &self.initial_joint)?;
        Ok(Environment {
            world: self.clone(),
            state: idx / self.num_hypotheses,
            theta: idx % self.num_hypotheses,
            seed,
            rng,
        })
    }
}

fn draw(rng: &mut ChaCha8Rng, weights: &[f64]) -> Result<usize> {
    let dist =
        WeightedIndex::new(weights).map_err(|e| Error::InvalidDistribution(e.to_string()))?;
    Ok(dist.sample(rng))
}

/// A running simulation with a hidden state and a hidden hypothesis.
#[derive(Debug, Clone)]
pub struct Environment {
    world: World,
    state: usize,
    theta: usize,
    seed: u64,
    rng: ChaCha8Rng,
}

impl Environment {
    /// An environment with a fixed starting state and hypothesis.
    pub fn with_state(world: World, state: usize, theta: usize, seed: u64) -> Result<Self> {
        let ns = world.transition.first().map_or(0, |a| a.len());
        if state >= ns || theta >= world.num_hypotheses {
            return Err(Error::Shape(format!(
                "state {state} / hypothesis {theta} out of range"
            )));
        }
        Ok(Self {
            world,
            state,
            theta,
            seed,
            rng: ChaCha8Rng::seed_from_u64(seed),
        })
    }

    pub fn true_state(&self) -> usize {
        self.state
    }

    pub fn true_theta(&self) -> usize {
        self.theta
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Move under `action`, then emit an observation of the new state.
    pub fn step(&mut self, action: usize) -> Result<usize> {
        let row = self
            .world
            .transition
            .get(action)
            .and_then(|a| a.get(self.state))
            .ok_or_else(|| Error::Shape(format!("action {action} out of range")))?;
        self.state = draw(&mut self.rng, row)?;
        draw(
            &mut self.rng,
            &self.world.likelihood[self.theta][self.state],
        )
    }
}

/// A ready-to-run problem: the agent's model, its preferences and the world.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub file: ModelFile,
    pub model: GenerativeModel,
    pub preferences: Preferences,
    pub world: World,
}

impl Scenario {
    /// Build from a model file; the world mirrors the model.
    pub fn from_file(file: ModelFile) -> Result<Self> {
        let LoadedModel {
            model, preferences, ..
        } = file.build()?;
        let world = World::mirror(&model);
        Ok(Self {
            file,
            model,
            preferences,
            world,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{PolicySet, DEFAULT_POLICY_CAP};
    use crate::prob::Categorical;

    fn model() -> GenerativeModel {
        GenerativeModel::new(
            &Categorical::from_probs(&[0.5, 0.5]).unwrap(),
            &Categorical::from_probs(&[0.3, 0.7]).unwrap(),
            &[
                vec![vec![0.9, 0.1], vec![0.2, 0.8]],
                vec![vec![0.5, 0.5], vec![0.5, 0.5]],
            ],
            &[vec![vec![0.6, 0.4], vec![0.1, 0.9]]],
            1,
            PolicySet::exhaustive(1, 1, DEFAULT_POLICY_CAP).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn same_seed_same_trajectory() {
        let w = World::mirror(&model());
        let run = |seed| {
            let mut e = w.environment(seed).unwrap();
            let mut out = vec![(e.true_state(), e.true_theta())];
            for _ in 0..20 {
                let y = e.step(0).unwrap();
                out.push((e.true_state(), y));
            }
            out
        };
        assert_eq!(run(3), run(3));
        assert_ne!(run(3), run(4));
    }

    #[test]
    fn deterministic_world_follows_its_tables() {
        let m = GenerativeModel::new(
            &Categorical::point_mass(2, 0).unwrap(),
            &Categorical::uniform(1).unwrap(),
            &[vec![vec![1.0, 0.0], vec![0.0, 1.0]]],
            &[vec![vec![0.0, 1.0], vec![1.0, 0.0]]],
            1,
            PolicySet::exhaustive(1, 1, DEFAULT_POLICY_CAP).unwrap(),
        )
        .unwrap();
        let mut e = World::mirror(&m).environment(0).unwrap();
        assert_eq!(e.true_state(), 0);
        assert_eq!(e.step(0).unwrap(), 1);
        assert_eq!(e.step(0).unwrap(), 0);
    }

    #[test]
    fn mirrored_world_reproduces_model_tables() {
        let m = model();
        let w = World::mirror(&m);
        assert!((w.initial_joint[1] - 0.35).abs() < 1e-15);
        assert!((w.likelihood[0][1][0] - 0.2).abs() < 1e-15);
    }
}
