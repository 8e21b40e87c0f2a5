//! Expected free energy per policy.
//!
//! ```text
//! G(u)  = risk + ambiguity - novelty
//!   risk      = KL[q(x|u) || p̂(x)]
//!   ambiguity = E_{q(x|u)} H[q(y|x)]
//!   novelty   = E_{q(x,y|u)} KL[q(θ|x,y) || q(θ|x)]
//!
//! G'(u) = pragmatic - salience - novelty
//!   pragmatic = E_{q(y|u)} [-log p̂(y)]
//!   salience  = E_{q(x,y|u)} log q(x|y,u) / q(x|u)
//! ```
//!
//! All expectations are exact sums over trajectories. Conditional slices that
//! carry no mass are skipped; mass on an undefined slice is an error.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::TrajectoryPreference;
use crate::posterior::StructuredPosterior;
use crate::prob::{entropy_log, kl_divergence_log, log_sum_exp};

/// Risk, ambiguity and novelty of one policy, in nats.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PolicyEfe {
    pub risk: f64,
    pub ambiguity: f64,
    pub novelty: f64,
    pub total: f64,
}

impl PolicyEfe {
    pub fn new(risk: f64, ambiguity: f64, novelty: f64) -> Self {
        Self {
            risk,
            ambiguity,
            novelty,
            total: risk + ambiguity - novelty,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EfeBreakdown {
    pub per_policy: Vec<PolicyEfe>,
}

impl EfeBreakdown {
    pub fn totals(&self) -> Vec<f64> {
        self.per_policy.iter().map(|p| p.total).collect()
    }
}

/// Pragmatic cost, salience and novelty of one policy, in nats.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PolicyEfePrime {
    pub pragmatic_cost: f64,
    pub salience: f64,
    pub novelty: f64,
    pub total: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EfePrimeBreakdown {
    pub per_policy: Vec<PolicyEfePrime>,
}

/// Per-trajectory ambiguity `H[q(y|x)]` and expected divergence
/// `Σ_y q(y|x) KL[q(θ|x,y) || q(θ|x)]`; `None` where `q(y|x)` is undefined.
pub(crate) fn per_state_epistemics(post: &StructuredPosterior) -> Result<Vec<Option<(f64, f64)>>> {
    let ny = post.shape().space.num_y();
    let theta_x = post.theta_given_x()?;
    let qy = post.q_y_given_x();
    let qt = post.q_theta_given_xy();
    (0..post.shape().space.num_x())
        .map(|x| {
            let Some(ys) = qy.slice(x) else {
                return Ok(None);
            };
            let tx = theta_x.slice(x).expect("defined where q(y|x) is");
            let mut nov = 0.0;
            for (y, &ly) in ys.iter().enumerate() {
                if ly == f64::NEG_INFINITY {
                    continue;
                }
                let txy = qt.slice(x * ny + y).expect("checked by theta_given_x");
                nov += ly.exp() * kl_divergence_log(txy, tx)?;
            }
            Ok(Some((entropy_log(ys), nov)))
        })
        .collect()
}

fn undefined_mass(u: usize, x: usize) -> Error {
    Error::UndefinedSlice(format!("q(y|x={x}) undefined but q(x={x}|u={u}) > 0"))
}

/// Expected free energy of every policy under `post`.
pub fn efe(post: &StructuredPosterior, pref: &TrajectoryPreference) -> Result<EfeBreakdown> {
    let shape = post.shape();
    if pref.log_probs.len() != shape.space.num_x() {
        return Err(Error::Shape(
            "preference does not match state trajectories".into(),
        ));
    }
    let epi = per_state_epistemics(post)?;
    let mut per_policy = Vec::with_capacity(shape.num_policies);
    for u in 0..shape.num_policies {
        let qx = post.q_x_given_u().slice(u).expect("q(x|u) always defined");
        let (mut risk, mut amb, mut nov) = (0.0, 0.0, 0.0);
        for (x, &lx) in qx.iter().enumerate() {
            if lx == f64::NEG_INFINITY {
                continue;
            }
            let lp = pref.log_probs[x];
            if lp == f64::NEG_INFINITY {
                return Err(Error::RiskUndefined {
                    policy: u,
                    trajectory: shape.space.decode_x(x),
                });
            }
            let w = lx.exp();
            risk += w * (lx - lp);
            let (h, d) = epi[x].ok_or_else(|| undefined_mass(u, x))?;
            amb += w * h;
            nov += w * d;
        }
        per_policy.push(PolicyEfe::new(risk, amb, nov));
    }
    Ok(EfeBreakdown { per_policy })
}

/// The observation-preference variant `G'(u)`.
///
/// Salience conditions on the policy: `q(x | y, u) = q(x, y | u) / q(y | u)`.
pub fn efe_prime(post: &StructuredPosterior, obs_pref: &[f64]) -> Result<EfePrimeBreakdown> {
    let shape = post.shape();
    let (nx, ny) = (shape.space.num_x(), shape.space.num_y());
    if obs_pref.len() != ny {
        return Err(Error::Shape(
            "observation preference does not match trajectories".into(),
        ));
    }
    let epi = per_state_epistemics(post)?;
    let xy = post.xy_given_u()?;
    let mut per_policy = Vec::with_capacity(shape.num_policies);
    for u in 0..shape.num_policies {
        let qx = post.q_x_given_u().slice(u).expect("defined");
        let qxy = xy.slice(u).expect("defined");
        let qyu: Vec<f64> = (0..ny)
            .map(|y| {
                let col: Vec<f64> = (0..nx).map(|x| qxy[x * ny + y]).collect();
                log_sum_exp(&col)
            })
            .collect();
        let mut pragmatic = 0.0;
        for (y, &l) in qyu.iter().enumerate() {
            if l == f64::NEG_INFINITY {
                continue;
            }
            if obs_pref[y] == f64::NEG_INFINITY {
                return Err(Error::PragmaticCostUndefined {
                    policy: u,
                    trajectory: shape.space.decode_y(y),
                });
            }
            pragmatic -= l.exp() * obs_pref[y];
        }
        let (mut salience, mut nov) = (0.0, 0.0);
        for x in 0..nx {
            if qx[x] == f64::NEG_INFINITY {
                continue;
            }
            let (_, d) = epi[x].ok_or_else(|| undefined_mass(u, x))?;
            nov += qx[x].exp() * d;
            for y in 0..ny {
                let l = qxy[x * ny + y];
                if l == f64::NEG_INFINITY {
                    continue;
                }
                let log_x_given_yu = l - qyu[y];
                salience += l.exp() * (log_x_given_yu - qx[x]);
            }
        }
        per_policy.push(PolicyEfePrime {
            pragmatic_cost: pragmatic,
            salience,
            novelty: nov,
            total: pragmatic - salience - nov,
        });
    }
    Ok(EfePrimeBreakdown { per_policy })
}

/// Result of evaluating the biased-model template next to a direct breakdown.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TemplateCheck {
    /// `E_{q(yxθ|u)} log q(xθ|u) / p̄(yxθ)` per policy.
    pub template: Vec<f64>,
    /// The directly computed policy cost per policy.
    pub direct: Vec<f64>,
    /// `max_u |template - direct|`.
    pub residual: f64,
}

/// Evaluate `E log q(xθ|u)/p̄(yxθ)` by brute force over `(x, y, θ)` for each policy.
/// `log_bar` returns `log p̄` for a given `(u, x, y, θ)` and the joint log-mass
/// `log q(x, y | u)` with `log q(y | u)` supplied for policy-dependent factors.
fn template_values(
    post: &StructuredPosterior,
    log_bar: impl Fn(usize, usize, usize, usize, f64, f64) -> Result<f64>,
) -> Result<Vec<f64>> {
    let shape = post.shape();
    let (nx, ny, nt) = (
        shape.space.num_x(),
        shape.space.num_y(),
        shape.num_hypotheses,
    );
    let mut out = Vec::with_capacity(shape.num_policies);
    for u in 0..shape.num_policies {
        let qx = post.q_x_given_u().slice(u).expect("defined");
        // full q(x, y, θ | u) for this policy
        let mut joint = vec![f64::NEG_INFINITY; nx * ny * nt];
        for x in 0..nx {
            if qx[x] == f64::NEG_INFINITY {
                continue;
            }
            let qy = post
                .q_y_given_x()
                .slice(x)
                .ok_or_else(|| undefined_mass(u, x))?;
            for y in 0..ny {
                if qy[y] == f64::NEG_INFINITY {
                    continue;
                }
                let qt = post
                    .q_theta_given_xy()
                    .slice(x * ny + y)
                    .ok_or_else(|| Error::UndefinedSlice(format!("q(theta|x={x},y={y})")))?;
                for t in 0..nt {
                    joint[(x * ny + y) * nt + t] = qx[x] + qy[y] + qt[t];
                }
            }
        }
        // q(x, θ | u) and q(y | u), q(x, y | u) by summation of the joint
        let mut x_theta = vec![f64::NEG_INFINITY; nx * nt];
        let mut xy = vec![f64::NEG_INFINITY; nx * ny];
        for x in 0..nx {
            for t in 0..nt {
                let col: Vec<f64> = (0..ny).map(|y| joint[(x * ny + y) * nt + t]).collect();
                x_theta[x * nt + t] = log_sum_exp(&col);
            }
            for y in 0..ny {
                xy[x * ny + y] = log_sum_exp(&joint[(x * ny + y) * nt..(x * ny + y + 1) * nt]);
            }
        }
        let y_marg: Vec<f64> = (0..ny)
            .map(|y| log_sum_exp(&(0..nx).map(|x| xy[x * ny + y]).collect::<Vec<_>>()))
            .collect();
        let mut acc = 0.0;
        for x in 0..nx {
            for y in 0..ny {
                for t in 0..nt {
                    let l = joint[(x * ny + y) * nt + t];
                    if l == f64::NEG_INFINITY {
                        continue;
                    }
                    let bar = log_bar(u, x, y, t, xy[x * ny + y], y_marg[y])?;
                    acc += l.exp() * (x_theta[x * nt + t] - bar);
                }
            }
        }
        out.push(acc);
    }
    Ok(out)
}

/// Compare `G(u)` with the template using `p̄ = q(θ|xy) q(y|x) p̂(x)`.
pub fn check_template(
    post: &StructuredPosterior,
    pref: &TrajectoryPreference,
) -> Result<TemplateCheck> {
    let ny = post.shape().space.num_y();
    let direct = efe(post, pref)?.totals();
    let template = template_values(post, |u, x, y, t, _, _| {
        let lp = pref.log_probs[x];
        if lp == f64::NEG_INFINITY {
            return Err(Error::RiskUndefined {
                policy: u,
                trajectory: post.shape().space.decode_x(x),
            });
        }
        let qy = post.q_y_given_x().slice(x).expect("mass implies defined")[y];
        let qt = post
            .q_theta_given_xy()
            .slice(x * ny + y)
            .expect("mass implies defined")[t];
        Ok(qt + qy + lp)
    })?;
    let residual = max_abs_diff(&template, &direct);
    Ok(TemplateCheck {
        template,
        direct,
        residual,
    })
}

/// Compare `G'(u)` with the template using `p̄ = q(θ|xy) q(x|y,u) p̂(y)`.
pub fn check_template_prime(post: &StructuredPosterior, obs_pref: &[f64]) -> Result<TemplateCheck> {
    let ny = post.shape().space.num_y();
    let direct: Vec<f64> = efe_prime(post, obs_pref)?
        .per_policy
        .iter()
        .map(|p| p.total)
        .collect();
    let template = template_values(post, |u, _x, y, t, log_xy, log_y| {
        let lp = obs_pref[y];
        if lp == f64::NEG_INFINITY {
            return Err(Error::PragmaticCostUndefined {
                policy: u,
                trajectory: post.shape().space.decode_y(y),
            });
        }
        let qt = post
            .q_theta_given_xy()
            .slice(_x * ny + y)
            .expect("mass implies defined")[t];
        Ok(qt + (log_xy - log_y) + lp)
    })?;
    let residual = max_abs_diff(&template, &direct);
    Ok(TemplateCheck {
        template,
        direct,
        residual,
    })
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{
        GenerativeModel, ObsPreferencePrior, PolicySet, PreferencePrior, DEFAULT_POLICY_CAP,
    };
    use crate::posterior::{exact_posterior, random_posterior, PosteriorShape};
    use crate::prob::{mutual_information, Categorical};

    fn shape() -> PosteriorShape {
        PosteriorShape {
            space: crate::model::TrajectorySpace {
                num_states: 2,
                num_obs: 2,
                horizon: 1,
            },
            num_policies: 2,
            num_hypotheses: 2,
        }
    }

    fn uniform_pref(n: usize) -> TrajectoryPreference {
        TrajectoryPreference {
            log_probs: vec![-(n as f64).ln(); n],
        }
    }

    #[test]
    fn deterministic_chain_hits_every_zero() {
        // x0 = 0, the single action moves to 1, y = x, preference on state 1
        let m = GenerativeModel::new(
            &Categorical::point_mass(2, 0).unwrap(),
            &Categorical::uniform(2).unwrap(),
            &[
                vec![vec![1.0, 0.0], vec![0.0, 1.0]],
                vec![vec![1.0, 0.0], vec![0.0, 1.0]],
            ],
            &[vec![vec![0.0, 1.0], vec![0.0, 1.0]]],
            1,
            PolicySet::exhaustive(1, 1, DEFAULT_POLICY_CAP).unwrap(),
        )
        .unwrap();
        let pref = PreferencePrior::per_step(vec![Categorical::point_mass(2, 1).unwrap()])
            .over_trajectories(&m)
            .unwrap();
        let g = efe(&exact_posterior(&m).unwrap(), &pref).unwrap();
        assert_eq!(g.per_policy[0], PolicyEfe::new(0.0, 0.0, 0.0));
    }

    #[test]
    fn identical_hypotheses_have_no_novelty() {
        let lik = vec![vec![0.7, 0.3], vec![0.4, 0.6]];
        let m = GenerativeModel::new(
            &Categorical::from_probs(&[0.3, 0.7]).unwrap(),
            &Categorical::from_probs(&[0.5, 0.5]).unwrap(),
            &[lik.clone(), lik],
            &[
                vec![vec![0.8, 0.2], vec![0.3, 0.7]],
                vec![vec![0.1, 0.9], vec![0.5, 0.5]],
            ],
            1,
            PolicySet::exhaustive(2, 1, DEFAULT_POLICY_CAP).unwrap(),
        )
        .unwrap();
        let g = efe(&exact_posterior(&m).unwrap(), &uniform_pref(4)).unwrap();
        for p in g.per_policy {
            assert!(p.novelty.abs() < 1e-15);
        }
    }

    #[test]
    fn risk_undefined_names_policy_and_trajectory() {
        let post = random_posterior(shape(), 1);
        let mut pref = uniform_pref(4);
        pref.log_probs[2] = f64::NEG_INFINITY;
        match efe(&post, &pref) {
            Err(Error::RiskUndefined { policy, trajectory }) => {
                assert_eq!(policy, 0);
                assert_eq!(trajectory, vec![1, 0]);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn uniform_observation_preference_gives_constant_pragmatic_cost() {
        let post = random_posterior(shape(), 4);
        let obs = vec![-(2f64).ln(); 2];
        let g = efe_prime(&post, &obs).unwrap();
        for p in g.per_policy {
            assert!((p.pragmatic_cost - 2f64.ln()).abs() < 1e-14);
        }
    }

    #[test]
    fn salience_vanishes_when_y_ignores_x() {
        let base = random_posterior(shape(), 5);
        let row = base.q_y_given_x().slice(0).unwrap().to_vec();
        let qy = crate::prob::ConditionalTable::from_log_slices(
            vec![crate::prob::Axis::new("y", 2)],
            vec![crate::prob::Axis::new("x", 4)],
            vec![Some(row); 4],
        )
        .unwrap();
        let post = StructuredPosterior::from_factors(
            base.shape(),
            base.q_u().clone(),
            base.q_x_given_u().clone(),
            qy,
            base.q_theta_given_xy().clone(),
        )
        .unwrap();
        let g = efe_prime(&post, &[-(2f64).ln(); 2]).unwrap();
        for p in g.per_policy {
            assert!(p.salience.abs() < 1e-15);
        }
    }

    #[test]
    fn salience_is_mutual_information_of_the_policy_slice() {
        let post = random_posterior(shape(), 6);
        let g = efe_prime(&post, &[-(2f64).ln(); 2]).unwrap();
        let xy = post.xy_given_u().unwrap();
        for u in 0..2 {
            let slice = crate::prob::JointTable::from_log_weights(
                vec![
                    crate::prob::Axis::new("x", 4),
                    crate::prob::Axis::new("y", 2),
                ],
                xy.slice(u).unwrap().to_vec(),
            )
            .unwrap();
            let mi = mutual_information(&slice, &["x"], &["y"], &[]).unwrap();
            assert!((mi - g.per_policy[u].salience).abs() < 1e-10);
        }
    }

    #[test]
    fn templates_agree_on_random_posteriors() {
        for seed in 0..20 {
            let post = random_posterior(shape(), seed);
            let pref = uniform_pref(4);
            assert!(check_template(&post, &pref).unwrap().residual < 1e-10);
            let obs = ObsPreferencePrior {
                targets: vec![Categorical::from_probs(&[0.2, 0.8]).unwrap()],
            }
            .over_trajectories(&post.shape().space)
            .unwrap();
            assert!(check_template_prime(&post, &obs).unwrap().residual < 1e-10);
        }
    }

    #[test]
    fn template_all_delta_is_zero() {
        let m = GenerativeModel::new(
            &Categorical::point_mass(2, 1).unwrap(),
            &Categorical::uniform(1).unwrap(),
            &[vec![vec![1.0, 0.0], vec![0.0, 1.0]]],
            &[vec![vec![1.0, 0.0], vec![0.0, 1.0]]],
            1,
            PolicySet::exhaustive(1, 1, DEFAULT_POLICY_CAP).unwrap(),
        )
        .unwrap();
        let pref = PreferencePrior::per_step(vec![Categorical::point_mass(2, 1).unwrap()])
            .over_trajectories(&m)
            .unwrap();
        let c = check_template(&exact_posterior(&m).unwrap(), &pref).unwrap();
        assert_eq!(c.template, vec![0.0]);
        assert_eq!(c.direct, vec![0.0]);
    }
}
