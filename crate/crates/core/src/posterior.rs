//! Variational posteriors `q(y, x, θ, u)` in factored form.
//!
//! ```text
//! q(y, x, θ, u) = q(u) q(x | u) q(y | x) q(θ | x, y)
//! ```
//!
//! Sharing `q(y | x)` and `q(θ | x, y)` across policies makes `(y, θ)`
//! independent of `u` given `x` by construction.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;

use crate::error::{Error, Result};
use crate::model::{GenerativeModel, TrajectorySpace};
use crate::prob::{log_sum_exp, Axis, Categorical, ConditionalTable, JointTable};

/// Sizes a structured posterior is defined over.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PosteriorShape {
    pub space: TrajectorySpace,
    pub num_policies: usize,
    pub num_hypotheses: usize,
}

impl PosteriorShape {
    pub fn of_model(model: &GenerativeModel) -> Self {
        Self {
            space: model.space(),
            num_policies: model.num_policies(),
            num_hypotheses: model.num_hypotheses(),
        }
    }
}

/// Conditionals obtainable from a [`StructuredPosterior`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Conditional {
    /// `q(x | u)`
    XGivenU,
    /// `q(y | x)`
    YGivenX,
    /// `q(θ | x, y)`
    ThetaGivenXY,
    /// `q(θ | x) = Σ_y q(y | x) q(θ | x, y)`
    ThetaGivenX,
    /// `q(x, y | u)`
    XYGivenU,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StructuredPosterior {
    shape: PosteriorShape,
    q_u: Categorical,
    q_x_given_u: ConditionalTable,
    q_y_given_x: ConditionalTable,
    q_theta_given_xy: ConditionalTable,
}

fn axis_u(n: usize) -> Axis {
    Axis::new("u", n)
}
fn axis_x(n: usize) -> Axis {
    Axis::new("x", n)
}
fn axis_y(n: usize) -> Axis {
    Axis::new("y", n)
}
fn axis_theta(n: usize) -> Axis {
    Axis::new("theta", n)
}

fn expect_shape(t: &ConditionalTable, target: usize, given: usize, what: &str) -> Result<()> {
    if t.target_len() != target || t.given_len() != given {
        return Err(Error::Shape(format!(
            "{what}: expected {given} slices of {target}, got {} of {}",
            t.given_len(),
            t.target_len()
        )));
    }
    Ok(())
}

impl StructuredPosterior {
    /// Assemble from factors. `q_theta_given_xy` is given-major over `(x, y)`.
    pub fn from_factors(
        shape: PosteriorShape,
        q_u: Categorical,
        q_x_given_u: ConditionalTable,
        q_y_given_x: ConditionalTable,
        q_theta_given_xy: ConditionalTable,
    ) -> Result<Self> {
        let (nu, nx, ny, nt) = (
            shape.num_policies,
            shape.space.num_x(),
            shape.space.num_y(),
            shape.num_hypotheses,
        );
        if q_u.len() != nu {
            return Err(Error::Shape(format!(
                "q(u) over {} for {nu} policies",
                q_u.len()
            )));
        }
        expect_shape(&q_x_given_u, nx, nu, "q(x|u)")?;
        expect_shape(&q_y_given_x, ny, nx, "q(y|x)")?;
        expect_shape(&q_theta_given_xy, nt, nx * ny, "q(theta|x,y)")?;
        if (0..nu).any(|u| !q_x_given_u.is_defined(u)) {
            return Err(Error::UndefinedSlice(
                "q(x|u) must be defined for every policy".into(),
            ));
        }
        Ok(Self {
            shape,
            q_u,
            q_x_given_u,
            q_y_given_x,
            q_theta_given_xy,
        })
    }

    pub fn shape(&self) -> PosteriorShape {
        self.shape
    }

    pub fn q_u(&self) -> &Categorical {
        &self.q_u
    }

    pub fn q_x_given_u(&self) -> &ConditionalTable {
        &self.q_x_given_u
    }

    pub fn q_y_given_x(&self) -> &ConditionalTable {
        &self.q_y_given_x
    }

    pub fn q_theta_given_xy(&self) -> &ConditionalTable {
        &self.q_theta_given_xy
    }

    /// Same conditionals with a different policy posterior.
    pub fn with_policy_posterior(&self, q_u: Categorical) -> Result<Self> {
        if q_u.len() != self.shape.num_policies {
            return Err(Error::Shape("policy posterior size".into()));
        }
        let mut out = self.clone();
        out.q_u = q_u;
        Ok(out)
    }

    /// Same factors with a different `q(x | u)`.
    pub fn with_state_factor(&self, q_x_given_u: ConditionalTable) -> Result<Self> {
        Self::from_factors(
            self.shape,
            self.q_u.clone(),
            q_x_given_u,
            self.q_y_given_x.clone(),
            self.q_theta_given_xy.clone(),
        )
    }

    /// Log-mass of each state trajectory under the policy mixture `q(x) = Σ_u q(u) q(x|u)`.
    pub fn log_x_marginal(&self) -> Vec<f64> {
        let nx = self.shape.space.num_x();
        (0..nx)
            .map(|x| {
                let terms: Vec<f64> = (0..self.shape.num_policies)
                    .map(|u| self.q_u.log_prob(u) + self.q_x_given_u.slice(u).expect("defined")[x])
                    .collect();
                log_sum_exp(&terms)
            })
            .collect()
    }

    /// `q(θ | x)`; undefined where `q(y | x)` is undefined.
    pub fn theta_given_x(&self) -> Result<ConditionalTable> {
        let (nx, ny, nt) = (
            self.shape.space.num_x(),
            self.shape.space.num_y(),
            self.shape.num_hypotheses,
        );
        let mut slices = Vec::with_capacity(nx);
        for x in 0..nx {
            let Some(qy) = self.q_y_given_x.slice(x) else {
                slices.push(None);
                continue;
            };
            let mut acc = vec![Vec::with_capacity(ny); nt];
            for (y, &ly) in qy.iter().enumerate() {
                if ly == f64::NEG_INFINITY {
                    continue;
                }
                let qt = self.q_theta_given_xy.slice(x * ny + y).ok_or_else(|| {
                    Error::UndefinedSlice(format!("q(theta|x={x},y={y}) with q(y|x) > 0"))
                })?;
                for (t, &lt) in qt.iter().enumerate() {
                    acc[t].push(ly + lt);
                }
            }
            slices.push(Some(acc.iter().map(|v| log_sum_exp(v)).collect()));
        }
        ConditionalTable::from_log_slices(vec![axis_theta(nt)], vec![axis_x(nx)], slices)
    }

    /// `q(x, y | u)` with target axes `(x, y)`.
    pub fn xy_given_u(&self) -> Result<ConditionalTable> {
        let (nu, nx, ny) = (
            self.shape.num_policies,
            self.shape.space.num_x(),
            self.shape.space.num_y(),
        );
        let mut slices = Vec::with_capacity(nu);
        for u in 0..nu {
            let qx = self.q_x_given_u.slice(u).expect("defined");
            let mut s = vec![f64::NEG_INFINITY; nx * ny];
            for (x, &lx) in qx.iter().enumerate() {
                if lx == f64::NEG_INFINITY {
                    continue;
                }
                let qy = self.q_y_given_x.slice(x).ok_or_else(|| {
                    Error::UndefinedSlice(format!("q(y|x={x}) with q(x|u={u}) > 0"))
                })?;
                for (y, &ly) in qy.iter().enumerate() {
                    s[x * ny + y] = lx + ly;
                }
            }
            slices.push(Some(s));
        }
        ConditionalTable::from_log_slices(vec![axis_x(nx), axis_y(ny)], vec![axis_u(nu)], slices)
    }

    pub fn derived_conditional(&self, which: Conditional) -> Result<ConditionalTable> {
        match which {
            Conditional::XGivenU => Ok(self.q_x_given_u.clone()),
            Conditional::YGivenX => Ok(self.q_y_given_x.clone()),
            Conditional::ThetaGivenXY => Ok(self.q_theta_given_xy.clone()),
            Conditional::ThetaGivenX => self.theta_given_x(),
            Conditional::XYGivenU => self.xy_given_u(),
        }
    }

    /// The composed joint over axes `(u, x, y, theta)`.
    pub fn compose(&self) -> Result<JointTable> {
        let (nu, nx, ny, nt) = (
            self.shape.num_policies,
            self.shape.space.num_x(),
            self.shape.space.num_y(),
            self.shape.num_hypotheses,
        );
        let mut out = vec![f64::NEG_INFINITY; nu * nx * ny * nt];
        for u in 0..nu {
            let lu = self.q_u.log_prob(u);
            if lu == f64::NEG_INFINITY {
                continue;
            }
            let qx = self.q_x_given_u.slice(u).expect("defined");
            for (x, &lx) in qx.iter().enumerate() {
                if lx == f64::NEG_INFINITY {
                    continue;
                }
                let qy = self
                    .q_y_given_x
                    .slice(x)
                    .ok_or_else(|| Error::UndefinedSlice(format!("q(y|x={x})")))?;
                for (y, &ly) in qy.iter().enumerate() {
                    if ly == f64::NEG_INFINITY {
                        continue;
                    }
                    let qt = self
                        .q_theta_given_xy
                        .slice(x * ny + y)
                        .ok_or_else(|| Error::UndefinedSlice(format!("q(theta|x={x},y={y})")))?;
                    for (t, &lt) in qt.iter().enumerate() {
                        out[((u * nx + x) * ny + y) * nt + t] = lu + lx + ly + lt;
                    }
                }
            }
        }
        JointTable::from_log_weights(
            vec![axis_u(nu), axis_x(nx), axis_y(ny), axis_theta(nt)],
            out,
        )
    }
}

/// The exact predictive posterior: `q(y, x, θ | u) = p(y, x, θ | u)` and `q(u) = p(u)`.
///
/// Conditionals on state trajectories that no allowable policy can reach are undefined.
pub fn exact_posterior(model: &GenerativeModel) -> Result<StructuredPosterior> {
    let shape = PosteriorShape::of_model(model);
    let (nu, nx, ny, nt) = (
        shape.num_policies,
        shape.space.num_x(),
        shape.space.num_y(),
        shape.num_hypotheses,
    );
    let x_slices: Vec<Option<Vec<f64>>> = model
        .policies()
        .iter()
        .map(|p| Some(model.log_x_given_policy(p)))
        .collect();
    let mut reachable = vec![false; nx];
    for s in &x_slices {
        for (x, &l) in s.as_ref().expect("built above").iter().enumerate() {
            if l > f64::NEG_INFINITY {
                reachable[x] = true;
            }
        }
    }
    let lyt = model.log_y_theta_given_x();
    let mut y_slices = Vec::with_capacity(nx);
    let mut t_slices = Vec::with_capacity(nx * ny);
    for x in 0..nx {
        if !reachable[x] {
            y_slices.push(None);
            t_slices.extend(std::iter::repeat_n(None, ny));
            continue;
        }
        let mut ly = Vec::with_capacity(ny);
        for y in 0..ny {
            let row = &lyt[(x * ny + y) * nt..(x * ny + y + 1) * nt];
            let m = log_sum_exp(row);
            ly.push(m);
            t_slices.push(if m == f64::NEG_INFINITY {
                None
            } else {
                Some(row.to_vec())
            });
        }
        y_slices.push(Some(ly));
    }
    StructuredPosterior::from_factors(
        shape,
        model.policy_prior().clone(),
        ConditionalTable::from_log_slices(vec![axis_x(nx)], vec![axis_u(nu)], x_slices)?,
        ConditionalTable::from_log_slices(vec![axis_y(ny)], vec![axis_x(nx)], y_slices)?,
        ConditionalTable::from_log_slices(
            vec![axis_theta(nt)],
            vec![axis_x(nx), axis_y(ny)],
            t_slices,
        )?,
    )
}

fn dirichlet_one(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    // normalized Exp(1) draws are Dirichlet(1, .., 1)
    (0..n)
        .map(|_| {
            let e: f64 = rng.sample(Exp1);
            e.max(f64::MIN_POSITIVE).ln()
        })
        .collect()
}

/// A posterior whose every slice is an independent symmetric Dirichlet(1) draw.
pub fn random_posterior(shape: PosteriorShape, seed: u64) -> StructuredPosterior {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (nu, nx, ny, nt) = (
        shape.num_policies,
        shape.space.num_x(),
        shape.space.num_y(),
        shape.num_hypotheses,
    );
    let q_u = Categorical::from_log_weights(&dirichlet_one(&mut rng, nu)).expect("finite");
    let mut slices = |given: usize, target: usize| -> Vec<Option<Vec<f64>>> {
        (0..given)
            .map(|_| Some(dirichlet_one(&mut rng, target)))
            .collect()
    };
    let xs = slices(nu, nx);
    let ys = slices(nx, ny);
    let ts = slices(nx * ny, nt);
    StructuredPosterior::from_factors(
        shape,
        q_u,
        ConditionalTable::from_log_slices(vec![axis_x(nx)], vec![axis_u(nu)], xs).expect("shape"),
        ConditionalTable::from_log_slices(vec![axis_y(ny)], vec![axis_x(nx)], ys).expect("shape"),
        ConditionalTable::from_log_slices(vec![axis_theta(nt)], vec![axis_x(nx), axis_y(ny)], ts)
            .expect("shape"),
    )
    .expect("shapes agree by construction")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{PolicySet, DEFAULT_POLICY_CAP};

    fn small_shape() -> PosteriorShape {
        PosteriorShape {
            space: TrajectorySpace {
                num_states: 2,
                num_obs: 2,
                horizon: 1,
            },
            num_policies: 3,
            num_hypotheses: 2,
        }
    }

    #[test]
    fn random_posterior_is_deterministic_and_normalized() {
        let a = random_posterior(small_shape(), 7);
        let b = random_posterior(small_shape(), 7);
        assert_eq!(a, b);
        let c = random_posterior(small_shape(), 8);
        assert_ne!(a, c);
        assert!(a.compose().unwrap().log_mass().abs() < 1e-12);
    }

    #[test]
    fn random_policy_weights_average_to_uniform() {
        let n = 4000;
        let mut mean = [0.0; 3];
        for s in 0..n {
            let p = random_posterior(small_shape(), s);
            for (u, m) in mean.iter_mut().enumerate() {
                *m += p.q_u().prob(u) / n as f64;
            }
        }
        for m in mean {
            assert!((m - 1.0 / 3.0).abs() < 0.02, "{mean:?}");
        }
    }

    #[test]
    fn theta_given_x_when_theta_ignores_y() {
        let p = random_posterior(small_shape(), 3);
        let ny = 2;
        // force q(θ|x,y) to be the same for both y
        let mut slices = Vec::new();
        for x in 0..4 {
            let s = p.q_theta_given_xy().slice(x * ny).unwrap().to_vec();
            slices.push(Some(s.clone()));
            slices.push(Some(s));
        }
        let t = ConditionalTable::from_log_slices(
            vec![Axis::new("theta", 2)],
            vec![Axis::new("x", 4), Axis::new("y", 2)],
            slices,
        )
        .unwrap();
        let q = StructuredPosterior::from_factors(
            p.shape(),
            p.q_u().clone(),
            p.q_x_given_u().clone(),
            p.q_y_given_x().clone(),
            t.clone(),
        )
        .unwrap();
        let tx = q.theta_given_x().unwrap();
        for x in 0..4 {
            for (a, b) in tx.slice(x).unwrap().iter().zip(t.slice(x * ny).unwrap()) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn exact_posterior_single_policy_has_point_mass_q_u() {
        let m = GenerativeModel::new(
            &Categorical::uniform(2).unwrap(),
            &Categorical::uniform(2).unwrap(),
            &[
                vec![vec![0.9, 0.1], vec![0.3, 0.7]],
                vec![vec![0.2, 0.8], vec![0.5, 0.5]],
            ],
            &[vec![vec![0.6, 0.4], vec![0.1, 0.9]]],
            1,
            PolicySet::exhaustive(1, 1, DEFAULT_POLICY_CAP).unwrap(),
        )
        .unwrap();
        let q = exact_posterior(&m).unwrap();
        assert_eq!(q.q_u().probs(), vec![1.0]);
        // recomposed joint equals p(u, y, x, θ) after moving axes
        let joint = q.compose().unwrap();
        let p = m
            .predictive_joint_all()
            .unwrap()
            .reshape(vec![
                Axis::new("u", 1),
                Axis::new("y", 2),
                Axis::new("x", 4),
                Axis::new("theta", 2),
            ])
            .unwrap()
            .marginal(&["u", "x", "y", "theta"])
            .unwrap();
        for (a, b) in joint.log_probs().iter().zip(p.log_probs()) {
            assert!((a.exp() - b.exp()).abs() < 1e-12);
        }
    }

    #[test]
    fn unreachable_trajectories_are_undefined() {
        let m = GenerativeModel::new(
            &Categorical::point_mass(2, 0).unwrap(),
            &Categorical::uniform(1).unwrap(),
            &[vec![vec![1.0, 0.0], vec![0.0, 1.0]]],
            &[vec![vec![0.0, 1.0], vec![0.0, 1.0]]],
            1,
            PolicySet::exhaustive(1, 1, DEFAULT_POLICY_CAP).unwrap(),
        )
        .unwrap();
        let q = exact_posterior(&m).unwrap();
        let s = m.space();
        assert!(q.q_y_given_x().is_defined(s.encode_x(&[0, 1])));
        assert!(!q.q_y_given_x().is_defined(s.encode_x(&[0, 0])));
        assert!(!q.q_y_given_x().is_defined(s.encode_x(&[1, 1])));
        assert!(q.compose().unwrap().log_mass().abs() < 1e-12);
    }
}
