//! Brute-force reference values.
//!
//! Everything here is recomputed from raw model probabilities and posterior
//! tables by nested loops over outcome tuples, in the linear domain with
//! compensated summation. Nothing is shared with the planning modules except
//! the table types themselves.

use serde::Serialize;

use crate::efe::PolicyEfe;
use crate::error::{Error, Result};
use crate::model::{GenerativeModel, PreferenceMode, PreferencePrior};
use crate::posterior::StructuredPosterior;
use crate::prob::Categorical;

/// Upper bound on enumerated outcome tuples.
pub const ORACLE_CAP: u128 = 10_000_000;

/// One main-versus-oracle comparison.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleReport {
    pub quantity: String,
    pub main_value: f64,
    pub oracle_value: f64,
    pub abs_diff: f64,
    pub tolerance: f64,
    pub pass: bool,
}

impl OracleReport {
    pub fn compare(
        quantity: impl Into<String>,
        main_value: f64,
        oracle_value: f64,
        tolerance: f64,
    ) -> Self {
        let abs_diff = (main_value - oracle_value).abs();
        Self {
            quantity: quantity.into(),
            main_value,
            oracle_value,
            abs_diff,
            tolerance,
            pass: abs_diff <= tolerance,
        }
    }
}

/// Neumaier compensated sum.
#[derive(Debug, Clone, Copy, Default)]
pub struct Neumaier {
    sum: f64,
    c: f64,
}

impl Neumaier {
    pub fn add(&mut self, v: f64) {
        let t = self.sum + v;
        if self.sum.abs() >= v.abs() {
            self.c += (self.sum - t) + v;
        } else {
            self.c += (v - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.c
    }
}

fn sum(vals: impl IntoIterator<Item = f64>) -> f64 {
    let mut s = Neumaier::default();
    for v in vals {
        s.add(v);
    }
    s.value()
}

/// `p ln(p / q)` with `0 ln 0 = 0`.
fn plogpq(p: f64, q: f64) -> f64 {
    if p == 0.0 {
        0.0
    } else {
        p * (p / q).ln()
    }
}

/// Digits of `idx` in base `base`, most significant first.
fn digits(mut idx: usize, base: usize, len: usize) -> Vec<usize> {
    let mut out = vec![0; len];
    for slot in out.iter_mut().rev() {
        *slot = idx % base;
        idx /= base;
    }
    out
}

fn check_cap(factors: &[usize]) -> Result<()> {
    let tuples: u128 = factors.iter().map(|&f| f as u128).product();
    if tuples > ORACLE_CAP {
        return Err(Error::OracleTooLarge {
            tuples,
            cap: ORACLE_CAP,
        });
    }
    Ok(())
}

struct Dims {
    ns: usize,
    no: usize,
    nt: usize,
    h: usize,
    nx: usize,
    ny: usize,
}

fn dims(model: &GenerativeModel) -> Dims {
    let (ns, no, h) = (model.num_states(), model.num_obs(), model.horizon());
    Dims {
        ns,
        no,
        nt: model.num_hypotheses(),
        h,
        nx: ns.pow(h as u32 + 1),
        ny: no.pow(h as u32),
    }
}

/// `p(x, y, θ | u)` for one policy, layout `[x][y][θ]`.
fn model_joint(model: &GenerativeModel, u: usize) -> Vec<f64> {
    let d = dims(model);
    let actions = &model.policies()[u].actions;
    let mut out = vec![0.0; d.nx * d.ny * d.nt];
    for x in 0..d.nx {
        let xs = digits(x, d.ns, d.h + 1);
        let mut px = 1.0;
        for k in 0..d.h {
            px *= model.transition_prob(actions[k], xs[k], xs[k + 1]);
        }
        if px == 0.0 {
            continue;
        }
        for y in 0..d.ny {
            let ys = digits(y, d.no, d.h);
            for t in 0..d.nt {
                let mut p = px * model.initial_joint_prob(xs[0], t);
                for k in 0..d.h {
                    p *= model.likelihood_prob(t, xs[k + 1], ys[k]);
                }
                out[(x * d.ny + y) * d.nt + t] = p;
            }
        }
    }
    out
}

/// Linear `p̂(x)` over state trajectories.
fn preference_table(model: &GenerativeModel, pref: &PreferencePrior) -> Result<Vec<f64>> {
    let d = dims(model);
    let uniform = 1.0 / d.ns as f64;
    let target = |k: usize, s: usize| -> Result<f64> {
        match pref.mode {
            PreferenceMode::PerStep => pref
                .targets
                .get(k - 1)
                .map(|c| c.prob(s))
                .ok_or_else(|| Error::Shape("missing step target".into())),
            PreferenceMode::FinalStep if k == d.h => Ok(pref.targets[0].prob(s)),
            PreferenceMode::FinalStep => Ok(uniform),
        }
    };
    let mut init = vec![0.0; d.ns];
    for (s, slot) in init.iter_mut().enumerate() {
        *slot = sum((0..d.nt).map(|t| model.initial_joint_prob(s, t)));
    }
    (0..d.nx)
        .map(|x| {
            let xs = digits(x, d.ns, d.h + 1);
            let mut p = init[xs[0]];
            for k in 1..=d.h {
                p *= target(k, xs[k])?;
            }
            Ok(p)
        })
        .collect()
}

/// Posterior factors as plain linear tables.
struct Tables {
    q_u: Vec<f64>,
    /// `[u][x]`
    q_x: Vec<Vec<f64>>,
    /// `[x][y]`, `None` when undefined
    q_y: Vec<Option<Vec<f64>>>,
    /// `[x * ny + y][θ]`
    q_t: Vec<Option<Vec<f64>>>,
}

fn linear(slice: Option<&[f64]>) -> Option<Vec<f64>> {
    slice.map(|s| s.iter().map(|l| l.exp()).collect())
}

fn posterior_tables(post: &StructuredPosterior) -> Tables {
    let s = post.shape();
    let (nx, ny) = (s.space.num_x(), s.space.num_y());
    Tables {
        q_u: post.q_u().probs(),
        q_x: (0..s.num_policies)
            .map(|u| linear(post.q_x_given_u().slice(u)).expect("defined"))
            .collect(),
        q_y: (0..nx)
            .map(|x| linear(post.q_y_given_x().slice(x)))
            .collect(),
        q_t: (0..nx * ny)
            .map(|g| linear(post.q_theta_given_xy().slice(g)))
            .collect(),
    }
}

/// Exact predictive tables built by enumeration.
fn exact_tables(model: &GenerativeModel) -> Tables {
    let d = dims(model);
    let nu = model.num_policies();
    let joints: Vec<Vec<f64>> = (0..nu).map(|u| model_joint(model, u)).collect();
    let q_x: Vec<Vec<f64>> = joints
        .iter()
        .map(|j| {
            (0..d.nx)
                .map(|x| sum(j[x * d.ny * d.nt..(x + 1) * d.ny * d.nt].iter().copied()))
                .collect()
        })
        .collect();
    let mut q_y = vec![None; d.nx];
    let mut q_t = vec![None; d.nx * d.ny];
    for x in 0..d.nx {
        // any policy reaching x gives the same conditional over (y, θ)
        let Some(u) = (0..nu).find(|&u| q_x[u][x] > 0.0) else {
            continue;
        };
        let j = &joints[u];
        let mut ys = vec![0.0; d.ny];
        for (y, slot) in ys.iter_mut().enumerate() {
            let row = &j[(x * d.ny + y) * d.nt..(x * d.ny + y + 1) * d.nt];
            let m = sum(row.iter().copied());
            *slot = m / q_x[u][x];
            if m > 0.0 {
                q_t[x * d.ny + y] = Some(row.iter().map(|v| v / m).collect());
            }
        }
        q_y[x] = Some(ys);
    }
    Tables {
        q_u: model.policy_prior().probs(),
        q_x,
        q_y,
        q_t,
    }
}

fn theta_given_x(t: &Tables, ny: usize, nt: usize) -> Vec<Option<Vec<f64>>> {
    t.q_y
        .iter()
        .enumerate()
        .map(|(x, qy)| {
            let qy = qy.as_ref()?;
            Some(
                (0..nt)
                    .map(|th| {
                        sum((0..ny).filter(|&y| qy[y] > 0.0).map(|y| {
                            qy[y]
                                * t.q_t[x * ny + y]
                                    .as_ref()
                                    .expect("defined where q(y|x) > 0")[th]
                        }))
                    })
                    .collect(),
            )
        })
        .collect()
}

fn efe_terms(t: &Tables, pref: &[f64], ny: usize, nt: usize) -> Result<Vec<PolicyEfe>> {
    let tx = theta_given_x(t, ny, nt);
    let mut out = Vec::with_capacity(t.q_x.len());
    for (u, qx) in t.q_x.iter().enumerate() {
        let (mut risk, mut amb, mut nov) = (
            Neumaier::default(),
            Neumaier::default(),
            Neumaier::default(),
        );
        for (x, &px) in qx.iter().enumerate() {
            if px == 0.0 {
                continue;
            }
            if pref[x] == 0.0 {
                return Err(Error::RiskUndefined {
                    policy: u,
                    trajectory: vec![x],
                });
            }
            risk.add(plogpq(px, pref[x]));
            let qy = t.q_y[x]
                .as_ref()
                .ok_or_else(|| Error::UndefinedSlice(format!("x = {x}")))?;
            let thx = tx[x].as_ref().expect("defined with q(y|x)");
            for (y, &py) in qy.iter().enumerate() {
                if py == 0.0 {
                    continue;
                }
                amb.add(-px * py * py.ln());
                let qt = t.q_t[x * ny + y].as_ref().expect("defined");
                for th in 0..nt {
                    nov.add(px * py * plogpq(qt[th], thx[th]));
                }
            }
        }
        out.push(PolicyEfe::new(risk.value(), amb.value(), nov.value()));
    }
    Ok(out)
}

/// Expected free energy of every policy under the exact predictive posterior.
pub fn oracle_efe(model: &GenerativeModel, pref: &PreferencePrior) -> Result<Vec<PolicyEfe>> {
    let d = dims(model);
    check_cap(&[model.num_policies(), d.nx, d.ny, d.nt])?;
    efe_terms(
        &exact_tables(model),
        &preference_table(model, pref)?,
        d.ny,
        d.nt,
    )
}

/// Expected free energy of every policy under an arbitrary structured posterior.
pub fn oracle_efe_posterior(
    post: &StructuredPosterior,
    model: &GenerativeModel,
    pref: &PreferencePrior,
) -> Result<Vec<PolicyEfe>> {
    let d = dims(model);
    check_cap(&[post.shape().num_policies, d.nx, d.ny, d.nt])?;
    efe_terms(
        &posterior_tables(post),
        &preference_table(model, pref)?,
        d.ny,
        d.nt,
    )
}

/// `G(u)` as one sum over `(x, y, θ)` of
/// `ln q(x|u)/p̂(x) - ln q(y|x) - ln q(θ|x,y)/q(θ|x)`, exact posterior.
pub fn oracle_efe_single_sum(model: &GenerativeModel, pref: &PreferencePrior) -> Result<Vec<f64>> {
    let d = dims(model);
    check_cap(&[model.num_policies(), d.nx, d.ny, d.nt])?;
    let t = exact_tables(model);
    let p_hat = preference_table(model, pref)?;
    let tx = theta_given_x(&t, d.ny, d.nt);
    Ok(t.q_x
        .iter()
        .map(|qx| {
            let mut s = Neumaier::default();
            for x in 0..d.nx {
                if qx[x] == 0.0 {
                    continue;
                }
                let qy = t.q_y[x].as_ref().expect("reachable");
                for y in 0..d.ny {
                    if qy[y] == 0.0 {
                        continue;
                    }
                    let qt = t.q_t[x * d.ny + y].as_ref().expect("defined");
                    for th in 0..d.nt {
                        let w = qx[x] * qy[y] * qt[th];
                        if w == 0.0 {
                            continue;
                        }
                        let thx = tx[x].as_ref().expect("defined")[th];
                        s.add(w * ((qx[x] / p_hat[x]).ln() - qy[y].ln() - (qt[th] / thx).ln()));
                    }
                }
            }
            s.value()
        })
        .collect())
}

/// Ambiguity through `H[q(x, y | u)] - H[q(x | u)]`, exact posterior.
pub fn oracle_ambiguity_via_joint(model: &GenerativeModel) -> Result<Vec<f64>> {
    let d = dims(model);
    check_cap(&[model.num_policies(), d.nx, d.ny, d.nt])?;
    Ok((0..model.num_policies())
        .map(|u| {
            let j = model_joint(model, u);
            let mut hxy = Neumaier::default();
            let mut hx = Neumaier::default();
            for x in 0..d.nx {
                let mut px = Neumaier::default();
                for y in 0..d.ny {
                    let pxy = sum(j[(x * d.ny + y) * d.nt..(x * d.ny + y + 1) * d.nt]
                        .iter()
                        .copied());
                    px.add(pxy);
                    if pxy > 0.0 {
                        hxy.add(-pxy * pxy.ln());
                    }
                }
                let px = px.value();
                if px > 0.0 {
                    hx.add(-px * px.ln());
                }
            }
            hxy.value() - hx.value()
        })
        .collect())
}

/// Linear epistemic prior tables `(p̃(u), p̃(x), p̃(y,x))`.
fn prior_tables(
    t: &Tables,
    ny: usize,
    nt: usize,
    normalized: bool,
) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let tx = theta_given_x(t, ny, nt);
    let mut pu: Vec<f64> = t
        .q_x
        .iter()
        .map(|qx| sum(qx.iter().map(|&p| if p > 0.0 { -p * p.ln() } else { 0.0 })).exp())
        .collect();
    let mut px: Vec<f64> = t
        .q_y
        .iter()
        .map(|qy| match qy {
            Some(qy) => (-sum(qy.iter().map(|&p| if p > 0.0 { -p * p.ln() } else { 0.0 }))).exp(),
            None => f64::NAN,
        })
        .collect();
    let nx = t.q_y.len();
    let mut pyx = vec![f64::NAN; nx * ny];
    for x in 0..nx {
        let (Some(qy), Some(thx)) = (&t.q_y[x], &tx[x]) else {
            continue;
        };
        for y in 0..ny {
            if qy[y] == 0.0 {
                continue;
            }
            if let Some(qt) = &t.q_t[x * ny + y] {
                pyx[x * ny + y] = sum((0..nt).map(|th| plogpq(qt[th], thx[th]))).exp();
            }
        }
    }
    if normalized {
        for table in [&mut pu, &mut px, &mut pyx] {
            let z = sum(table.iter().copied().filter(|v| !v.is_nan()));
            for v in table.iter_mut() {
                *v /= z;
            }
        }
    }
    (pu, px, pyx)
}

/// `F[q]` as one flat sum over `(u, x, y, θ)`.
pub fn oracle_vfe(
    post: &StructuredPosterior,
    model: &GenerativeModel,
    pref: &PreferencePrior,
    normalized: bool,
) -> Result<f64> {
    let d = dims(model);
    check_cap(&[model.num_policies(), d.nx, d.ny, d.nt])?;
    let t = posterior_tables(post);
    flat_vfe(&t, model, &preference_table(model, pref)?, normalized, None)
}

fn flat_vfe(
    t: &Tables,
    model: &GenerativeModel,
    p_hat: &[f64],
    normalized: bool,
    only_policy: Option<usize>,
) -> Result<f64> {
    let d = dims(model);
    let (pu_t, px_t, pyx_t) = prior_tables(t, d.ny, d.nt, normalized);
    let p_u = model.policy_prior().probs();
    let mut f = Neumaier::default();
    for u in 0..t.q_u.len() {
        let qu = match only_policy {
            Some(v) if v != u => continue,
            Some(_) => 1.0,
            None => t.q_u[u],
        };
        if qu == 0.0 {
            continue;
        }
        let joint = model_joint(model, u);
        for x in 0..d.nx {
            let qx = t.q_x[u][x];
            if qx == 0.0 {
                continue;
            }
            let qy = t.q_y[x]
                .as_ref()
                .ok_or_else(|| Error::VfeUndefined(format!("u = {u}, x = {x}")))?;
            for y in 0..d.ny {
                if qy[y] == 0.0 {
                    continue;
                }
                let qt = t.q_t[x * d.ny + y]
                    .as_ref()
                    .ok_or_else(|| Error::VfeUndefined(format!("u = {u}, x = {x}, y = {y}")))?;
                for th in 0..d.nt {
                    let q_full = qu * qx * qy[y] * qt[th];
                    if q_full == 0.0 {
                        continue;
                    }
                    let prior_u = if only_policy.is_some() { 1.0 } else { p_u[u] };
                    let denom = prior_u
                        * joint[(x * d.ny + y) * d.nt + th]
                        * p_hat[x]
                        * pu_t[u]
                        * px_t[x]
                        * pyx_t[x * d.ny + y];
                    if denom.is_nan() || denom == 0.0 {
                        return Err(Error::VfeUndefined(format!(
                            "u = {u}, x = {x}, y = {y}, theta = {th}"
                        )));
                    }
                    f.add(q_full * (q_full / denom).ln());
                }
            }
        }
    }
    Ok(f.value())
}

/// `C(u) = Σ q(x,y,θ|u) ln q(x,y,θ|u) / p(x,y,θ|u)` per policy.
pub fn oracle_complexity(post: &StructuredPosterior, model: &GenerativeModel) -> Result<Vec<f64>> {
    let d = dims(model);
    check_cap(&[model.num_policies(), d.nx, d.ny, d.nt])?;
    let t = posterior_tables(post);
    (0..model.num_policies())
        .map(|u| {
            let joint = model_joint(model, u);
            let mut c = Neumaier::default();
            for x in 0..d.nx {
                let qx = t.q_x[u][x];
                if qx == 0.0 {
                    continue;
                }
                let qy = t.q_y[x]
                    .as_ref()
                    .ok_or_else(|| Error::UndefinedSlice(format!("x = {x}")))?;
                for y in 0..d.ny {
                    if qy[y] == 0.0 {
                        continue;
                    }
                    let qt = t.q_t[x * d.ny + y].as_ref().expect("defined");
                    for th in 0..d.nt {
                        let q = qx * qy[y] * qt[th];
                        let p = joint[(x * d.ny + y) * d.nt + th];
                        if q > 0.0 && p == 0.0 {
                            return Err(Error::ComplexityUndefined {
                                policy: u,
                                detail: format!("x = {x}, y = {y}, theta = {th}"),
                            });
                        }
                        c.add(plogpq(q, p));
                    }
                }
            }
            Ok(c.value())
        })
        .collect()
}

/// Posterior joint over `(x1, θ)` after taking `action` and observing
/// `observation`, layout `[x1][θ]`.
pub fn oracle_belief_update(
    model: &GenerativeModel,
    action: usize,
    observation: usize,
) -> Result<Vec<f64>> {
    let d = dims(model);
    let mut out = vec![0.0; d.ns * d.nt];
    for x1 in 0..d.ns {
        for t in 0..d.nt {
            out[x1 * d.nt + t] = sum((0..d.ns).map(|x0| {
                model.initial_joint_prob(x0, t)
                    * model.transition_prob(action, x0, x1)
                    * model.likelihood_prob(t, x1, observation)
            }));
        }
    }
    let z = sum(out.iter().copied());
    if z == 0.0 {
        return Err(Error::ImpossibleObservation {
            action,
            observation,
        });
    }
    Ok(out.iter().map(|v| v / z).collect())
}

/// The grid point minimizing `F` over `q(u)` on a simplex grid of the given
/// resolution, with every other factor at the exact predictive posterior.
pub fn oracle_policy_posterior(
    model: &GenerativeModel,
    pref: &PreferencePrior,
    normalized: bool,
    resolution: f64,
) -> Result<Categorical> {
    let nu = model.num_policies();
    if !(1..=3).contains(&nu) {
        return Err(Error::OracleTooLarge {
            tuples: nu as u128,
            cap: 3,
        });
    }
    let d = dims(model);
    check_cap(&[nu, d.nx, d.ny, d.nt])?;
    let t = exact_tables(model);
    let p_hat = preference_table(model, pref)?;
    // F is linear in q(u) given the per-policy brackets
    let brackets: Vec<f64> = (0..nu)
        .map(|u| flat_vfe(&t, model, &p_hat, normalized, Some(u)))
        .collect::<Result<_>>()?;
    let p_u = model.policy_prior().probs();
    let steps = (1.0 / resolution).round() as usize;
    let f_at = |q: &[f64]| -> f64 {
        sum((0..nu).map(|u| {
            if q[u] == 0.0 {
                0.0
            } else {
                q[u] * ((q[u] / p_u[u]).ln() + brackets[u])
            }
        }))
    };
    let mut best = (f64::INFINITY, vec![0.0; nu]);
    let mut consider = |q: Vec<f64>| {
        let f = f_at(&q);
        if f < best.0 {
            best = (f, q);
        }
    };
    match nu {
        1 => consider(vec![1.0]),
        2 => {
            for i in 0..=steps {
                let a = i as f64 / steps as f64;
                consider(vec![a, 1.0 - a]);
            }
        }
        _ => {
            for i in 0..=steps {
                for j in 0..=steps - i {
                    let a = i as f64 / steps as f64;
                    let b = j as f64 / steps as f64;
                    consider(vec![a, b, (1.0 - a - b).max(0.0)]);
                }
            }
        }
    }
    Categorical::from_probs(&best.1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{PolicySet, DEFAULT_POLICY_CAP};

    #[test]
    fn neumaier_recovers_cancelled_mass() {
        let vals = [1.0, 1e100, 1.0, -1e100];
        assert_eq!(sum(vals), 2.0);
        assert_eq!(vals.iter().sum::<f64>(), 0.0);
    }

    #[test]
    fn digits_are_most_significant_first() {
        assert_eq!(digits(5, 2, 3), vec![1, 0, 1]);
        assert_eq!(digits(7, 3, 2), vec![2, 1]);
    }

    #[test]
    fn deterministic_chain_has_zero_efe() {
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
        let pref = PreferencePrior::per_step(vec![Categorical::point_mass(2, 1).unwrap()]);
        let g = oracle_efe(&m, &pref).unwrap();
        assert_eq!(g, vec![PolicyEfe::new(0.0, 0.0, 0.0)]);
    }

    #[test]
    fn cap_is_enforced() {
        assert!(matches!(
            check_cap(&[10_000, 10_000]),
            Err(Error::OracleTooLarge {
                tuples: 100_000_000,
                ..
            })
        ));
        assert!(check_cap(&[1000, 1000]).is_ok());
    }

    #[test]
    fn report_pass_flag_follows_tolerance() {
        assert!(OracleReport::compare("a", 1.0, 1.0 + 1e-11, 1e-10).pass);
        assert!(!OracleReport::compare("a", 1.0, 1.0 + 1e-9, 1e-10).pass);
    }
}
