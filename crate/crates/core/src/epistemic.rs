//! Epistemic priors: q-dependent prior factors over policies, state
//! trajectories and `(y, x)` pairs.
//!
//! ```text
//! log p̃(u)    =  H[q(x|u)]
//! log p̃(x)    = -H[q(y|x)]
//! log p̃(y, x) =  KL[q(θ|y,x) || q(θ|x)]
//! ```
//!
//! The normalized variant applies a softmax to each table and records the
//! log-partition constant it subtracted.

use serde::Serialize;

use crate::efe::per_state_epistemics;
use crate::error::Result;
use crate::posterior::StructuredPosterior;
use crate::prob::{entropy_log, kl_divergence_log, log_sum_exp, softmax, Categorical};

/// Log-partition constants subtracted from each table when normalizing.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct LogPartition {
    pub u: f64,
    pub x: f64,
    pub yx: f64,
}

impl LogPartition {
    pub fn total(&self) -> f64 {
        self.u + self.x + self.yx
    }
}

/// The three prior tables in the log domain.
///
/// `log_x` and `log_yx` are `None` where the posterior conditional they are
/// built from is undefined. `log_yx` is indexed `x * num_y + y`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpistemicPriors {
    pub log_u: Vec<f64>,
    pub log_x: Vec<Option<f64>>,
    pub log_yx: Vec<Option<f64>>,
    pub normalized: bool,
    pub log_partition: LogPartition,
}

impl EpistemicPriors {
    pub fn tilde_u(&self) -> Vec<f64> {
        self.log_u.iter().map(|l| l.exp()).collect()
    }

    pub fn tilde_x(&self) -> Vec<Option<f64>> {
        self.log_x.iter().map(|l| l.map(f64::exp)).collect()
    }

    pub fn tilde_yx(&self) -> Vec<Option<f64>> {
        self.log_yx.iter().map(|l| l.map(f64::exp)).collect()
    }

    /// Multiply `p̃(u)` by `factor` without touching the recorded constants.
    ///
    /// Only useful for exercising the verification checks.
    pub fn corrupt_policy_prior(&mut self, factor: f64) {
        let shift = factor.ln();
        for l in &mut self.log_u {
            *l += shift;
        }
    }
}

fn normalize(entries: &mut [Option<f64>]) -> f64 {
    let defined: Vec<f64> = entries.iter().flatten().copied().collect();
    if defined.is_empty() {
        return 0.0;
    }
    let z = log_sum_exp(&defined);
    for l in entries.iter_mut().flatten() {
        *l -= z;
    }
    z
}

/// Build the epistemic priors from `post`.
///
/// Normalization of `p̃(x)` and `p̃(y, x)` runs over defined entries only.
pub fn epistemic_priors(post: &StructuredPosterior, normalized: bool) -> Result<EpistemicPriors> {
    let shape = post.shape();
    let (nx, ny) = (shape.space.num_x(), shape.space.num_y());
    let mut log_u: Vec<f64> = (0..shape.num_policies)
        .map(|u| entropy_log(post.q_x_given_u().slice(u).expect("defined")))
        .collect();
    let mut log_x: Vec<Option<f64>> = per_state_epistemics(post)?
        .into_iter()
        .map(|e| e.map(|(h, _)| -h))
        .collect();
    let theta_x = post.theta_given_x()?;
    let mut log_yx = vec![None; nx * ny];
    for x in 0..nx {
        let (Some(qy), Some(tx)) = (post.q_y_given_x().slice(x), theta_x.slice(x)) else {
            continue;
        };
        for y in 0..ny {
            if qy[y] == f64::NEG_INFINITY {
                continue;
            }
            if let Some(txy) = post.q_theta_given_xy().slice(x * ny + y) {
                log_yx[x * ny + y] = Some(kl_divergence_log(txy, tx)?);
            }
        }
    }
    let mut log_partition = LogPartition::default();
    if normalized {
        log_partition.u = log_sum_exp(&log_u);
        for l in &mut log_u {
            *l -= log_partition.u;
        }
        log_partition.x = normalize(&mut log_x);
        log_partition.yx = normalize(&mut log_yx);
    }
    Ok(EpistemicPriors {
        log_u,
        log_x,
        log_yx,
        normalized,
        log_partition,
    })
}

/// `softmax(H[q(x|u)])` over policies.
pub fn normalized_policy_weight(post: &StructuredPosterior) -> Categorical {
    let h: Vec<f64> = (0..post.shape().num_policies)
        .map(|u| entropy_log(post.q_x_given_u().slice(u).expect("defined")))
        .collect();
    softmax(&h).expect("entropies are finite")
}
