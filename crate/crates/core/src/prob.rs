//! Finite probability tables kept in the log domain.
//!
//! Every distribution in the crate is one of three shapes:
//!
//! * [`Categorical`]: a single distribution over `0..n`.
//! * [`JointTable`]: a dense table over named axes.
//! * [`ConditionalTable`]: one normalized slice over the target axes for every
//!   assignment of the given axes. Slices that were conditioned on a
//!   zero-probability event are kept as explicit *undefined* slices.
//!
//! All logarithms are natural (nats). `0 · log 0` is taken to be `0`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Slack for algebraic identities evaluated in double precision.
pub const ALGEBRA_TOL: f64 = 1e-12;
/// Tolerance for free-energy decomposition residuals.
pub const THEOREM_TOL: f64 = 1e-9;
/// Tolerance for row sums of tables read from disk.
pub const LOAD_TOL: f64 = 1e-9;

/// Stable `log Σ exp(x)`. Returns `-inf` for an empty slice or all `-inf` inputs.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    if max == f64::INFINITY {
        return f64::INFINITY;
    }
    let sum: f64 = xs.iter().map(|&x| (x - max).exp()).sum();
    max + sum.ln()
}

/// Shannon entropy of a log-probability vector.
pub fn entropy_log(log_p: &[f64]) -> f64 {
    -log_p
        .iter()
        .filter(|l| l.is_finite())
        .map(|&l| l.exp() * l)
        .sum::<f64>()
}

/// `D[p, q] = Σ p log(p / q)` for two log-probability vectors of equal length.
pub fn kl_divergence_log(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::Shape(format!(
            "divergence between supports of size {} and {}",
            p.len(),
            q.len()
        )));
    }
    let mut acc = 0.0;
    for (i, (&lp, &lq)) in p.iter().zip(q).enumerate() {
        if lp == f64::NEG_INFINITY {
            continue;
        }
        if lq == f64::NEG_INFINITY {
            return Err(Error::DivergenceUndefined { index: i });
        }
        acc += lp.exp() * (lp - lq);
    }
    // rounding can leave a tiny negative value for identical inputs
    Ok(acc.max(0.0))
}

/// Kullback-Leibler divergence between two categoricals.
pub fn kl_divergence(p: &Categorical, q: &Categorical) -> Result<f64> {
    kl_divergence_log(&p.log_probs, &q.log_probs)
}

/// Normalized exponential of a score vector, computed with max subtraction.
pub fn softmax(scores: &[f64]) -> Result<Categorical> {
    if scores.is_empty() {
        return Err(Error::EmptyInput);
    }
    if let Some(bad) = scores.iter().find(|s| !s.is_finite()) {
        return Err(Error::InvalidDistribution(format!(
            "non-finite score {bad}"
        )));
    }
    Categorical::from_log_weights(scores)
}

fn check_log_entry(l: f64) -> Result<()> {
    if l.is_nan() || l == f64::INFINITY {
        return Err(Error::InvalidDistribution(format!("log-probability {l}")));
    }
    Ok(())
}

fn normalize_log_in_place(log_w: &mut [f64]) -> Result<f64> {
    for &l in log_w.iter() {
        check_log_entry(l)?;
    }
    let z = log_sum_exp(log_w);
    if z == f64::NEG_INFINITY {
        return Err(Error::ZeroMass("all weights are zero".into()));
    }
    for l in log_w.iter_mut() {
        *l -= z;
    }
    Ok(z)
}

fn probs_to_logs(probs: &[f64], what: &str, row: &str) -> Result<Vec<f64>> {
    let mut sum = 0.0;
    for &p in probs {
        if !p.is_finite() || p < 0.0 {
            return Err(Error::InvalidDistribution(format!(
                "{what} row {row} has entry {p}"
            )));
        }
        sum += p;
    }
    if (sum - 1.0).abs() > LOAD_TOL {
        return Err(Error::RowNotNormalized {
            table: what.to_string(),
            row: row.to_string(),
            sum,
            tolerance: LOAD_TOL,
        });
    }
    Ok(probs.iter().map(|p| (p / sum).ln()).collect())
}

/// A distribution over `0..len`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct Categorical {
    log_probs: Vec<f64>,
}

impl TryFrom<Vec<f64>> for Categorical {
    type Error = Error;
    fn try_from(p: Vec<f64>) -> Result<Self> {
        Categorical::from_probs(&p)
    }
}

impl From<Categorical> for Vec<f64> {
    fn from(c: Categorical) -> Self {
        c.probs()
    }
}

impl Categorical {
    /// Build from linear probabilities; they must sum to one within [`LOAD_TOL`].
    pub fn from_probs(probs: &[f64]) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::EmptyInput);
        }
        Ok(Self {
            log_probs: probs_to_logs(probs, "categorical", "0")?,
        })
    }

    /// Build from unnormalized log-weights.
    pub fn from_log_weights(log_w: &[f64]) -> Result<Self> {
        if log_w.is_empty() {
            return Err(Error::EmptyInput);
        }
        let mut log_probs = log_w.to_vec();
        normalize_log_in_place(&mut log_probs)?;
        Ok(Self { log_probs })
    }

    pub fn uniform(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::EmptyInput);
        }
        Ok(Self {
            log_probs: vec![-(n as f64).ln(); n],
        })
    }

    pub fn point_mass(n: usize, at: usize) -> Result<Self> {
        if at >= n {
            return Err(Error::Shape(format!(
                "point mass at {at} on support of size {n}"
            )));
        }
        let mut log_probs = vec![f64::NEG_INFINITY; n];
        log_probs[at] = 0.0;
        Ok(Self { log_probs })
    }

    pub fn len(&self) -> usize {
        self.log_probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.log_probs.is_empty()
    }

    pub fn log_probs(&self) -> &[f64] {
        &self.log_probs
    }

    pub fn log_prob(&self, i: usize) -> f64 {
        self.log_probs[i]
    }

    pub fn prob(&self, i: usize) -> f64 {
        self.log_probs[i].exp()
    }

    pub fn probs(&self) -> Vec<f64> {
        self.log_probs.iter().map(|l| l.exp()).collect()
    }

    pub fn entropy(&self) -> f64 {
        entropy_log(&self.log_probs)
    }

    /// Index of the largest mass; ties go to the lowest index.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, &l) in self.log_probs.iter().enumerate() {
            if l > self.log_probs[best] {
                best = i;
            }
        }
        best
    }

    pub fn total_variation(&self, other: &Categorical) -> f64 {
        0.5 * self
            .log_probs
            .iter()
            .zip(&other.log_probs)
            .map(|(a, b)| (a.exp() - b.exp()).abs())
            .sum::<f64>()
    }
}

/// A named axis of a table.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Axis {
    pub name: String,
    pub size: usize,
}

impl Axis {
    pub fn new(name: impl Into<String>, size: usize) -> Self {
        Self {
            name: name.into(),
            size,
        }
    }
}

fn validate_axes(axes: &[Axis]) -> Result<usize> {
    let mut total = 1usize;
    for (i, a) in axes.iter().enumerate() {
        if a.size == 0 {
            return Err(Error::Shape(format!("axis `{}` has size 0", a.name)));
        }
        if axes[..i].iter().any(|b| b.name == a.name) {
            return Err(Error::DuplicateAxis(a.name.clone()));
        }
        total = total
            .checked_mul(a.size)
            .ok_or_else(|| Error::Shape("table too large".into()))?;
    }
    Ok(total)
}

/// Row-major strides for a list of axes.
fn strides(axes: &[Axis]) -> Vec<usize> {
    let mut s = vec![1; axes.len()];
    for i in (0..axes.len().saturating_sub(1)).rev() {
        s[i] = s[i + 1] * axes[i + 1].size;
    }
    s
}

/// Walks every flat index of a table and reports the matching index into a
/// projected table whose axis strides are `out_strides` (0 for dropped axes).
fn for_each_projection(sizes: &[usize], out_strides: &[usize], mut f: impl FnMut(usize, usize)) {
    let total: usize = sizes.iter().product();
    let mut counter = vec![0usize; sizes.len()];
    let mut out = 0usize;
    for flat in 0..total {
        f(flat, out);
        for d in (0..sizes.len()).rev() {
            counter[d] += 1;
            out += out_strides[d];
            if counter[d] < sizes[d] {
                break;
            }
            out -= out_strides[d] * sizes[d];
            counter[d] = 0;
        }
    }
}

/// A dense joint distribution over named axes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointTable {
    axes: Vec<Axis>,
    log_probs: Vec<f64>,
}

impl JointTable {
    /// Build from log-probabilities that already sum to one (within [`LOAD_TOL`]).
    pub fn new(axes: Vec<Axis>, log_probs: Vec<f64>) -> Result<Self> {
        let total = validate_axes(&axes)?;
        if total != log_probs.len() {
            return Err(Error::Shape(format!(
                "axes describe {total} cells but {} values were given",
                log_probs.len()
            )));
        }
        for &l in &log_probs {
            check_log_entry(l)?;
        }
        let mass = log_sum_exp(&log_probs).exp();
        if (mass - 1.0).abs() > LOAD_TOL {
            return Err(Error::InvalidDistribution(format!("joint mass {mass}")));
        }
        Self::from_log_weights(axes, log_probs)
    }

    /// Build from unnormalized log-weights.
    pub fn from_log_weights(axes: Vec<Axis>, mut log_w: Vec<f64>) -> Result<Self> {
        let total = validate_axes(&axes)?;
        if total != log_w.len() {
            return Err(Error::Shape(format!(
                "axes describe {total} cells but {} values were given",
                log_w.len()
            )));
        }
        normalize_log_in_place(&mut log_w)?;
        Ok(Self {
            axes,
            log_probs: log_w,
        })
    }

    pub fn axes(&self) -> &[Axis] {
        &self.axes
    }

    pub fn log_probs(&self) -> &[f64] {
        &self.log_probs
    }

    pub fn len(&self) -> usize {
        self.log_probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.log_probs.is_empty()
    }

    /// Log of the total mass; zero for a valid table.
    pub fn log_mass(&self) -> f64 {
        log_sum_exp(&self.log_probs)
    }

    pub fn axis_index(&self, name: &str) -> Result<usize> {
        self.axes
            .iter()
            .position(|a| a.name == name)
            .ok_or_else(|| Error::UnknownAxis(name.to_string()))
    }

    pub fn axis_size(&self, name: &str) -> Result<usize> {
        Ok(self.axes[self.axis_index(name)?].size)
    }

    fn flat_index(&self, idx: &[usize]) -> usize {
        let s = strides(&self.axes);
        idx.iter().zip(&s).map(|(i, s)| i * s).sum()
    }

    /// Log-probability at a full multi-index (in axis order).
    pub fn log_prob_at(&self, idx: &[usize]) -> f64 {
        self.log_probs[self.flat_index(idx)]
    }

    /// Reinterpret the same memory under new axes with the same total size.
    /// Adjacent axes fuse into one with row-major order preserved.
    pub fn reshape(&self, axes: Vec<Axis>) -> Result<Self> {
        let total = validate_axes(&axes)?;
        if total != self.log_probs.len() {
            return Err(Error::Shape(format!(
                "cannot reshape {} cells into {total}",
                self.log_probs.len()
            )));
        }
        Ok(Self {
            axes,
            log_probs: self.log_probs.clone(),
        })
    }

    fn positions(&self, names: &[&str]) -> Result<Vec<usize>> {
        let mut pos = Vec::with_capacity(names.len());
        for (i, n) in names.iter().enumerate() {
            if names[..i].contains(n) {
                return Err(Error::DuplicateAxis(n.to_string()));
            }
            pos.push(self.axis_index(n)?);
        }
        Ok(pos)
    }

    /// Marginal over `keep`, with axes in the requested order.
    pub fn marginal(&self, keep: &[&str]) -> Result<JointTable> {
        let pos = self.positions(keep)?;
        let out_axes: Vec<Axis> = pos.iter().map(|&p| self.axes[p].clone()).collect();
        let out_s = strides(&out_axes);
        let mut proj = vec![0usize; self.axes.len()];
        for (k, &p) in pos.iter().enumerate() {
            proj[p] = out_s[k];
        }
        let sizes: Vec<usize> = self.axes.iter().map(|a| a.size).collect();
        let out_len: usize = out_axes.iter().map(|a| a.size).product();

        let mut max = vec![f64::NEG_INFINITY; out_len];
        for_each_projection(&sizes, &proj, |flat, out| {
            max[out] = max[out].max(self.log_probs[flat]);
        });
        let mut acc = vec![0.0; out_len];
        for_each_projection(&sizes, &proj, |flat, out| {
            if max[out] > f64::NEG_INFINITY {
                acc[out] += (self.log_probs[flat] - max[out]).exp();
            }
        });
        let log_probs = acc
            .iter()
            .zip(&max)
            .map(|(&a, &m)| {
                if m == f64::NEG_INFINITY {
                    m
                } else {
                    m + a.ln()
                }
            })
            .collect();
        JointTable::from_log_weights(out_axes, log_probs)
    }

    /// Condition on fixed values of some axes; the result drops those axes.
    pub fn condition(&self, fixed: &[(&str, usize)]) -> Result<JointTable> {
        let names: Vec<&str> = fixed.iter().map(|f| f.0).collect();
        let pos = self.positions(&names)?;
        for (&p, &(n, v)) in pos.iter().zip(fixed) {
            if v >= self.axes[p].size {
                return Err(Error::Shape(format!(
                    "value {v} out of range for axis `{n}`"
                )));
            }
        }
        let keep: Vec<usize> = (0..self.axes.len()).filter(|i| !pos.contains(i)).collect();
        let out_axes: Vec<Axis> = keep.iter().map(|&i| self.axes[i].clone()).collect();
        let out_len: usize = out_axes.iter().map(|a| a.size).product();
        let src_s = strides(&self.axes);
        let base: usize = pos.iter().zip(fixed).map(|(&p, f)| src_s[p] * f.1).sum();
        let out_s = strides(&out_axes);
        let mut out = vec![f64::NEG_INFINITY; out_len];
        for (o, slot) in out.iter_mut().enumerate() {
            let mut src = base;
            for (k, &i) in keep.iter().enumerate() {
                src += ((o / out_s[k]) % out_axes[k].size) * src_s[i];
            }
            *slot = self.log_probs[src];
        }
        if log_sum_exp(&out) == f64::NEG_INFINITY {
            return Err(Error::ZeroMass(format!("{fixed:?}")));
        }
        if out_axes.is_empty() {
            return JointTable::from_log_weights(vec![Axis::new("unit", 1)], out);
        }
        JointTable::from_log_weights(out_axes, out)
    }

    /// `q(target | given)`; zero-mass given assignments become undefined slices.
    pub fn conditional(&self, target: &[&str], given: &[&str]) -> Result<ConditionalTable> {
        if target.is_empty() {
            return Err(Error::EmptyInput);
        }
        if let Some(t) = target.iter().find(|t| given.contains(t)) {
            return Err(Error::DuplicateAxis(t.to_string()));
        }
        let order: Vec<&str> = given.iter().chain(target).copied().collect();
        let m = self.marginal(&order)?;
        let given_axes: Vec<Axis> = m.axes[..given.len()].to_vec();
        let target_axes: Vec<Axis> = m.axes[given.len()..].to_vec();
        let t_len: usize = target_axes.iter().map(|a| a.size).product();
        let slices = m
            .log_probs
            .chunks(t_len)
            .map(|c| {
                if log_sum_exp(c) == f64::NEG_INFINITY {
                    None
                } else {
                    Some(c.to_vec())
                }
            })
            .collect();
        ConditionalTable::from_log_slices(target_axes, given_axes, slices)
    }
}

/// `q(target | given)` stored as one normalized slice per given-assignment.
///
/// Layout is given-major: slice `g` occupies `log_probs[g*T..(g+1)*T]`.
/// Undefined slices hold `NaN` and are only reachable through
/// [`ConditionalTable::slice`], which returns `None` for them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionalTable {
    target_axes: Vec<Axis>,
    given_axes: Vec<Axis>,
    log_probs: Vec<f64>,
    defined: Vec<bool>,
}

impl ConditionalTable {
    /// Build from per-slice unnormalized log-weights; `None` marks an undefined slice.
    pub fn from_log_slices(
        target_axes: Vec<Axis>,
        given_axes: Vec<Axis>,
        slices: Vec<Option<Vec<f64>>>,
    ) -> Result<Self> {
        let t_len = validate_axes(&target_axes)?;
        let g_len = if given_axes.is_empty() {
            1
        } else {
            validate_axes(&given_axes)?
        };
        let all: Vec<Axis> = given_axes.iter().chain(&target_axes).cloned().collect();
        validate_axes(&all)?;
        if slices.len() != g_len {
            return Err(Error::Shape(format!(
                "{} slices for {g_len} given-assignments",
                slices.len()
            )));
        }
        let mut log_probs = Vec::with_capacity(g_len * t_len);
        let mut defined = Vec::with_capacity(g_len);
        for (g, s) in slices.into_iter().enumerate() {
            match s {
                Some(mut w) => {
                    if w.len() != t_len {
                        return Err(Error::Shape(format!(
                            "slice {g} has {} entries, expected {t_len}",
                            w.len()
                        )));
                    }
                    normalize_log_in_place(&mut w)
                        .map_err(|_| Error::ZeroMass(format!("slice {g} has no mass")))?;
                    log_probs.extend(w);
                    defined.push(true);
                }
                None => {
                    log_probs.extend(std::iter::repeat_n(f64::NAN, t_len));
                    defined.push(false);
                }
            }
        }
        Ok(Self {
            target_axes,
            given_axes,
            log_probs,
            defined,
        })
    }

    /// Build from linear probability rows that each sum to one within [`LOAD_TOL`].
    pub fn from_prob_rows(
        table: &str,
        target_axes: Vec<Axis>,
        given_axes: Vec<Axis>,
        rows: &[Vec<f64>],
    ) -> Result<Self> {
        let slices = rows
            .iter()
            .enumerate()
            .map(|(i, r)| probs_to_logs(r, table, &i.to_string()).map(Some))
            .collect::<Result<Vec<_>>>()?;
        Self::from_log_slices(target_axes, given_axes, slices)
    }

    pub fn target_axes(&self) -> &[Axis] {
        &self.target_axes
    }

    pub fn given_axes(&self) -> &[Axis] {
        &self.given_axes
    }

    pub fn target_len(&self) -> usize {
        self.target_axes.iter().map(|a| a.size).product()
    }

    pub fn given_len(&self) -> usize {
        self.defined.len()
    }

    pub fn is_defined(&self, g: usize) -> bool {
        self.defined[g]
    }

    /// The normalized slice for given-assignment `g`, or `None` if undefined.
    pub fn slice(&self, g: usize) -> Option<&[f64]> {
        if !self.defined[g] {
            return None;
        }
        let t = self.target_len();
        Some(&self.log_probs[g * t..(g + 1) * t])
    }

    /// Log-probability of target value `t` given assignment `g`, if defined.
    pub fn log_prob(&self, g: usize, t: usize) -> Option<f64> {
        self.slice(g).map(|s| s[t])
    }
}

/// `H[q(target | given)]` for every given-assignment; `None` for undefined slices.
pub fn entropy_given(cond: &ConditionalTable) -> Vec<Option<f64>> {
    (0..cond.given_len())
        .map(|g| cond.slice(g).map(entropy_log))
        .collect()
}

/// Scalar conditional entropy `H'[q(target | given)] = E_{q(given)} H[q(target | given)]`.
pub fn conditional_entropy(joint: &JointTable, target: &[&str], given: &[&str]) -> Result<f64> {
    let cond = joint.conditional(target, given)?;
    let weights = if given.is_empty() {
        vec![0.0]
    } else {
        joint.marginal(given)?.log_probs
    };
    let mut acc = 0.0;
    for (h, &lw) in entropy_given(&cond).iter().zip(&weights) {
        if let Some(h) = h {
            if lw > f64::NEG_INFINITY {
                acc += lw.exp() * h;
            }
        }
    }
    Ok(acc.max(0.0))
}

/// `I[a, b | given] = Σ q(a,b,g) log [q(a,b,g) q(g) / (q(a,g) q(b,g))]`.
pub fn mutual_information(
    joint: &JointTable,
    a: &[&str],
    b: &[&str],
    given: &[&str],
) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptyInput);
    }
    for n in a {
        if b.contains(n) || given.contains(n) {
            return Err(Error::DuplicateAxis(n.to_string()));
        }
    }
    if let Some(n) = b.iter().find(|n| given.contains(n)) {
        return Err(Error::DuplicateAxis(n.to_string()));
    }
    let order: Vec<&str> = given.iter().chain(a).chain(b).copied().collect();
    let abg = joint.marginal(&order)?;
    let ga: Vec<&str> = given.iter().chain(a).copied().collect();
    let gb: Vec<&str> = given.iter().chain(b).copied().collect();
    let ag = joint.marginal(&ga)?;
    let bg = joint.marginal(&gb)?;
    let g_log = if given.is_empty() {
        vec![0.0]
    } else {
        joint.marginal(given)?.log_probs
    };
    let a_len: usize = abg.axes[given.len()..given.len() + a.len()]
        .iter()
        .map(|x| x.size)
        .product();
    let b_len: usize = abg.axes[given.len() + a.len()..]
        .iter()
        .map(|x| x.size)
        .product();
    let mut acc = 0.0;
    for (gi, &lg) in g_log.iter().enumerate() {
        for ai in 0..a_len {
            let lag = ag.log_probs[gi * a_len + ai];
            for bi in 0..b_len {
                let l = abg.log_probs[(gi * a_len + ai) * b_len + bi];
                if l == f64::NEG_INFINITY {
                    continue;
                }
                let lbg = bg.log_probs[gi * b_len + bi];
                acc += l.exp() * (l + lg - lag - lbg);
            }
        }
    }
    Ok(acc.max(0.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table(axes: &[(&str, usize)], probs: &[f64]) -> JointTable {
        let axes = axes.iter().map(|(n, s)| Axis::new(*n, *s)).collect();
        JointTable::new(axes, probs.iter().map(|p| p.ln()).collect()).unwrap()
    }

    #[test]
    fn entropy_given_uniform_point_and_skewed() {
        let xu = table(&[("u", 2), ("x", 2)], &[0.25, 0.25, 0.125, 0.375]);
        let h = entropy_given(&xu.conditional(&["x"], &["u"]).unwrap());
        assert!((h[0].unwrap() - 2f64.ln()).abs() < 1e-15);
        // -(0.25 ln 0.25 + 0.75 ln 0.75)
        assert!((h[1].unwrap() - 0.562_335_144_618_808_4).abs() < 1e-12);

        let delta = table(&[("u", 2), ("x", 2)], &[0.5, 0.0, 0.0, 0.5]);
        let h = entropy_given(&delta.conditional(&["x"], &["u"]).unwrap());
        assert_eq!(h, vec![Some(0.0), Some(0.0)]);
    }

    #[test]
    fn conditional_entropy_cases() {
        let indep = table(&[("u", 2), ("x", 2)], &[0.15, 0.15, 0.35, 0.35]);
        let h = conditional_entropy(&indep, &["x"], &["u"]).unwrap();
        assert!((h - 2f64.ln()).abs() < 1e-12);

        let det = table(&[("u", 2), ("x", 2)], &[0.0, 0.4, 0.6, 0.0]);
        assert_eq!(conditional_entropy(&det, &["x"], &["u"]).unwrap(), 0.0);

        assert!(matches!(
            conditional_entropy(&det, &["z"], &["u"]),
            Err(Error::UnknownAxis(_))
        ));
    }

    #[test]
    fn kl_examples() {
        let p = Categorical::from_probs(&[0.3, 0.7]).unwrap();
        let q = Categorical::uniform(2).unwrap();
        // 0.3 ln 0.6 + 0.7 ln 1.4
        assert!((kl_divergence(&p, &q).unwrap() - 0.082_282_878_505_051_8).abs() < 1e-12);
        assert_eq!(kl_divergence(&p, &p).unwrap(), 0.0);
        let delta = Categorical::point_mass(2, 0).unwrap();
        assert!((kl_divergence(&delta, &q).unwrap() - 2f64.ln()).abs() < 1e-15);
        assert!(matches!(
            kl_divergence(&q, &delta),
            Err(Error::DivergenceUndefined { index: 1 })
        ));
        assert!(kl_divergence(&Categorical::uniform(3).unwrap(), &q).is_err());
    }

    #[test]
    fn mutual_information_cases() {
        // y independent of theta given x
        let mut probs = Vec::new();
        for x in [0.4, 0.6] {
            for y in [0.3, 0.7] {
                for t in [0.2, 0.8] {
                    probs.push(x * y * t);
                }
            }
        }
        let j = table(&[("x", 2), ("y", 2), ("theta", 2)], &probs);
        assert!(mutual_information(&j, &["y"], &["theta"], &["x"]).unwrap() < 1e-15);

        // theta = y, uniform
        let j = table(&[("y", 2), ("theta", 2)], &[0.5, 0.0, 0.0, 0.5]);
        let mi = mutual_information(&j, &["y"], &["theta"], &[]).unwrap();
        assert!((mi - 2f64.ln()).abs() < 1e-15);

        assert!(mutual_information(&j, &["y"], &["y"], &[]).is_err());
    }

    #[test]
    fn softmax_examples() {
        let s = softmax(&[1.5, 1.5]).unwrap();
        assert!(s.probs().iter().all(|p| (p - 0.5).abs() < 1e-15));
        let s = softmax(&[0.0, 3f64.ln()]).unwrap();
        assert!((s.prob(0) - 0.25).abs() < 1e-15 && (s.prob(1) - 0.75).abs() < 1e-15);
        let big = softmax(&[1000.0, 1001.0]).unwrap();
        let small = softmax(&[0.0, 1.0]).unwrap();
        for i in 0..2 {
            assert!(big.prob(i).is_finite());
            assert!((big.prob(i) - small.prob(i)).abs() < 1e-12);
        }
        assert!(matches!(softmax(&[]), Err(Error::EmptyInput)));
        assert!(softmax(&[f64::NAN]).is_err());
    }

    #[test]
    fn marginal_condition_and_reshape() {
        let j = table(&[("a", 2), ("b", 3)], &[0.1, 0.2, 0.1, 0.3, 0.2, 0.1]);
        let b = j.marginal(&["b"]).unwrap();
        let pb = [0.4, 0.4, 0.2];
        for (l, p) in b.log_probs().iter().zip(pb) {
            assert!((l.exp() - p).abs() < 1e-15);
        }
        let swapped = j.marginal(&["b", "a"]).unwrap();
        assert!((swapped.log_prob_at(&[2, 0]).exp() - 0.1).abs() < 1e-15);
        let c = j.condition(&[("a", 1)]).unwrap();
        assert!((c.log_prob_at(&[0]).exp() - 0.5).abs() < 1e-15);
        let flat = j.reshape(vec![Axis::new("ab", 6)]).unwrap();
        assert_eq!(flat.log_probs(), j.log_probs());
        assert!(j.reshape(vec![Axis::new("ab", 5)]).is_err());
        assert!(j.marginal(&["a", "a"]).is_err());
        let z = table(&[("a", 2), ("b", 2)], &[0.5, 0.5, 0.0, 0.0]);
        assert!(matches!(z.condition(&[("a", 1)]), Err(Error::ZeroMass(_))));
        let cond = z.conditional(&["b"], &["a"]).unwrap();
        assert!(cond.is_defined(0) && !cond.is_defined(1));
        assert!(cond.slice(1).is_none());
    }

    #[test]
    fn invalid_inputs_rejected() {
        assert!(Categorical::from_probs(&[0.5, 0.6]).is_err());
        assert!(Categorical::from_probs(&[-0.1, 1.1]).is_err());
        assert!(Categorical::from_probs(&[]).is_err());
        assert!(JointTable::new(vec![Axis::new("a", 2)], vec![0.0, 0.0]).is_err());
        assert!(JointTable::new(vec![Axis::new("a", 1), Axis::new("a", 1)], vec![0.0]).is_err());
    }
}
