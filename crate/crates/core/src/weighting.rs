//! Policy distribution shift and the adjusted historical policy mixture.
//!
//! Each historical policy `i` gets weight proportional to the inverse of its
//! shift `xi_i` from the current policy. The current policy itself gets
//! `max(alpha * sum(historical), max(historical))`, which keeps it the
//! heaviest entry, and the whole vector is then normalized.
//!
//! Shifts are upper bounds on the average total-variation distance between
//! action distributions, obtained from the closed-form KL divergence of
//! diagonal Gaussians through Pinsker's inequality.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

#[allow(unused_imports)] // shadowed by inherent f64 methods when std is linked
use num_traits::Float;

use crate::linalg::Matrix;
use crate::policy::GaussianHead;
use crate::replay::PolicyId;
use crate::{Error, Result};

/// Shifts below this value are clamped before inversion.
pub const SHIFT_FLOOR: f64 = 1e-6;

/// Alpha used by default: current-policy proportion 0.02, i.e. `0.02 / 0.98`.
pub const DEFAULT_ALPHA: f64 = 0.02 / 0.98;

#[derive(Debug, Clone, PartialEq)]
pub struct GaussianActionDistribution {
    pub mean: Vec<f64>,
    pub variance: Vec<f64>,
}

impl GaussianActionDistribution {
    pub fn new(mean: Vec<f64>, variance: Vec<f64>) -> Result<Self> {
        if mean.len() != variance.len() {
            return Err(Error::dims("gaussian variance", mean.len(), variance.len()));
        }
        if let Some(i) = mean.iter().position(|m| !m.is_finite()) {
            return Err(Error::NonFinite {
                what: "gaussian mean",
                index: i,
            });
        }
        if let Some(i) = variance.iter().position(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::NonFinite {
                what: "gaussian variance",
                index: i,
            });
        }
        Ok(Self { mean, variance })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }
}

/// `KL(p || q)` between diagonal Gaussians given means and variances.
pub fn kl_diagonal(p_mean: &[f64], p_var: &[f64], q_mean: &[f64], q_var: &[f64]) -> f64 {
    let mut acc = 0.0;
    for k in 0..p_mean.len() {
        let ratio = p_var[k] / q_var[k];
        let d = q_mean[k] - p_mean[k];
        acc += ratio - 1.0 + d * d / q_var[k] - ratio.ln();
    }
    0.5 * acc
}

/// How the per-state total-variation bound is evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum ShiftFormula {
    /// `sqrt(KL(historical || current) / 2)`.
    #[default]
    ConsistentPinsker,
    /// The mixed-covariance expression: trace and log-determinant of
    /// `Sigma_c^-1 Sigma_i`, quadratic form weighted by `Sigma_i^-1`.
    #[cfg_attr(feature = "serde", serde(rename = "paper_literal"))]
    MixedCovariance,
}

/// Per-state bound on `TV(current, historical)`.
pub fn tv_bound(
    current_mean: &[f64],
    current_var: &[f64],
    hist_mean: &[f64],
    hist_var: &[f64],
    formula: ShiftFormula,
) -> f64 {
    match formula {
        ShiftFormula::ConsistentPinsker => {
            let kl = kl_diagonal(hist_mean, hist_var, current_mean, current_var);
            (0.5 * kl.max(0.0)).sqrt()
        }
        ShiftFormula::MixedCovariance => {
            let mut acc = 0.0;
            for k in 0..current_mean.len() {
                let ratio = hist_var[k] / current_var[k];
                let d = current_mean[k] - hist_mean[k];
                acc += ratio - 1.0 + d * d / hist_var[k] - ratio.ln();
            }
            0.5 * acc.max(0.0).sqrt()
        }
    }
}

/// What a snapshot evaluates to for a given state.
#[derive(Debug, Clone, PartialEq)]
pub enum PolicyHead {
    /// Frozen actor network (pre-squash Gaussian).
    Actor(GaussianHead),
    /// State-independent Gaussian, used for the warm-up policy.
    Fixed(GaussianActionDistribution),
}

/// A frozen policy in the historical sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicySnapshot {
    pub id: PolicyId,
    pub created_at_env_step: u64,
    pub head: PolicyHead,
}

/// Action-distribution parameters for a batch of states.
#[derive(Debug, Clone)]
pub struct DistributionBatch {
    pub mean: Matrix,
    pub variance: Matrix,
}

impl PolicySnapshot {
    /// The synthetic warm-up policy: zero mean and variance
    /// `(action_range / 2)^2` per dimension.
    pub fn warmup(action_low: &[f64], action_high: &[f64]) -> Result<Self> {
        let variance = action_low
            .iter()
            .zip(action_high)
            .map(|(l, h)| {
                let half = 0.5 * (h - l);
                half * half
            })
            .collect();
        Ok(Self {
            id: PolicyId(0),
            created_at_env_step: 0,
            head: PolicyHead::Fixed(GaussianActionDistribution::new(
                alloc::vec![0.0; action_low.len()],
                variance,
            )?),
        })
    }

    pub fn action_dim(&self) -> usize {
        match &self.head {
            PolicyHead::Actor(h) => h.out_dim(),
            PolicyHead::Fixed(d) => d.dim(),
        }
    }

    pub fn params(&self) -> &[f64] {
        match &self.head {
            PolicyHead::Actor(h) => h.net.params(),
            PolicyHead::Fixed(d) => &d.mean,
        }
    }

    pub fn evaluate(&self, states: &Matrix) -> Result<DistributionBatch> {
        match &self.head {
            PolicyHead::Actor(head) => {
                let g = head.evaluate(states)?;
                let mut variance = g.log_var;
                for v in variance.as_mut_slice() {
                    *v = v.exp();
                }
                if let Some(row) = variance
                    .first_non_finite_row()
                    .or_else(|| g.mean.first_non_finite_row())
                {
                    return Err(Error::NonFinite {
                        what: "policy output",
                        index: row,
                    });
                }
                Ok(DistributionBatch {
                    mean: g.mean,
                    variance,
                })
            }
            PolicyHead::Fixed(d) => {
                let n = states.rows();
                let mut mean = Matrix::zeros(n, d.dim());
                let mut variance = Matrix::zeros(n, d.dim());
                for r in 0..n {
                    mean.row_mut(r).copy_from_slice(&d.mean);
                    variance.row_mut(r).copy_from_slice(&d.variance);
                }
                Ok(DistributionBatch { mean, variance })
            }
        }
    }

    pub fn distribution(&self, state: &[f64]) -> Result<GaussianActionDistribution> {
        let m = Matrix::from_vec(1, state.len(), state.to_vec())?;
        let b = self.evaluate(&m)?;
        GaussianActionDistribution::new(b.mean.row(0).to_vec(), b.variance.row(0).to_vec())
    }
}

fn shift_between(
    current: &DistributionBatch,
    hist: &DistributionBatch,
    formula: ShiftFormula,
) -> f64 {
    let n = current.mean.rows();
    let mut acc = 0.0;
    for r in 0..n {
        acc += tv_bound(
            current.mean.row(r),
            current.variance.row(r),
            hist.mean.row(r),
            hist.variance.row(r),
            formula,
        );
    }
    acc / n as f64
}

/// Average per-state TV bound between a historical and the current policy.
pub fn estimate_policy_shift(
    current: &PolicySnapshot,
    historical: &PolicySnapshot,
    eval_states: &Matrix,
    formula: ShiftFormula,
) -> Result<f64> {
    if eval_states.rows() == 0 {
        return Err(Error::precondition(
            "policy shift needs at least one evaluation state",
        ));
    }
    let cur = current.evaluate(eval_states)?;
    let hist = historical.evaluate(eval_states)?;
    if cur.mean.cols() != hist.mean.cols() {
        return Err(Error::dims(
            "action dimension",
            cur.mean.cols(),
            hist.mean.cols(),
        ));
    }
    Ok(shift_between(&cur, &hist, formula))
}

/// Inverse-shift weights for the historical policies (current excluded).
pub fn compute_historical_weights(shifts: &[f64], floor: f64) -> Result<Vec<f64>> {
    if shifts.is_empty() {
        return Err(Error::precondition("historical shift vector is empty"));
    }
    if let Some(i) = shifts.iter().position(|s| !(*s >= 0.0 && s.is_finite())) {
        return Err(Error::precondition(alloc::format!(
            "shift {i} is negative or non-finite"
        )));
    }
    let inv: Vec<f64> = shifts.iter().map(|s| 1.0 / s.max(floor)).collect();
    let total: f64 = inv.iter().sum();
    Ok(inv.into_iter().map(|v| v / total).collect())
}

/// Weight of the current policy given the (unnormalized) historical weights.
pub fn compute_current_weight(historical: &[f64], alpha: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(Error::precondition("alpha must be positive"));
    }
    if historical.is_empty() {
        return Ok(1.0);
    }
    let total: f64 = historical.iter().sum();
    let max = historical.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let proportional = alpha * total;
    Ok(if proportional > max {
        proportional
    } else {
        max
    })
}

pub fn normalize(weights: &mut [f64]) -> Result<()> {
    let total: f64 = weights.iter().sum();
    if !(total > 0.0 && total.is_finite()) {
        return Err(Error::WeightNormalization(total));
    }
    for w in weights.iter_mut() {
        *w /= total;
    }
    Ok(())
}

/// Full weight vector (historical then current) from historical weights.
fn with_current(historical: Vec<f64>, alpha: f64) -> Result<Vec<f64>> {
    let current = compute_current_weight(&historical, alpha)?;
    let mut w = historical;
    w.push(current);
    normalize(&mut w)?;
    Ok(w)
}

/// Age-based baseline: historical weight of policy `i` (0-based, oldest
/// first) is `decay_rate^(k - 2 - i)` so the newest historical policy has
/// weight 1 before normalization. `decay_rate = 1` gives uniform
/// historical weights.
pub fn exponential_decay_weights(
    num_policies: usize,
    decay_rate: f64,
    alpha: f64,
) -> Result<Vec<f64>> {
    if num_policies == 0 {
        return Err(Error::precondition("need at least one policy"));
    }
    if !(decay_rate > 0.0 && decay_rate <= 1.0) {
        return Err(Error::precondition("decay rate must lie in (0, 1]"));
    }
    if num_policies == 1 {
        compute_current_weight(&[], alpha)?;
        return Ok(alloc::vec![1.0]);
    }
    let h = num_policies - 1;
    let mut hist: Vec<f64> = (0..h)
        .map(|i| decay_rate.powi((h - 1 - i) as i32))
        .collect();
    normalize(&mut hist)?;
    with_current(hist, alpha)
}

/// Historical policy sequence with its mixture weights.
#[derive(Debug, Clone)]
pub struct PolicyMixture {
    snapshots: Vec<PolicySnapshot>,
    weights: Vec<f64>,
    shift_cache: Vec<f64>,
    pub alpha: f64,
    pub formula: ShiftFormula,
    pub shift_floor: f64,
}

impl PolicyMixture {
    pub fn new(alpha: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(Error::precondition("alpha must be positive"));
        }
        Ok(Self {
            snapshots: Vec::new(),
            weights: Vec::new(),
            shift_cache: Vec::new(),
            alpha,
            formula: ShiftFormula::default(),
            shift_floor: SHIFT_FLOOR,
        })
    }

    /// Appends the new current policy. Its id must equal its index.
    pub fn push(&mut self, snapshot: PolicySnapshot) -> Result<()> {
        if snapshot.id.0 as usize != self.snapshots.len() {
            return Err(Error::precondition(alloc::format!(
                "snapshot id {} does not match sequence index {}",
                snapshot.id.0,
                self.snapshots.len()
            )));
        }
        self.snapshots.push(snapshot);
        self.shift_cache.push(0.0);
        // Until the next adjustment the newest policy simply takes its share.
        let k = self.snapshots.len() as f64;
        self.weights = alloc::vec![1.0 / k; self.snapshots.len()];
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.snapshots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.snapshots.is_empty()
    }

    pub fn snapshots(&self) -> &[PolicySnapshot] {
        &self.snapshots
    }

    pub fn current(&self) -> Option<&PolicySnapshot> {
        self.snapshots.last()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn shifts(&self) -> &[f64] {
        &self.shift_cache
    }

    pub fn weight_map(&self) -> BTreeMap<PolicyId, f64> {
        self.snapshots
            .iter()
            .zip(&self.weights)
            .map(|(s, &w)| (s.id, w))
            .collect()
    }

    /// Overrides the weight vector (used by the baseline weighting modes).
    pub fn set_weights(&mut self, weights: Vec<f64>) -> Result<()> {
        if weights.len() != self.snapshots.len() {
            return Err(Error::dims(
                "mixture weights",
                self.snapshots.len(),
                weights.len(),
            ));
        }
        self.weights = weights;
        Ok(())
    }

    /// Recomputes every historical shift against the current policy on
    /// `eval_states` and resets the weights from them.
    pub fn adjust(&mut self, eval_states: &Matrix) -> Result<()> {
        let Some(current) = self.snapshots.last() else {
            return Err(Error::precondition("mixture has no snapshots"));
        };
        let k = self.snapshots.len();
        if k == 1 {
            self.weights = alloc::vec![1.0];
            self.shift_cache = alloc::vec![0.0];
            return Ok(());
        }
        if eval_states.rows() == 0 {
            return Err(Error::precondition(
                "policy shift needs at least one evaluation state",
            ));
        }
        let cur = current.evaluate(eval_states)?;
        let mut shifts = Vec::with_capacity(k);
        for snap in &self.snapshots[..k - 1] {
            let hist = snap.evaluate(eval_states)?;
            if hist.mean.cols() != cur.mean.cols() {
                return Err(Error::dims(
                    "action dimension",
                    cur.mean.cols(),
                    hist.mean.cols(),
                ));
            }
            shifts.push(shift_between(&cur, &hist, self.formula));
        }
        let hist = compute_historical_weights(&shifts, self.shift_floor)?;
        self.weights = with_current(hist, self.alpha)?;
        shifts.push(0.0);
        self.shift_cache = shifts;
        Ok(())
    }
}

/// Free-function form of [`PolicyMixture::adjust`].
pub fn adjust_mixture(mixture: &mut PolicyMixture, eval_states: &Matrix) -> Result<()> {
    mixture.adjust(eval_states)
}
