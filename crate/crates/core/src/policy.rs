//! Diagonal-Gaussian network heads and the squashed-action policy interface.

use alloc::vec::Vec;

#[allow(unused_imports)] // shadowed by inherent f64 methods when std is linked
use num_traits::Float;

use crate::linalg::Matrix;
use crate::nn::Mlp;
use crate::rng;
use crate::{Error, Result};

pub const DEFAULT_VAR_FLOOR: f64 = 1e-6;
pub const DEFAULT_VAR_CEILING: f64 = 1e2;

/// Smooth two-sided squashing of a raw network output into a bounded
/// log-variance:
///
/// `log_var = lo + (hi - lo) * sigmoid(raw + ln(-lo / hi))`
///
/// with `lo = ln(floor)`, `hi = ln(ceiling)`. The offset makes `raw = 0`
/// correspond to unit variance whenever `floor < 1 < ceiling`.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct VarianceBounds {
    pub floor: f64,
    pub ceiling: f64,
}

impl Default for VarianceBounds {
    fn default() -> Self {
        Self {
            floor: DEFAULT_VAR_FLOOR,
            ceiling: DEFAULT_VAR_CEILING,
        }
    }
}

impl VarianceBounds {
    pub fn new(floor: f64, ceiling: f64) -> Result<Self> {
        if !(floor > 0.0 && floor < 1.0 && ceiling > 1.0 && ceiling.is_finite()) {
            return Err(Error::precondition(
                "variance bounds need 0 < floor < 1 < ceiling < inf",
            ));
        }
        Ok(Self { floor, ceiling })
    }

    #[inline]
    fn offset(&self) -> f64 {
        let (lo, hi) = (self.floor.ln(), self.ceiling.ln());
        (-lo / hi).ln()
    }

    /// Returns `(log_var, d log_var / d raw)`.
    #[inline]
    pub fn squash(&self, raw: f64) -> (f64, f64) {
        let (lo, hi) = (self.floor.ln(), self.ceiling.ln());
        let s = sigmoid(raw + self.offset());
        (lo + (hi - lo) * s, (hi - lo) * s * (1.0 - s))
    }
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^x)` without overflow.
#[inline]
pub fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else if x < -30.0 {
        x.exp()
    } else {
        x.exp().ln_1p()
    }
}

/// Per-row Gaussian parameters produced for a batch of inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianBatch {
    pub mean: Matrix,
    pub log_var: Matrix,
    /// d log_var / d raw, needed for back-propagation.
    pub dlogvar_draw: Matrix,
}

/// A network whose output is split into a mean half and a raw log-variance
/// half, squashed by [`VarianceBounds`].
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct GaussianHead {
    pub net: Mlp,
    pub bounds: VarianceBounds,
}

impl GaussianHead {
    pub fn new(net: Mlp, bounds: VarianceBounds) -> Result<Self> {
        if !net.output_dim().is_multiple_of(2) {
            return Err(Error::precondition(
                "a Gaussian head needs an even output width (mean and log-variance)",
            ));
        }
        Ok(Self { net, bounds })
    }

    pub fn out_dim(&self) -> usize {
        self.net.output_dim() / 2
    }

    pub fn split_output(&self, raw: &Matrix) -> GaussianBatch {
        let d = self.out_dim();
        let n = raw.rows();
        let mut mean = Matrix::zeros(n, d);
        let mut log_var = Matrix::zeros(n, d);
        let mut dlv = Matrix::zeros(n, d);
        for r in 0..n {
            let row = raw.row(r);
            mean.row_mut(r).copy_from_slice(&row[..d]);
            for k in 0..d {
                let (lv, g) = self.bounds.squash(row[d + k]);
                log_var.set(r, k, lv);
                dlv.set(r, k, g);
            }
        }
        GaussianBatch {
            mean,
            log_var,
            dlogvar_draw: dlv,
        }
    }

    pub fn evaluate(&self, inputs: &Matrix) -> Result<GaussianBatch> {
        let raw = self.net.forward(inputs)?;
        if let Some(row) = raw.first_non_finite_row() {
            return Err(Error::NonFinite {
                what: "network output",
                index: row,
            });
        }
        Ok(self.split_output(&raw))
    }
}

/// Affine-tanh squash from pre-squash Gaussian samples into an action box.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ActionSquash {
    pub scale: Vec<f64>,
    pub center: Vec<f64>,
    pub low: Vec<f64>,
    pub high: Vec<f64>,
}

impl ActionSquash {
    pub fn from_box(low: &[f64], high: &[f64]) -> Self {
        Self {
            scale: low.iter().zip(high).map(|(l, h)| 0.5 * (h - l)).collect(),
            center: low.iter().zip(high).map(|(l, h)| 0.5 * (h + l)).collect(),
            low: low.to_vec(),
            high: high.to_vec(),
        }
    }

    #[inline]
    pub fn apply(&self, k: usize, u: f64) -> f64 {
        // Rounding can push a saturated tanh past the box edge.
        (self.center[k] + self.scale[k] * u.tanh()).clamp(self.low[k], self.high[k])
    }

    /// `ln(d a / d u)` for component `k`, computed stably as
    /// `ln(scale) + 2 (ln 2 - u - softplus(-2u))`.
    #[inline]
    pub fn log_jacobian(&self, k: usize, u: f64) -> f64 {
        self.scale[k].ln() + 2.0 * (core::f64::consts::LN_2 - u - softplus(-2.0 * u))
    }
}

/// Anything that maps states to squashed actions given standard-normal noise.
pub trait Policy {
    fn action_dim(&self) -> usize;

    /// `action = squash(mean + std * noise)`; zero noise gives the
    /// deterministic action.
    fn act_with_noise(&self, states: &Matrix, noise: &Matrix) -> Result<Matrix>;

    fn sample_actions(&self, states: &Matrix, rng: &mut dyn rand::RngCore) -> Result<Matrix> {
        let mut noise = Matrix::zeros(states.rows(), self.action_dim());
        for v in noise.as_mut_slice() {
            *v = rng::standard_normal(rng);
        }
        self.act_with_noise(states, &noise)
    }

    fn deterministic_actions(&self, states: &Matrix) -> Result<Matrix> {
        self.act_with_noise(states, &Matrix::zeros(states.rows(), self.action_dim()))
    }
}

/// Uniform-random actions inside a box; used for warm-up collection.
#[derive(Debug, Clone)]
pub struct UniformRandomPolicy {
    pub low: Vec<f64>,
    pub high: Vec<f64>,
}

impl UniformRandomPolicy {
    pub fn sample(&self, rng: &mut dyn rand::RngCore) -> Vec<f64> {
        use rand::Rng;
        self.low
            .iter()
            .zip(&self.high)
            .map(|(&l, &h)| l + (h - l) * rng.random::<f64>())
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn squash_is_bounded_and_centered() {
        let b = VarianceBounds::default();
        let (lv0, _) = b.squash(0.0);
        assert!(
            lv0.abs() < 1e-12,
            "raw 0 should map to unit variance, got {lv0}"
        );
        for raw in [-1e6, -50.0, -3.0, 0.5, 10.0, 1e6] {
            let (lv, _) = b.squash(raw);
            let var = lv.exp();
            assert!(
                (1e-6 * (1.0 - 1e-12)..=1e2 * (1.0 + 1e-12)).contains(&var),
                "{raw} -> {var}"
            );
        }
    }

    #[test]
    fn squash_derivative_matches_finite_difference() {
        let b = VarianceBounds::default();
        for raw in [-2.0, -0.3, 0.0, 0.7, 3.0] {
            let h = 1e-6;
            let fd = (b.squash(raw + h).0 - b.squash(raw - h).0) / (2.0 * h);
            assert!((fd - b.squash(raw).1).abs() < 1e-6);
        }
    }

    #[test]
    fn log_jacobian_matches_direct_formula() {
        let sq = ActionSquash::from_box(&[-2.0], &[2.0]);
        for u in [-3.0, -0.5, 0.0, 0.2, 4.0] {
            let t: f64 = Float::tanh(u);
            let direct = (2.0 * (1.0 - t * t)).ln();
            assert!((sq.log_jacobian(0, u) - direct).abs() < 1e-10);
        }
    }
}
