//! Randomized suites over exact tabular evaluations.

use std::fmt;
use std::str::FromStr;

use pdml_core::rng::{self, Rng};
use pdml_core::tabular::{self, BoundInstance};
use pdml_core::weighting::{self, DEFAULT_ALPHA, SHIFT_FLOOR};
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{AppError, Result};

/// Violations above this count as failures of the visitation-gap check.
pub const LEMMA1_TOLERANCE: f64 = 1e-9;
/// Bound instances are asserted only when the mixture's model and real
/// occupancies differ by at most this much.
pub const RESIDUAL_THRESHOLD: f64 = 1e-3;
pub const PROPOSITION1_TOLERANCE: f64 = 1e-12;
/// Upper edge of the largest perturbation used by the bound suite.
pub const MAX_PERTURBATION: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Suite {
    Lemma1,
    Theorem1,
    Proposition1,
    All,
}

impl Suite {
    fn runs(self, s: Suite) -> bool {
        self == Suite::All || self == s
    }
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Suite::Lemma1 => "lemma1",
            Suite::Theorem1 => "theorem1",
            Suite::Proposition1 => "proposition1",
            Suite::All => "all",
        })
    }
}

impl FromStr for Suite {
    type Err = AppError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lemma1" => Ok(Suite::Lemma1),
            "theorem1" => Ok(Suite::Theorem1),
            "proposition1" => Ok(Suite::Proposition1),
            "all" => Ok(Suite::All),
            other => Err(AppError::Usage(format!(
                "unknown suite '{other}' (expected lemma1, theorem1, proposition1 or all)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct HistogramBin {
    /// Residuals in `[lower, upper)`.
    pub lower: f64,
    pub upper: f64,
    pub count: usize,
    pub holds: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct Failure {
    pub suite: Suite,
    pub index: usize,
    pub detail: serde_json::Value,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct VerifyReport {
    pub suite: Suite,
    pub seed: u64,
    pub instances: usize,
    pub lemma1_max_violation: Option<f64>,
    /// Bound instances with an exact model that satisfy the inequality.
    pub theorem1_exact_holds_count: Option<usize>,
    /// Perturbed-model instances that satisfy the inequality.
    pub theorem1_holds_count: Option<usize>,
    pub theorem1_satisfaction_rate: Option<f64>,
    /// Perturbed instances whose residual is small enough to assert on.
    pub theorem1_assertable: Option<usize>,
    pub residual_histogram: Vec<HistogramBin>,
    pub proposition1_margin_min: Option<f64>,
    pub passed: bool,
    pub failures: Vec<Failure>,
}

fn suite_stream(seed: u64, suite: Suite) -> Rng {
    let id = match suite {
        Suite::Lemma1 => 1,
        Suite::Theorem1 => 2,
        Suite::Proposition1 => 3,
        Suite::All => 0,
    };
    rng::stream(seed, id)
}

fn to_value<T: Serialize>(v: &T) -> serde_json::Value {
    serde_json::to_value(v).unwrap_or(serde_json::Value::Null)
}

pub fn run_lemma1(n: usize, seed: u64, failures: &mut Vec<Failure>) -> Result<f64> {
    let mut rng = suite_stream(seed, Suite::Lemma1);
    let mut worst = f64::NEG_INFINITY;
    for i in 0..n {
        // Every other instance uses an exact model, the rest a perturbed one.
        let eps = if i % 2 == 0 { 0.0 } else { 0.1 };
        let (mdp, model, p1, p2) = tabular::random_lemma_instance(eps, &mut rng)?;
        let rep = tabular::check_lemma1(&mdp, &model, &p1, &p2)?;
        worst = worst.max(rep.max_violation);
        if rep.max_violation > LEMMA1_TOLERANCE {
            failures.push(Failure {
                suite: Suite::Lemma1,
                index: i,
                detail: serde_json::json!({
                    "mdp": to_value(&mdp), "model": to_value(&model),
                    "policy1": to_value(&p1), "policy2": to_value(&p2),
                    "max_violation": rep.max_violation,
                }),
            });
        }
    }
    Ok(worst)
}

pub struct Theorem1Summary {
    pub exact_holds: usize,
    pub perturbed_holds: usize,
    pub assertable: usize,
    pub histogram: Vec<HistogramBin>,
}

fn residual_bins() -> Vec<HistogramBin> {
    let edges = [0.0, 1e-12, 1e-6, 1e-4, 1e-3, 1e-2, 1e-1, f64::INFINITY];
    edges
        .windows(2)
        .map(|w| HistogramBin {
            lower: w[0],
            upper: w[1],
            count: 0,
            holds: 0,
        })
        .collect()
}

fn bound_failure(index: usize, inst: &BoundInstance, rep: &tabular::BoundReport) -> Failure {
    Failure {
        suite: Suite::Theorem1,
        index,
        detail: serde_json::json!({ "instance": to_value(inst), "report": to_value(rep) }),
    }
}

/// `n` instances with an exact model (always asserted) and `n` with a model
/// perturbed by up to [`MAX_PERTURBATION`] (asserted below the residual
/// threshold, tabulated otherwise).
pub fn run_theorem1(n: usize, seed: u64, failures: &mut Vec<Failure>) -> Result<Theorem1Summary> {
    let mut rng = suite_stream(seed, Suite::Theorem1);
    let mut s = Theorem1Summary {
        exact_holds: 0,
        perturbed_holds: 0,
        assertable: 0,
        histogram: residual_bins(),
    };
    for i in 0..n {
        let inst = tabular::random_bound_instance(0.0, &mut rng)?;
        let rep = inst.check()?;
        if rep.holds() {
            s.exact_holds += 1;
        } else {
            failures.push(bound_failure(i, &inst, &rep));
        }
    }
    for i in 0..n {
        let inst = tabular::random_bound_instance(MAX_PERTURBATION, &mut rng)?;
        let rep = inst.check()?;
        let holds = rep.holds();
        s.perturbed_holds += holds as usize;
        let r = rep.assumption_residual;
        if let Some(bin) = s.histogram.iter_mut().find(|b| r >= b.lower && r < b.upper) {
            bin.count += 1;
            bin.holds += holds as usize;
        }
        if r <= RESIDUAL_THRESHOLD {
            s.assertable += 1;
            if !holds {
                failures.push(bound_failure(n + i, &inst, &rep));
            }
        }
    }
    Ok(s)
}

/// A random monotone instance: half use weights from the inverse-shift law,
/// half arbitrary sorted weights.
pub fn proposition1_instance(rng: &mut Rng, use_law: bool) -> Result<(Vec<(f64, f64)>, Vec<f64>)> {
    let k = rng.random_range(1..=20);
    let mut xr: Vec<f64> = (0..k).map(|_| rng.random::<f64>()).collect();
    let mut xp: Vec<f64> = (0..k).map(|_| rng.random::<f64>()).collect();
    xr.sort_by(|a, b| b.total_cmp(a));
    xp.sort_by(|a, b| b.total_cmp(a));
    let shifts: Vec<(f64, f64)> = xr.into_iter().zip(xp).collect();
    let weights = if k == 1 {
        vec![1.0]
    } else if use_law {
        let hist: Vec<f64> = shifts[..k - 1].iter().map(|s| s.1).collect();
        let mut w = weighting::compute_historical_weights(&hist, SHIFT_FLOOR)?;
        w.push(weighting::compute_current_weight(&w, DEFAULT_ALPHA)?);
        weighting::normalize(&mut w)?;
        w
    } else {
        let mut w: Vec<f64> = (0..k).map(|_| rng.random::<f64>()).collect();
        w.sort_by(f64::total_cmp);
        weighting::normalize(&mut w)?;
        w
    };
    Ok((shifts, weights))
}

pub fn run_proposition1(n: usize, seed: u64, failures: &mut Vec<Failure>) -> Result<f64> {
    let mut rng = suite_stream(seed, Suite::Proposition1);
    let mut min_margin = f64::INFINITY;
    for i in 0..n {
        let (shifts, weights) = proposition1_instance(&mut rng, i % 2 == 0)?;
        let gamma = rng.random_range(0.5..0.999);
        let states = rng.random_range(1..=10);
        let rep = tabular::check_proposition1(&shifts, &weights, gamma, states, 1.0)?;
        min_margin = min_margin.min(rep.margin);
        if rep.margin < -PROPOSITION1_TOLERANCE {
            failures.push(Failure {
                suite: Suite::Proposition1,
                index: i,
                detail: serde_json::json!({
                    "shifts": shifts, "weights": weights, "gamma": gamma,
                    "num_states": states, "report": to_value(&rep),
                }),
            });
        }
    }
    Ok(min_margin)
}

pub fn run_suite(suite: Suite, n: usize, seed: u64) -> Result<VerifyReport> {
    if n == 0 {
        return Err(AppError::Usage("instance count must be at least 1".into()));
    }
    let mut failures = Vec::new();
    let mut report = VerifyReport {
        suite,
        seed,
        instances: n,
        lemma1_max_violation: None,
        theorem1_exact_holds_count: None,
        theorem1_holds_count: None,
        theorem1_satisfaction_rate: None,
        theorem1_assertable: None,
        residual_histogram: Vec::new(),
        proposition1_margin_min: None,
        passed: false,
        failures: Vec::new(),
    };
    if suite.runs(Suite::Lemma1) {
        report.lemma1_max_violation = Some(run_lemma1(n, seed, &mut failures)?);
    }
    if suite.runs(Suite::Theorem1) {
        let s = run_theorem1(n, seed, &mut failures)?;
        report.theorem1_exact_holds_count = Some(s.exact_holds);
        report.theorem1_holds_count = Some(s.perturbed_holds);
        report.theorem1_satisfaction_rate = Some(s.perturbed_holds as f64 / n as f64);
        report.theorem1_assertable = Some(s.assertable);
        report.residual_histogram = s.histogram;
    }
    if suite.runs(Suite::Proposition1) {
        report.proposition1_margin_min = Some(run_proposition1(n, seed, &mut failures)?);
    }
    report.passed = failures.is_empty();
    report.failures = failures;
    Ok(report)
}
