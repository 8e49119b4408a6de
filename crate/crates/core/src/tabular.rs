//! Exact finite-MDP evaluation of discounted occupancies and of every term of
//! the performance-gap bound for a policy mixture.
//!
//! Occupancies are normalized (`sum rho = 1`), so `value` is the expected
//! per-step reward under the discounted visitation. Multiply by
//! `1 / (1 - gamma)` to get the usual discounted return.

use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)] // shadowed by inherent f64 methods when std is linked
use num_traits::Float;
use rand::Rng;

use crate::linalg::solve;
use crate::{Error, Result};

const STOCHASTIC_TOL: f64 = 1e-12;
const TV_TOL: f64 = 1e-8;

fn check_distribution(p: &[f64], tol: f64, what: &str) -> Result<()> {
    if p.iter().any(|&x| !(x >= 0.0) || !x.is_finite()) {
        return Err(Error::precondition(alloc::format!(
            "{what} has a negative or non-finite entry"
        )));
    }
    let s: f64 = p.iter().sum();
    if (s - 1.0).abs() > tol {
        return Err(Error::precondition(alloc::format!(
            "{what} sums to {s}, not 1"
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TabularMdp {
    pub num_states: usize,
    pub num_actions: usize,
    /// `T[s][a][s']`, flattened.
    pub transitions: Vec<f64>,
    /// `r[s][a]`, flattened.
    pub rewards: Vec<f64>,
    pub r_max: f64,
    pub gamma: f64,
    pub initial: Vec<f64>,
}

impl TabularMdp {
    pub fn new(
        num_states: usize,
        num_actions: usize,
        transitions: Vec<f64>,
        rewards: Vec<f64>,
        r_max: f64,
        gamma: f64,
        initial: Vec<f64>,
    ) -> Result<Self> {
        let mdp = Self {
            num_states,
            num_actions,
            transitions,
            rewards,
            r_max,
            gamma,
            initial,
        };
        mdp.validate()?;
        Ok(mdp)
    }

    pub fn validate(&self) -> Result<()> {
        let (s, a) = (self.num_states, self.num_actions);
        if s == 0 || a == 0 {
            return Err(Error::precondition(
                "an MDP needs at least one state and action",
            ));
        }
        if self.transitions.len() != s * a * s {
            return Err(Error::dims(
                "transition tensor",
                s * a * s,
                self.transitions.len(),
            ));
        }
        if self.rewards.len() != s * a {
            return Err(Error::dims("reward table", s * a, self.rewards.len()));
        }
        if self.initial.len() != s {
            return Err(Error::dims("initial distribution", s, self.initial.len()));
        }
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(Error::precondition("discount must lie in (0, 1)"));
        }
        if self.rewards.iter().any(|&r| !(r >= 0.0 && r <= self.r_max)) {
            return Err(Error::precondition("rewards must lie in [0, r_max]"));
        }
        for row in self.transitions.chunks(s) {
            check_distribution(row, STOCHASTIC_TOL, "transition row")?;
        }
        check_distribution(&self.initial, STOCHASTIC_TOL, "initial distribution")
    }

    #[inline]
    pub fn t(&self, s: usize, a: usize, next: usize) -> f64 {
        self.transitions[(s * self.num_actions + a) * self.num_states + next]
    }

    #[inline]
    pub fn r(&self, s: usize, a: usize) -> f64 {
        self.rewards[s * self.num_actions + a]
    }

    /// Same MDP with dynamics `(1 - eps) T + eps * uniform`.
    pub fn perturbed(&self, eps: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&eps) {
            return Err(Error::precondition("perturbation must lie in [0, 1]"));
        }
        let u = 1.0 / self.num_states as f64;
        let mut m = self.clone();
        for p in &mut m.transitions {
            *p = (1.0 - eps) * *p + eps * u;
        }
        Ok(m)
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TabularPolicy {
    pub num_states: usize,
    pub num_actions: usize,
    /// `pi[s][a]`, flattened.
    pub probs: Vec<f64>,
}

impl TabularPolicy {
    pub fn new(num_states: usize, num_actions: usize, probs: Vec<f64>) -> Result<Self> {
        if probs.len() != num_states * num_actions {
            return Err(Error::dims(
                "policy table",
                num_states * num_actions,
                probs.len(),
            ));
        }
        for row in probs.chunks(num_actions) {
            check_distribution(row, STOCHASTIC_TOL, "policy row")?;
        }
        Ok(Self {
            num_states,
            num_actions,
            probs,
        })
    }

    #[inline]
    pub fn p(&self, s: usize, a: usize) -> f64 {
        self.probs[s * self.num_actions + a]
    }

    pub fn row(&self, s: usize) -> &[f64] {
        &self.probs[s * self.num_actions..(s + 1) * self.num_actions]
    }
}

fn check_pair(mdp: &TabularMdp, pi: &TabularPolicy) -> Result<()> {
    if pi.num_states != mdp.num_states || pi.num_actions != mdp.num_actions {
        return Err(Error::dims(
            "policy shape",
            mdp.num_states * mdp.num_actions,
            pi.probs.len(),
        ));
    }
    Ok(())
}

/// Discounted state visitation `v` solving `v = (1 - gamma) v0 + gamma P_pi^T v`.
pub fn state_occupancy(mdp: &TabularMdp, pi: &TabularPolicy) -> Result<Vec<f64>> {
    check_pair(mdp, pi)?;
    let n = mdp.num_states;
    let mut a = vec![0.0; n * n];
    for s in 0..n {
        for next in 0..n {
            let p: f64 = (0..mdp.num_actions)
                .map(|act| pi.p(s, act) * mdp.t(s, act, next))
                .sum();
            // Row `next`, column `s` of (I - gamma P^T).
            a[next * n + s] -= mdp.gamma * p;
        }
        a[s * n + s] += 1.0;
    }
    let b: Vec<f64> = mdp.initial.iter().map(|v| (1.0 - mdp.gamma) * v).collect();
    solve(n, a, b)
}

/// Normalized discounted state-action occupancy `rho(s, a) = v(s) pi(a|s)`.
pub fn occupancy(mdp: &TabularMdp, pi: &TabularPolicy) -> Result<Vec<f64>> {
    let v = state_occupancy(mdp, pi)?;
    let na = mdp.num_actions;
    let mut rho = vec![0.0; mdp.num_states * na];
    for (s, vs) in v.iter().enumerate() {
        for a in 0..na {
            rho[s * na + a] = vs * pi.p(s, a);
        }
    }
    Ok(rho)
}

/// `J = sum rho r` under the normalized convention.
pub fn value(mdp: &TabularMdp, pi: &TabularPolicy) -> Result<f64> {
    let rho = occupancy(mdp, pi)?;
    Ok(rho.iter().zip(&mdp.rewards).map(|(p, r)| p * r).sum())
}

/// `0.5 * sum |p - q|` for probability vectors.
pub fn tv_distance(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::dims("tv operands", p.len(), q.len()));
    }
    check_distribution(p, TV_TOL, "first tv operand")?;
    check_distribution(q, TV_TOL, "second tv operand")?;
    Ok(tv_unchecked(p, q))
}

fn tv_unchecked(p: &[f64], q: &[f64]) -> f64 {
    0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Lemma1Report {
    /// `max_s' (lhs - rhs)`; non-positive when the inequality holds.
    pub max_violation: f64,
    pub lhs: Vec<f64>,
    pub rhs: Vec<f64>,
}

/// Per-state visitation gap between `(pi1, T)` and `(pi2, T_hat)` against
/// `gamma E_rho1 |T - T_hat| + gamma TV(rho1, rho2)`.
pub fn check_lemma1(
    mdp: &TabularMdp,
    model: &TabularMdp,
    pi1: &TabularPolicy,
    pi2: &TabularPolicy,
) -> Result<Lemma1Report> {
    same_shape(mdp, model)?;
    let v1 = state_occupancy(mdp, pi1)?;
    let v2 = state_occupancy(model, pi2)?;
    let rho1 = occupancy(mdp, pi1)?;
    let rho2 = occupancy(model, pi2)?;
    let tv = tv_unchecked(&rho1, &rho2);
    let (ns, na) = (mdp.num_states, mdp.num_actions);
    let mut lhs = vec![0.0; ns];
    let mut rhs = vec![0.0; ns];
    let mut worst = f64::NEG_INFINITY;
    for next in 0..ns {
        let mut model_gap = 0.0;
        for s in 0..ns {
            for a in 0..na {
                model_gap += rho1[s * na + a] * (mdp.t(s, a, next) - model.t(s, a, next)).abs();
            }
        }
        lhs[next] = (v1[next] - v2[next]).abs();
        rhs[next] = mdp.gamma * model_gap + mdp.gamma * tv;
        worst = worst.max(lhs[next] - rhs[next]);
    }
    Ok(Lemma1Report {
        max_violation: worst,
        lhs,
        rhs,
    })
}

fn same_shape(mdp: &TabularMdp, model: &TabularMdp) -> Result<()> {
    if mdp.num_states != model.num_states || mdp.num_actions != model.num_actions {
        return Err(Error::dims(
            "model shape",
            mdp.transitions.len(),
            model.transitions.len(),
        ));
    }
    if mdp.initial != model.initial {
        return Err(Error::precondition(
            "real and model MDPs must share the initial distribution",
        ));
    }
    if mdp.gamma != model.gamma || mdp.rewards != model.rewards {
        return Err(Error::precondition(
            "real and model MDPs must share rewards and discount",
        ));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct MixtureTerm {
    pub weight: f64,
    /// TV between the current and this policy's state-action occupancies.
    pub xi_rho: f64,
    /// Expected per-state TV between action distributions under the
    /// mixture's model visitation.
    pub xi_pi: f64,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct BoundReport {
    /// `J(pi, T) - J(pi, T_hat)`.
    pub lhs: f64,
    pub term1: f64,
    pub term2: f64,
    pub per_policy: Vec<MixtureTerm>,
    pub term3: f64,
    pub rhs: f64,
    /// TV between the mixture's model and real occupancies.
    pub assumption_residual: f64,
}

impl BoundReport {
    pub fn holds(&self) -> bool {
        self.lhs <= self.rhs
    }
}

/// Evaluates every term of the bound for current policy `pi` and mixture
/// `(policies, weights)`.
pub fn check_theorem1(
    mdp: &TabularMdp,
    model: &TabularMdp,
    pi: &TabularPolicy,
    policies: &[TabularPolicy],
    weights: &[f64],
) -> Result<BoundReport> {
    same_shape(mdp, model)?;
    if policies.is_empty() || policies.len() != weights.len() {
        return Err(Error::dims(
            "mixture weights",
            policies.len(),
            weights.len(),
        ));
    }
    let sum: f64 = weights.iter().sum();
    if weights.iter().any(|&w| !(w >= 0.0)) || (sum - 1.0).abs() > 1e-9 {
        return Err(Error::WeightNormalization(sum));
    }
    let (ns, na) = (mdp.num_states, mdp.num_actions);
    let gamma = mdp.gamma;
    let r_max = mdp.r_max;

    let rho_t = occupancy(mdp, pi)?;
    let rho_model = occupancy(model, pi)?;
    let lhs: f64 = rho_t
        .iter()
        .zip(&rho_model)
        .zip(&mdp.rewards)
        .map(|((a, b), r)| (a - b) * r)
        .sum();

    let mut model_tv = 0.0;
    for s in 0..ns {
        for a in 0..na {
            let off = (s * na + a) * ns;
            model_tv += rho_t[s * na + a]
                * tv_unchecked(
                    &mdp.transitions[off..off + ns],
                    &model.transitions[off..off + ns],
                );
        }
    }
    let term1 = 2.0 * gamma * r_max * model_tv;

    let mut mix_model = vec![0.0; ns * na];
    let mut mix_real = vec![0.0; ns * na];
    let mut real_occ = Vec::with_capacity(policies.len());
    for (p, &w) in policies.iter().zip(weights) {
        let rm = occupancy(model, p)?;
        let rr = occupancy(mdp, p)?;
        for k in 0..ns * na {
            mix_model[k] += w * rm[k];
            mix_real[k] += w * rr[k];
        }
        real_occ.push(rr);
    }
    let mix_state: Vec<f64> = (0..ns)
        .map(|s| mix_model[s * na..(s + 1) * na].iter().sum())
        .collect();

    let vol = ns as f64;
    let mut per_policy = Vec::with_capacity(policies.len());
    let mut term2 = 0.0;
    for ((p, &w), rr) in policies.iter().zip(weights).zip(&real_occ) {
        let xi_rho = tv_unchecked(&rho_t, rr);
        let xi_pi: f64 = (0..ns)
            .map(|s| mix_state[s] * tv_unchecked(pi.row(s), p.row(s)))
            .sum();
        term2 += w * (gamma * vol * xi_rho + 2.0 * xi_pi);
        per_policy.push(MixtureTerm {
            weight: w,
            xi_rho,
            xi_pi,
        });
    }
    term2 *= r_max;
    let term3 = 2.0 * r_max * tv_unchecked(&mix_model, &rho_model);
    Ok(BoundReport {
        lhs,
        term1,
        term2,
        per_policy,
        term3,
        rhs: term1 + term2 + term3,
        assumption_residual: tv_unchecked(&mix_model, &mix_real),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Proposition1Report {
    pub holds: bool,
    pub weighted: f64,
    pub uniform: f64,
    /// `uniform - weighted`.
    pub margin: f64,
}

/// Compares the weighted shift term against uniform weighting when shifts
/// fall and weights rise with policy age order.
pub fn check_proposition1(
    shifts: &[(f64, f64)],
    weights: &[f64],
    gamma: f64,
    num_states: usize,
    r_max: f64,
) -> Result<Proposition1Report> {
    if shifts.is_empty() || shifts.len() != weights.len() {
        return Err(Error::dims(
            "proposition weights",
            shifts.len(),
            weights.len(),
        ));
    }
    if shifts
        .windows(2)
        .any(|w| w[1].0 > w[0].0 || w[1].1 > w[0].1)
    {
        return Err(Error::precondition("shifts must be non-increasing"));
    }
    if weights.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::precondition("weights must be non-decreasing"));
    }
    let sum: f64 = weights.iter().sum();
    if weights[0] < 0.0 || (sum - 1.0).abs() > 1e-9 {
        return Err(Error::WeightNormalization(sum));
    }
    let vol = num_states as f64;
    let inv_k = 1.0 / shifts.len() as f64;
    let mut weighted = 0.0;
    let mut uniform = 0.0;
    for (&(xr, xp), &w) in shifts.iter().zip(weights) {
        let c = gamma * vol * xr + 2.0 * xp;
        weighted += w * c;
        uniform += inv_k * c;
    }
    weighted *= r_max;
    uniform *= r_max;
    let margin = uniform - weighted;
    Ok(Proposition1Report {
        holds: weighted <= uniform + 1e-12 * uniform.abs().max(1.0),
        weighted,
        uniform,
        margin,
    })
}

fn random_simplex<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<f64> {
    // Normalized exponentials: uniform on the simplex.
    let mut v: Vec<f64> = (0..n).map(|_| -(1.0 - rng.random::<f64>()).ln()).collect();
    let s: f64 = v.iter().sum();
    for x in &mut v {
        *x /= s;
    }
    v
}

pub fn random_mdp<R: Rng + ?Sized>(
    num_states: usize,
    num_actions: usize,
    gamma: f64,
    rng: &mut R,
) -> Result<TabularMdp> {
    let mut transitions = Vec::with_capacity(num_states * num_actions * num_states);
    for _ in 0..num_states * num_actions {
        transitions.extend(random_simplex(num_states, rng));
    }
    let rewards = (0..num_states * num_actions)
        .map(|_| rng.random::<f64>())
        .collect();
    let initial = random_simplex(num_states, rng);
    TabularMdp::new(
        num_states,
        num_actions,
        transitions,
        rewards,
        1.0,
        gamma,
        initial,
    )
}

pub fn random_policy<R: Rng + ?Sized>(
    num_states: usize,
    num_actions: usize,
    rng: &mut R,
) -> TabularPolicy {
    let mut probs = Vec::with_capacity(num_states * num_actions);
    for _ in 0..num_states {
        probs.extend(random_simplex(num_actions, rng));
    }
    TabularPolicy {
        num_states,
        num_actions,
        probs,
    }
}

/// `(1 - lambda) base + lambda other`, row by row.
pub fn blend_policies(base: &TabularPolicy, other: &TabularPolicy, lambda: f64) -> TabularPolicy {
    TabularPolicy {
        num_states: base.num_states,
        num_actions: base.num_actions,
        probs: base
            .probs
            .iter()
            .zip(&other.probs)
            .map(|(a, b)| (1.0 - lambda) * a + lambda * b)
            .collect(),
    }
}

/// A random bound-check instance: the real MDP, an `eps`-perturbed model,
/// and a mixture of 2 to 5 policies whose last member is the current one.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct BoundInstance {
    pub mdp: TabularMdp,
    pub model: TabularMdp,
    pub policies: Vec<TabularPolicy>,
    pub weights: Vec<f64>,
    pub eps: f64,
}

impl BoundInstance {
    pub fn current(&self) -> &TabularPolicy {
        self.policies
            .last()
            .expect("instances hold at least one policy")
    }

    pub fn check(&self) -> Result<BoundReport> {
        check_theorem1(
            &self.mdp,
            &self.model,
            self.current(),
            &self.policies,
            &self.weights,
        )
    }
}

/// Historical policies drift towards the current one, so that older
/// policies are further from it, mirroring an improving learner.
pub fn random_bound_instance<R: Rng + ?Sized>(max_eps: f64, rng: &mut R) -> Result<BoundInstance> {
    let ns = rng.random_range(2..=6);
    let na = rng.random_range(2..=3);
    let gamma = rng.random_range(0.5..=0.95);
    let mdp = random_mdp(ns, na, gamma, rng)?;
    let eps = if max_eps > 0.0 {
        rng.random_range(0.0..=max_eps)
    } else {
        0.0
    };
    let model = mdp.perturbed(eps)?;
    let k = rng.random_range(2..=5);
    let current = random_policy(ns, na, rng);
    let mut policies = Vec::with_capacity(k);
    for i in 0..k - 1 {
        let far = random_policy(ns, na, rng);
        let lambda = (k - 1 - i) as f64 / k as f64;
        policies.push(blend_policies(&current, &far, lambda));
    }
    policies.push(current);
    let weights = random_simplex(k, rng);
    Ok(BoundInstance {
        mdp,
        model,
        policies,
        weights,
        eps,
    })
}

/// Random `(S, A, gamma)` within the suite limits, two policies and a model
/// perturbed by up to `max_eps`.
pub fn random_lemma_instance<R: Rng + ?Sized>(
    max_eps: f64,
    rng: &mut R,
) -> Result<(TabularMdp, TabularMdp, TabularPolicy, TabularPolicy)> {
    let ns = rng.random_range(1..=6);
    let na = rng.random_range(1..=3);
    let gamma = rng.random_range(0.05..=0.95);
    let mdp = random_mdp(ns, na, gamma, rng)?;
    let eps = if max_eps > 0.0 {
        rng.random_range(0.0..=max_eps)
    } else {
        0.0
    };
    let model = mdp.perturbed(eps)?;
    let p1 = random_policy(ns, na, rng);
    let p2 = random_policy(ns, na, rng);
    Ok((mdp, model, p1, p2))
}
