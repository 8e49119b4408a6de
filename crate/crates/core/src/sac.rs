//! Soft actor-critic with clipped double-Q targets and a learned entropy
//! temperature.

use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)] // shadowed by inherent f64 methods when std is linked
use num_traits::Float;
use rand::Rng;

use crate::linalg::Matrix;
use crate::nn::{AdamState, Mlp};
use crate::policy::{ActionSquash, GaussianBatch, GaussianHead, Policy, VarianceBounds};
use crate::replay::{PolicyId, Transition};
use crate::rng;
use crate::weighting::{PolicyHead, PolicySnapshot};
use crate::{Error, Result};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct SacConfig {
    pub gamma: f64,
    pub tau: f64,
    pub actor_lr: f64,
    pub critic_lr: f64,
    pub alpha_lr: f64,
    pub initial_alpha: f64,
    /// `None` means minus the action dimension.
    pub target_entropy: Option<f64>,
    pub hidden_sizes: Vec<usize>,
    pub batch_size: usize,
}

impl Default for SacConfig {
    fn default() -> Self {
        Self {
            gamma: 0.99,
            tau: 5e-3,
            actor_lr: 3e-4,
            critic_lr: 3e-4,
            alpha_lr: 3e-4,
            initial_alpha: 1.0,
            target_entropy: None,
            hidden_sizes: vec![256, 256],
            batch_size: 256,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossReport {
    pub critic_loss: f64,
    pub actor_loss: f64,
    pub alpha_loss: f64,
    pub alpha: f64,
    pub mean_log_prob: f64,
}

/// Value and parameter gradients of the critic objective.
#[derive(Debug, Clone)]
pub struct CriticObjective {
    pub loss: f64,
    pub grad_q1: Vec<f64>,
    pub grad_q2: Vec<f64>,
}

/// Value, actor gradient and the per-row log-probabilities of the sampled
/// actions.
#[derive(Debug, Clone)]
pub struct ActorObjective {
    pub loss: f64,
    pub grad: Vec<f64>,
    pub log_probs: Vec<f64>,
}

#[derive(Debug, Clone)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SacAgent {
    state_dim: usize,
    action_dim: usize,
    pub actor: GaussianHead,
    pub q1: Mlp,
    pub q2: Mlp,
    pub q1_target: Mlp,
    pub q2_target: Mlp,
    pub log_alpha: f64,
    pub squash: ActionSquash,
    pub config: SacConfig,
    actor_opt: AdamState,
    q1_opt: AdamState,
    q2_opt: AdamState,
    alpha_opt: AdamState,
}

struct Sampled {
    gaussian: GaussianBatch,
    trace: crate::nn::Trace,
    pre: Matrix,
    actions: Matrix,
    log_probs: Vec<f64>,
}

impl SacAgent {
    pub fn new<R: Rng + ?Sized>(
        state_dim: usize,
        action_low: &[f64],
        action_high: &[f64],
        config: SacConfig,
        rng: &mut R,
    ) -> Result<Self> {
        let action_dim = action_low.len();
        if action_dim == 0 || action_high.len() != action_dim {
            return Err(Error::dims("action bounds", action_dim, action_high.len()));
        }
        if action_low.iter().zip(action_high).any(|(l, h)| !(h > l)) {
            return Err(Error::precondition(
                "action box needs low < high in every dimension",
            ));
        }
        if !(config.initial_alpha > 0.0) {
            return Err(Error::precondition("entropy temperature must be positive"));
        }
        let mut actor_sizes = vec![state_dim];
        actor_sizes.extend_from_slice(&config.hidden_sizes);
        actor_sizes.push(2 * action_dim);
        let mut critic_sizes = vec![state_dim + action_dim];
        critic_sizes.extend_from_slice(&config.hidden_sizes);
        critic_sizes.push(1);
        let actor = GaussianHead::new(Mlp::new(&actor_sizes, rng)?, VarianceBounds::default())?;
        let q1 = Mlp::new(&critic_sizes, rng)?;
        let q2 = Mlp::new(&critic_sizes, rng)?;
        Ok(Self {
            state_dim,
            action_dim,
            actor_opt: AdamState::new(actor.net.num_params(), config.actor_lr),
            q1_opt: AdamState::new(q1.num_params(), config.critic_lr),
            q2_opt: AdamState::new(q2.num_params(), config.critic_lr),
            alpha_opt: AdamState::new(1, config.alpha_lr),
            q1_target: q1.clone(),
            q2_target: q2.clone(),
            actor,
            q1,
            q2,
            log_alpha: config.initial_alpha.ln(),
            squash: ActionSquash::from_box(action_low, action_high),
            config,
        })
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn alpha(&self) -> f64 {
        self.log_alpha.exp()
    }

    pub fn target_entropy(&self) -> f64 {
        self.config
            .target_entropy
            .unwrap_or(-(self.action_dim as f64))
    }

    /// Resets optimizer moments, e.g. after restoring parameters.
    pub fn reset_optimizers(&mut self) {
        self.actor_opt = AdamState::new(self.actor.net.num_params(), self.config.actor_lr);
        self.q1_opt = AdamState::new(self.q1.num_params(), self.config.critic_lr);
        self.q2_opt = AdamState::new(self.q2.num_params(), self.config.critic_lr);
        self.alpha_opt = AdamState::new(1, self.config.alpha_lr);
    }

    pub fn act<R: Rng + ?Sized>(
        &self,
        state: &[f64],
        deterministic: bool,
        rng: &mut R,
    ) -> Result<Vec<f64>> {
        let s = Matrix::from_vec(1, state.len(), state.to_vec())?;
        let mut noise = Matrix::zeros(1, self.action_dim);
        if !deterministic {
            for v in noise.as_mut_slice() {
                *v = rng::standard_normal(rng);
            }
        }
        Ok(self.act_with_noise(&s, &noise)?.into_vec())
    }

    /// Frozen copy of the actor; its distribution is the pre-squash Gaussian.
    pub fn snapshot_policy(&self, id: PolicyId, env_step: u64) -> PolicySnapshot {
        PolicySnapshot {
            id,
            created_at_env_step: env_step,
            head: PolicyHead::Actor(self.actor.clone()),
        }
    }

    /// Log-density of a squashed action strictly inside the box.
    pub fn log_prob(&self, state: &[f64], action: &[f64]) -> Result<f64> {
        let s = Matrix::from_vec(1, state.len(), state.to_vec())?;
        let g = self.actor.evaluate(&s)?;
        let mut lp = 0.0;
        for k in 0..self.action_dim {
            let y = (action[k] - self.squash.center[k]) / self.squash.scale[k];
            let u = y.atanh();
            let lv = g.log_var.get(0, k);
            let z = (u - g.mean.get(0, k)) * (-0.5 * lv).exp();
            lp += -0.5 * (z * z + lv + LN_2PI) - self.squash.log_jacobian(k, u);
        }
        Ok(lp)
    }

    fn sample(&self, states: &Matrix, noise: &Matrix) -> Result<Sampled> {
        if noise.rows() != states.rows() || noise.cols() != self.action_dim {
            return Err(Error::dims("action noise", self.action_dim, noise.cols()));
        }
        let trace = self.actor.net.forward_traced(states)?;
        if let Some(row) = trace.output().first_non_finite_row() {
            return Err(Error::NonFinite {
                what: "actor output",
                index: row,
            });
        }
        let gaussian = self.actor.split_output(trace.output());
        let n = states.rows();
        let mut pre = Matrix::zeros(n, self.action_dim);
        let mut actions = Matrix::zeros(n, self.action_dim);
        let mut log_probs = vec![0.0; n];
        for r in 0..n {
            for k in 0..self.action_dim {
                let e = noise.get(r, k);
                let lv = gaussian.log_var.get(r, k);
                let u = gaussian.mean.get(r, k) + (0.5 * lv).exp() * e;
                pre.set(r, k, u);
                actions.set(r, k, self.squash.apply(k, u));
                log_probs[r] += -0.5 * (e * e + lv + LN_2PI) - self.squash.log_jacobian(k, u);
            }
        }
        Ok(Sampled {
            gaussian,
            trace,
            pre,
            actions,
            log_probs,
        })
    }

    fn batch_matrices(&self, batch: &[&Transition]) -> Result<(Matrix, Matrix, Matrix)> {
        let s = Matrix::from_rows(self.state_dim, batch.iter().map(|t| t.state.as_slice()))?;
        let a = Matrix::from_rows(self.action_dim, batch.iter().map(|t| t.action.as_slice()))?;
        let ns = Matrix::from_rows(
            self.state_dim,
            batch.iter().map(|t| t.next_state.as_slice()),
        )?;
        Ok((s, a, ns))
    }

    fn soft_targets(
        &self,
        batch: &[&Transition],
        next_states: &Matrix,
        next_noise: &Matrix,
    ) -> Result<Vec<f64>> {
        let next = self.sample(next_states, next_noise)?;
        let next_in = next_states.hstack(&next.actions)?;
        let t1 = self.q1_target.forward(&next_in)?;
        let t2 = self.q2_target.forward(&next_in)?;
        let alpha = self.alpha();
        Ok(batch
            .iter()
            .enumerate()
            .map(|(r, t)| {
                let soft = t1.get(r, 0).min(t2.get(r, 0)) - alpha * next.log_probs[r];
                t.reward
                    + if t.done {
                        0.0
                    } else {
                        self.config.gamma * soft
                    }
            })
            .collect())
    }

    /// One-step TD errors `y - Q1(s, a)` against the soft targets.
    pub fn td_errors(&self, batch: &[&Transition], next_noise: &Matrix) -> Result<Vec<f64>> {
        if batch.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let (s, a, ns) = self.batch_matrices(batch)?;
        let targets = self.soft_targets(batch, &ns, next_noise)?;
        let q = self.q1.forward(&s.hstack(&a)?)?;
        Ok(targets
            .iter()
            .enumerate()
            .map(|(r, y)| y - q.get(r, 0))
            .collect())
    }

    /// Mean over the batch of `sum_i (Q_i(s, a) - y)^2` where the target is
    /// `y = r + gamma (1 - done) (min_i Qtarg_i(s', a') - alpha log pi(a'|s'))`
    /// with `a'` drawn from the actor using `next_noise`.
    pub fn critic_objective(
        &self,
        batch: &[&Transition],
        next_noise: &Matrix,
    ) -> Result<CriticObjective> {
        if batch.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let n = batch.len();
        let (s, a, ns) = self.batch_matrices(batch)?;
        let targets = self.soft_targets(batch, &ns, next_noise)?;
        let inputs = s.hstack(&a)?;
        let inv_n = 1.0 / n as f64;
        let mut loss = 0.0;
        let mut grads = Vec::with_capacity(2);
        for q in [&self.q1, &self.q2] {
            let (l, g) = q.grad(&inputs, |out| {
                let mut go = Matrix::zeros(n, 1);
                let mut l = 0.0;
                for r in 0..n {
                    let d = out.get(r, 0) - targets[r];
                    l += d * d * inv_n;
                    go.set(r, 0, 2.0 * d * inv_n);
                }
                (l, go)
            })?;
            loss += l;
            grads.push(g);
        }
        let grad_q2 = grads.pop().unwrap_or_default();
        let grad_q1 = grads.pop().unwrap_or_default();
        Ok(CriticObjective {
            loss,
            grad_q1,
            grad_q2,
        })
    }

    /// Mean over the batch of `alpha log pi(a|s) - min_i Q_i(s, a)` with
    /// reparameterized `a = squash(mu + sigma * noise)`.
    pub fn actor_objective(&self, states: &Matrix, noise: &Matrix) -> Result<ActorObjective> {
        let n = states.rows();
        if n == 0 {
            return Err(Error::EmptyDataset);
        }
        let smp = self.sample(states, noise)?;
        let inputs = states.hstack(&smp.actions)?;
        let tr1 = self.q1.forward_traced(&inputs)?;
        let tr2 = self.q2.forward_traced(&inputs)?;
        let alpha = self.alpha();
        let inv_n = 1.0 / n as f64;
        let mut sel1 = Matrix::zeros(n, 1);
        let mut sel2 = Matrix::zeros(n, 1);
        let mut loss = 0.0;
        for r in 0..n {
            let (v1, v2) = (tr1.output().get(r, 0), tr2.output().get(r, 0));
            if v1 <= v2 {
                sel1.set(r, 0, 1.0);
            } else {
                sel2.set(r, 0, 1.0);
            }
            loss += inv_n * (alpha * smp.log_probs[r] - v1.min(v2));
        }
        if !loss.is_finite() {
            return Err(Error::NonFinite {
                what: "actor loss",
                index: 0,
            });
        }
        let dq1 = self.q1.input_gradient(&tr1, &sel1)?;
        let dq2 = self.q2.input_gradient(&tr2, &sel2)?;
        let d = self.action_dim;
        let mut grad_out = Matrix::zeros(n, 2 * d);
        for r in 0..n {
            for k in 0..d {
                let u = smp.pre.get(r, k);
                let t = u.tanh();
                let dq_da = dq1.get(r, self.state_dim + k) + dq2.get(r, self.state_dim + k);
                let dl_du =
                    inv_n * (alpha * 2.0 * t - dq_da * self.squash.scale[k] * (1.0 - t * t));
                let e = noise.get(r, k);
                let sigma = (0.5 * smp.gaussian.log_var.get(r, k)).exp();
                let dl_dlv = -0.5 * alpha * inv_n + dl_du * 0.5 * sigma * e;
                grad_out.set(r, k, dl_du);
                grad_out.set(r, d + k, dl_dlv * smp.gaussian.dlogvar_draw.get(r, k));
            }
        }
        let mut grad = vec![0.0; self.actor.net.num_params()];
        self.actor.net.backward(&smp.trace, &grad_out, &mut grad)?;
        Ok(ActorObjective {
            loss,
            grad,
            log_probs: smp.log_probs,
        })
    }

    /// One gradient step on critics, actor and temperature, then soft target
    /// updates.
    pub fn update<R: Rng + ?Sized>(
        &mut self,
        batch: &[&Transition],
        rng: &mut R,
    ) -> Result<LossReport> {
        if batch.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let n = batch.len();
        let mut next_noise = Matrix::zeros(n, self.action_dim);
        let mut noise = Matrix::zeros(n, self.action_dim);
        for v in next_noise
            .as_mut_slice()
            .iter_mut()
            .chain(noise.as_mut_slice())
        {
            *v = rng::standard_normal(rng);
        }
        let critic = self.critic_objective(batch, &next_noise)?;
        self.q1_opt.step(self.q1.params_mut(), &critic.grad_q1)?;
        self.q2_opt.step(self.q2.params_mut(), &critic.grad_q2)?;

        let states = Matrix::from_rows(self.state_dim, batch.iter().map(|t| t.state.as_slice()))?;
        let actor = self.actor_objective(&states, &noise)?;
        self.actor_opt
            .step(self.actor.net.params_mut(), &actor.grad)?;

        let mean_lp = actor.log_probs.iter().sum::<f64>() / n as f64;
        let gap = mean_lp + self.target_entropy();
        let mut la = [self.log_alpha];
        self.alpha_opt.step(&mut la, &[-gap])?;
        self.log_alpha = la[0];

        self.soft_update_targets();
        Ok(LossReport {
            critic_loss: critic.loss,
            actor_loss: actor.loss,
            alpha_loss: -self.log_alpha * gap,
            alpha: self.alpha(),
            mean_log_prob: mean_lp,
        })
    }

    pub fn soft_update_targets(&mut self) {
        let tau = self.config.tau;
        self.q1_target.soft_update_from(&self.q1, tau);
        self.q2_target.soft_update_from(&self.q2, tau);
    }

    /// Sets every learning rate, including ones already held by optimizers.
    pub fn set_learning_rates(&mut self, actor: f64, critic: f64, alpha: f64) {
        self.config.actor_lr = actor;
        self.config.critic_lr = critic;
        self.config.alpha_lr = alpha;
        self.actor_opt.learning_rate = actor;
        self.q1_opt.learning_rate = critic;
        self.q2_opt.learning_rate = critic;
        self.alpha_opt.learning_rate = alpha;
    }
}

impl Policy for SacAgent {
    fn action_dim(&self) -> usize {
        self.action_dim
    }

    fn act_with_noise(&self, states: &Matrix, noise: &Matrix) -> Result<Matrix> {
        if states.cols() != self.state_dim {
            return Err(Error::dims(
                "policy state input",
                self.state_dim,
                states.cols(),
            ));
        }
        Ok(self.sample(states, noise)?.actions)
    }
}
