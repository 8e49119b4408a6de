//! Probabilistic ensemble dynamics model.
//!
//! Each member maps a standardized `(state, action)` input to a diagonal
//! Gaussian over `(next_state - state, reward)` and is trained by Gaussian
//! maximum likelihood:
//!
//! `L = sum_n (mu_n - y_n)^T Sigma_n^-1 (mu_n - y_n) + log det Sigma_n`

use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)] // shadowed by inherent f64 methods when std is linked
use num_traits::Float;
use rand::{Rng, RngCore};

use crate::linalg::Matrix;
use crate::nn::{AdamState, Mlp};
use crate::policy::{GaussianHead, Policy, VarianceBounds};
use crate::replay::{PolicyId, ReplayBuffer, Subset, Transition, WeightMap};
use crate::rng;
use crate::{Error, Result};

/// Running per-feature mean and standard deviation (Welford).
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RunningNormalizer {
    pub count: u64,
    pub mean: Vec<f64>,
    pub m2: Vec<f64>,
}

impl RunningNormalizer {
    const MIN_STD: f64 = 1e-6;

    pub fn new(dim: usize) -> Self {
        Self {
            count: 0,
            mean: vec![0.0; dim],
            m2: vec![0.0; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn update(&mut self, x: &[f64]) {
        self.count += 1;
        let n = self.count as f64;
        for ((m, s), &v) in self.mean.iter_mut().zip(self.m2.iter_mut()).zip(x) {
            let d = v - *m;
            *m += d / n;
            *s += d * (v - *m);
        }
    }

    pub fn std(&self, k: usize) -> f64 {
        if self.count < 2 {
            return 1.0;
        }
        (self.m2[k] / self.count as f64).sqrt().max(Self::MIN_STD)
    }

    pub fn normalize(&self, x: &mut [f64]) {
        for (k, v) in x.iter_mut().enumerate() {
            *v = (*v - self.mean[k]) / self.std(k);
        }
    }

    pub fn denormalize(&self, x: &mut [f64]) {
        for (k, v) in x.iter_mut().enumerate() {
            *v = *v * self.std(k) + self.mean[k];
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct EnsembleConfig {
    pub ensemble_size: usize,
    pub hidden_sizes: Vec<usize>,
    pub learning_rate: f64,
    pub batch_size: usize,
    /// Upper bound on gradient steps per member per training call.
    pub max_steps: usize,
    /// Gradient steps between holdout evaluations.
    pub eval_interval: usize,
    /// Evaluations without improvement before a member stops.
    pub patience: usize,
    pub holdout_size: usize,
    pub var_floor: f64,
    pub var_ceiling: f64,
}

impl Default for EnsembleConfig {
    fn default() -> Self {
        Self {
            ensemble_size: 7,
            hidden_sizes: vec![200, 200, 200],
            learning_rate: 3e-4,
            batch_size: 256,
            max_steps: 1000,
            eval_interval: 50,
            patience: 5,
            holdout_size: 1000,
            var_floor: crate::policy::DEFAULT_VAR_FLOOR,
            var_ceiling: crate::policy::DEFAULT_VAR_CEILING,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainingReport {
    pub steps_per_member: Vec<usize>,
    /// Mean per-sample holdout loss of each member after training.
    pub holdout_loss: Vec<f64>,
}

/// Predicted Gaussians for a batch (target space: delta-state then reward).
#[derive(Debug, Clone)]
pub struct MemberPrediction {
    pub mean: Matrix,
    pub log_var: Matrix,
}

#[derive(Debug, Clone)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EnsembleDynamicsModel {
    state_dim: usize,
    action_dim: usize,
    members: Vec<GaussianHead>,
    optimizers: Vec<AdamState>,
    pub normalizer: RunningNormalizer,
}

/// A model whose member-averaged mean prediction can be queried. Error
/// metrics are written against this so exact oracles can stand in.
pub trait DynamicsModel {
    /// Returns predicted next states and rewards.
    fn mean_prediction(&self, states: &Matrix, actions: &Matrix) -> Result<(Matrix, Vec<f64>)>;
}

impl EnsembleDynamicsModel {
    pub fn new<R: Rng + ?Sized>(
        state_dim: usize,
        action_dim: usize,
        config: &EnsembleConfig,
        rng: &mut R,
    ) -> Result<Self> {
        if config.ensemble_size == 0 {
            return Err(Error::precondition("ensemble needs at least one member"));
        }
        let bounds = VarianceBounds::new(config.var_floor, config.var_ceiling)?;
        let mut sizes = vec![state_dim + action_dim];
        sizes.extend_from_slice(&config.hidden_sizes);
        sizes.push(2 * (state_dim + 1));
        let mut members = Vec::with_capacity(config.ensemble_size);
        let mut optimizers = Vec::with_capacity(config.ensemble_size);
        for _ in 0..config.ensemble_size {
            let net = Mlp::new(&sizes, rng)?;
            optimizers.push(AdamState::new(net.num_params(), config.learning_rate));
            members.push(GaussianHead::new(net, bounds)?);
        }
        Ok(Self {
            state_dim,
            action_dim,
            members,
            optimizers,
            normalizer: RunningNormalizer::new(state_dim + action_dim),
        })
    }

    /// Rebuilds a model from member networks (checkpoint restore).
    pub fn from_parts(
        state_dim: usize,
        action_dim: usize,
        members: Vec<GaussianHead>,
        normalizer: RunningNormalizer,
        learning_rate: f64,
    ) -> Result<Self> {
        if members.is_empty() {
            return Err(Error::precondition("ensemble needs at least one member"));
        }
        for m in &members {
            if m.net.input_dim() != state_dim + action_dim {
                return Err(Error::dims(
                    "member input",
                    state_dim + action_dim,
                    m.net.input_dim(),
                ));
            }
            if m.out_dim() != state_dim + 1 {
                return Err(Error::dims("member output", state_dim + 1, m.out_dim()));
            }
        }
        if normalizer.dim() != state_dim + action_dim {
            return Err(Error::dims(
                "normalizer",
                state_dim + action_dim,
                normalizer.dim(),
            ));
        }
        let optimizers = members
            .iter()
            .map(|m| AdamState::new(m.net.num_params(), learning_rate))
            .collect();
        Ok(Self {
            state_dim,
            action_dim,
            members,
            optimizers,
            normalizer,
        })
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn action_dim(&self) -> usize {
        self.action_dim
    }

    pub fn ensemble_size(&self) -> usize {
        self.members.len()
    }

    pub fn members(&self) -> &[GaussianHead] {
        &self.members
    }

    pub fn members_mut(&mut self) -> &mut [GaussianHead] {
        &mut self.members
    }

    /// Feeds one real `(state, action)` pair into the input statistics.
    pub fn observe_input(&mut self, state: &[f64], action: &[f64]) {
        let mut x = Vec::with_capacity(state.len() + action.len());
        x.extend_from_slice(state);
        x.extend_from_slice(action);
        self.normalizer.update(&x);
    }

    /// Standardized network inputs for a batch.
    pub fn inputs(&self, states: &Matrix, actions: &Matrix) -> Result<Matrix> {
        if states.cols() != self.state_dim {
            return Err(Error::dims(
                "model state input",
                self.state_dim,
                states.cols(),
            ));
        }
        if actions.cols() != self.action_dim {
            return Err(Error::dims(
                "model action input",
                self.action_dim,
                actions.cols(),
            ));
        }
        let mut x = states.hstack(actions)?;
        for r in 0..x.rows() {
            self.normalizer.normalize(x.row_mut(r));
        }
        Ok(x)
    }

    fn batch_inputs(&self, batch: &[&Transition]) -> Result<(Matrix, Matrix)> {
        let s = Matrix::from_rows(self.state_dim, batch.iter().map(|t| t.state.as_slice()))?;
        let a = Matrix::from_rows(self.action_dim, batch.iter().map(|t| t.action.as_slice()))?;
        let x = self.inputs(&s, &a)?;
        let mut y = Matrix::zeros(batch.len(), self.state_dim + 1);
        for (r, t) in batch.iter().enumerate() {
            let row = y.row_mut(r);
            for k in 0..self.state_dim {
                row[k] = t.next_state[k] - t.state[k];
            }
            row[self.state_dim] = t.reward;
        }
        Ok((x, y))
    }

    pub fn member_prediction(&self, member: usize, inputs: &Matrix) -> Result<MemberPrediction> {
        let g = self.members[member].evaluate(inputs)?;
        Ok(MemberPrediction {
            mean: g.mean,
            log_var: g.log_var,
        })
    }

    /// Gaussian negative log-likelihood summed over the batch (constant
    /// terms dropped), for one member.
    pub fn model_loss(&self, member: usize, batch: &[&Transition]) -> Result<f64> {
        Ok(self.model_loss_and_grad(member, batch, false)?.0)
    }

    /// Loss and parameter gradient of [`Self::model_loss`].
    pub fn model_loss_grad(&self, member: usize, batch: &[&Transition]) -> Result<(f64, Vec<f64>)> {
        self.model_loss_and_grad(member, batch, true)
    }

    fn model_loss_and_grad(
        &self,
        member: usize,
        batch: &[&Transition],
        want_grad: bool,
    ) -> Result<(f64, Vec<f64>)> {
        if batch.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let (x, y) = self.batch_inputs(batch)?;
        let head = &self.members[member];
        let trace = head.net.forward_traced(&x)?;
        if let Some(row) = trace.output().first_non_finite_row() {
            return Err(Error::NonFinite {
                what: "model prediction",
                index: row,
            });
        }
        let g = head.split_output(trace.output());
        let d = self.state_dim + 1;
        let mut loss = 0.0;
        let mut grad_out = Matrix::zeros(batch.len(), 2 * d);
        for r in 0..batch.len() {
            let (mu, lv, dl, yr) = (
                g.mean.row(r),
                g.log_var.row(r),
                g.dlogvar_draw.row(r),
                y.row(r),
            );
            let go = grad_out.row_mut(r);
            for k in 0..d {
                let diff = mu[k] - yr[k];
                let inv_var = (-lv[k]).exp();
                let q = diff * diff * inv_var;
                loss += q + lv[k];
                go[k] = 2.0 * diff * inv_var;
                go[d + k] = (1.0 - q) * dl[k];
            }
        }
        if !loss.is_finite() {
            return Err(Error::NonFinite {
                what: "model loss",
                index: 0,
            });
        }
        if !want_grad {
            return Ok((loss, Vec::new()));
        }
        let mut grad = vec![0.0; head.net.num_params()];
        head.net.backward(&trace, &grad_out, &mut grad)?;
        Ok((loss, grad))
    }

    /// Trains every member on independently drawn weighted batches from the
    /// training split of `buffer`, with early stopping on a weighted
    /// holdout batch.
    pub fn train<R: Rng + ?Sized>(
        &mut self,
        buffer: &ReplayBuffer,
        weights: &WeightMap,
        config: &EnsembleConfig,
        rng: &mut R,
    ) -> Result<TrainingReport> {
        if buffer.is_empty() {
            return Err(Error::EmptyBuffer);
        }
        let b = self.members.len();
        let mut report = TrainingReport {
            steps_per_member: vec![0; b],
            holdout_loss: vec![f64::NAN; b],
        };
        if config.max_steps == 0 {
            return Ok(report);
        }
        let holdout: Vec<&Transition> =
            match buffer.sample_subset(weights, config.holdout_size.max(1), Subset::Holdout, rng) {
                Ok(h) => h,
                // Too little data for a holdout split yet: validate on training draws.
                Err(Error::ZeroWeights) => {
                    buffer.sample_subset(weights, config.holdout_size.max(1), Subset::All, rng)?
                }
                Err(e) => return Err(e),
            };
        let n_hold = holdout.len() as f64;
        let subset = if buffer.iter_subset(Subset::Train).next().is_some() {
            Subset::Train
        } else {
            Subset::All
        };
        let interval = config.eval_interval.max(1);
        for m in 0..b {
            self.optimizers[m].learning_rate = config.learning_rate;
            let mut best = self.model_loss(m, &holdout)? / n_hold;
            let mut best_params = self.members[m].net.params().to_vec();
            let mut stale = 0;
            let mut steps = 0;
            while steps < config.max_steps {
                let batch = buffer.sample_subset(weights, config.batch_size, subset, rng)?;
                let (_, mut grad) = self.model_loss_grad(m, &batch)?;
                let scale = 1.0 / batch.len() as f64;
                for g in &mut grad {
                    *g *= scale;
                }
                self.optimizers[m].step(self.members[m].net.params_mut(), &grad)?;
                steps += 1;
                if steps % interval == 0 || steps == config.max_steps {
                    let loss = self.model_loss(m, &holdout)? / n_hold;
                    if loss < best - 1e-4 * best.abs() {
                        best = loss;
                        best_params.copy_from_slice(self.members[m].net.params());
                        stale = 0;
                    } else {
                        stale += 1;
                        if stale >= config.patience {
                            break;
                        }
                    }
                }
            }
            self.members[m]
                .net
                .params_mut()
                .copy_from_slice(&best_params);
            report.steps_per_member[m] = steps;
            report.holdout_loss[m] = best;
        }
        Ok(report)
    }

    /// Samples one step: each row picks a uniformly random member and draws
    /// from its Gaussian. Returns next states and rewards.
    pub fn predict_batch(
        &self,
        states: &Matrix,
        actions: &Matrix,
        rng: &mut dyn RngCore,
    ) -> Result<(Matrix, Vec<f64>)> {
        let x = self.inputs(states, actions)?;
        let n = x.rows();
        let choice: Vec<usize> = (0..n)
            .map(|_| rng.random_range(0..self.members.len()))
            .collect();
        let mut next = states.clone();
        let mut rewards = vec![0.0; n];
        for m in 0..self.members.len() {
            let rows: Vec<usize> = (0..n).filter(|&r| choice[r] == m).collect();
            if rows.is_empty() {
                continue;
            }
            let sub = Matrix::from_rows(x.cols(), rows.iter().map(|&r| x.row(r)))?;
            let p = self.member_prediction(m, &sub)?;
            for (i, &r) in rows.iter().enumerate() {
                let (mu, lv) = (p.mean.row(i), p.log_var.row(i));
                let out = next.row_mut(r);
                for k in 0..self.state_dim {
                    out[k] += mu[k] + (0.5 * lv[k]).exp() * rng::standard_normal(rng);
                }
                rewards[r] = mu[self.state_dim]
                    + (0.5 * lv[self.state_dim]).exp() * rng::standard_normal(rng);
            }
        }
        if let Some(r) = next.first_non_finite_row() {
            return Err(Error::NonFinite {
                what: "model sample",
                index: r,
            });
        }
        if let Some(r) = rewards.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                what: "model sample",
                index: r,
            });
        }
        Ok((next, rewards))
    }

    pub fn predict(
        &self,
        state: &[f64],
        action: &[f64],
        rng: &mut dyn RngCore,
    ) -> Result<(Vec<f64>, f64)> {
        let s = Matrix::from_vec(1, state.len(), state.to_vec())?;
        let a = Matrix::from_vec(1, action.len(), action.to_vec())?;
        let (next, r) = self.predict_batch(&s, &a, rng)?;
        Ok((next.into_vec(), r[0]))
    }

    /// Branched rollouts from `initial_states` under `policy` for at most
    /// `horizon` steps; a trajectory stops early when `terminal` fires on
    /// its predicted next state.
    pub fn rollout<P, F>(
        &self,
        policy: &P,
        initial_states: &Matrix,
        horizon: usize,
        terminal: F,
        policy_id: PolicyId,
        rng: &mut dyn RngCore,
    ) -> Result<RolloutBatch>
    where
        P: Policy + ?Sized,
        F: Fn(&[f64]) -> bool,
    {
        if horizon == 0 {
            return Err(Error::precondition("rollout horizon must be at least one"));
        }
        let n = initial_states.rows();
        let mut trajectories: Vec<Vec<Transition>> =
            (0..n).map(|_| Vec::with_capacity(horizon)).collect();
        let mut active: Vec<usize> = (0..n).collect();
        let mut states = initial_states.clone();
        for _ in 0..horizon {
            if active.is_empty() {
                break;
            }
            let actions = policy.sample_actions(&states, rng)?;
            let (next, rewards) = self.predict_batch(&states, &actions, rng)?;
            let mut still = Vec::with_capacity(active.len());
            let mut keep_rows = Vec::with_capacity(active.len());
            for (i, &traj) in active.iter().enumerate() {
                let done = terminal(next.row(i));
                trajectories[traj].push(Transition {
                    state: states.row(i).to_vec(),
                    action: actions.row(i).to_vec(),
                    reward: rewards[i],
                    next_state: next.row(i).to_vec(),
                    done,
                    policy_id,
                });
                if !done {
                    still.push(traj);
                    keep_rows.push(i);
                }
            }
            states = Matrix::from_rows(self.state_dim, keep_rows.iter().map(|&i| next.row(i)))?;
            active = still;
        }
        Ok(RolloutBatch {
            trajectories,
            horizon,
        })
    }
}

impl DynamicsModel for EnsembleDynamicsModel {
    fn mean_prediction(&self, states: &Matrix, actions: &Matrix) -> Result<(Matrix, Vec<f64>)> {
        let x = self.inputs(states, actions)?;
        let n = x.rows();
        let mut delta = Matrix::zeros(n, self.state_dim);
        let mut rewards = vec![0.0; n];
        let inv_b = 1.0 / self.members.len() as f64;
        for m in 0..self.members.len() {
            let p = self.member_prediction(m, &x)?;
            for r in 0..n {
                let mu = p.mean.row(r);
                for (d, &v) in delta.row_mut(r).iter_mut().zip(mu) {
                    *d += inv_b * v;
                }
                rewards[r] += inv_b * mu[self.state_dim];
            }
        }
        let mut next = states.clone();
        for (o, d) in next.as_mut_slice().iter_mut().zip(delta.as_slice()) {
            *o += d;
        }
        Ok((next, rewards))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RolloutBatch {
    pub trajectories: Vec<Vec<Transition>>,
    pub horizon: usize,
}

impl RolloutBatch {
    pub fn num_transitions(&self) -> usize {
        self.trajectories.iter().map(Vec::len).sum()
    }

    pub fn into_transitions(self) -> impl Iterator<Item = Transition> {
        self.trajectories.into_iter().flatten()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    fn small_config() -> EnsembleConfig {
        EnsembleConfig {
            ensemble_size: 2,
            hidden_sizes: vec![8],
            ..Default::default()
        }
    }

    fn transition(s: f64, a: f64, ns: f64, r: f64) -> Transition {
        Transition {
            state: vec![s],
            action: vec![a],
            reward: r,
            next_state: vec![ns],
            done: false,
            policy_id: PolicyId(0),
        }
    }

    /// Single member whose mean output equals `bias` and whose raw
    /// log-variance is zero (unit variance).
    fn constant_model(mean_delta: f64, mean_reward: f64) -> EnsembleDynamicsModel {
        let cfg = EnsembleConfig {
            ensemble_size: 1,
            hidden_sizes: vec![],
            ..Default::default()
        };
        let mut m = EnsembleDynamicsModel::new(1, 1, &cfg, &mut stream(0, 0)).unwrap();
        let p = m.members_mut()[0].net.params_mut();
        for v in p.iter_mut() {
            *v = 0.0;
        }
        // Layout: W (2 x 4) then bias (4): [delta, reward, raw_lv_delta, raw_lv_reward].
        p[8] = mean_delta;
        p[9] = mean_reward;
        m
    }

    #[test]
    fn perfect_mean_with_unit_variance_has_zero_loss() {
        let m = constant_model(0.5, 1.0);
        let t = transition(0.0, 0.0, 0.5, 1.0);
        let l = m.model_loss(0, &[&t, &t]).unwrap();
        assert!(l.abs() < 1e-12);
    }

    #[test]
    fn unit_variance_error_of_two_costs_four() {
        let m = constant_model(0.0, 0.0);
        // delta target 2, reward target 0 -> (0 - 2)^2 / 1.
        let t = transition(1.0, 0.0, 3.0, 0.0);
        let l = m.model_loss(0, &[&t]).unwrap();
        assert!((l - 4.0).abs() < 1e-12);
    }

    #[test]
    fn loss_is_invariant_to_batch_order() {
        let m = EnsembleDynamicsModel::new(1, 1, &small_config(), &mut stream(3, 0)).unwrap();
        let ts: Vec<Transition> = (0..5)
            .map(|i| transition(i as f64 * 0.3, -0.2, i as f64, 1.0))
            .collect();
        let fwd: Vec<&Transition> = ts.iter().collect();
        let rev: Vec<&Transition> = ts.iter().rev().collect();
        let a = m.model_loss(1, &fwd).unwrap();
        let b = m.model_loss(1, &rev).unwrap();
        assert!((a - b).abs() < 1e-10 * a.abs().max(1.0));
    }

    #[test]
    fn empty_batch_is_an_error() {
        let m = constant_model(0.0, 0.0);
        assert_eq!(m.model_loss(0, &[]).unwrap_err(), Error::EmptyDataset);
    }

    #[test]
    fn normalizer_round_trip() {
        let mut n = RunningNormalizer::new(2);
        for i in 0..50 {
            n.update(&[i as f64, (i * i) as f64 * 0.01]);
        }
        let x = [3.7, -1.25];
        let mut y = x;
        n.normalize(&mut y);
        n.denormalize(&mut y);
        assert!((y[0] - x[0]).abs() < 1e-12 && (y[1] - x[1]).abs() < 1e-12);
    }

    #[test]
    fn zero_steps_leave_model_unchanged() {
        let mut m = EnsembleDynamicsModel::new(1, 1, &small_config(), &mut stream(3, 0)).unwrap();
        let before: Vec<Vec<f64>> = m
            .members()
            .iter()
            .map(|h| h.net.params().to_vec())
            .collect();
        let mut buf = ReplayBuffer::new(1, 1, 100).unwrap();
        for i in 0..20 {
            buf.push(transition(i as f64, 0.0, i as f64 + 1.0, 0.0))
                .unwrap();
        }
        let cfg = EnsembleConfig {
            max_steps: 0,
            ..small_config()
        };
        let w = buf.uniform_weights().unwrap();
        m.train(&buf, &w, &cfg, &mut stream(0, 1)).unwrap();
        let after: Vec<Vec<f64>> = m
            .members()
            .iter()
            .map(|h| h.net.params().to_vec())
            .collect();
        assert_eq!(before, after);
    }

    #[test]
    fn single_deterministic_member_predicts_its_mean() {
        let mut m = constant_model(0.25, -1.0);
        // Push the raw log-variance far negative: variance at the floor.
        let p = m.members_mut()[0].net.params_mut();
        p[10] = -1e9;
        p[11] = -1e9;
        let (s, r) = m.predict(&[1.0], &[0.0], &mut stream(0, 0)).unwrap();
        assert!((s[0] - 1.25).abs() < 1e-2);
        assert!((r + 1.0).abs() < 1e-2);
    }

    struct ZeroPolicy;
    impl Policy for ZeroPolicy {
        fn action_dim(&self) -> usize {
            1
        }
        fn act_with_noise(&self, states: &Matrix, _noise: &Matrix) -> Result<Matrix> {
            Ok(Matrix::zeros(states.rows(), 1))
        }
    }

    #[test]
    fn rollout_counts() {
        let m = constant_model(0.1, 0.0);
        let init = Matrix::from_vec(20, 1, vec![0.0; 20]).unwrap();
        let b = m
            .rollout(
                &ZeroPolicy,
                &init,
                5,
                |_| false,
                PolicyId(4),
                &mut stream(0, 0),
            )
            .unwrap();
        assert_eq!(b.num_transitions(), 100);
        assert!(b
            .trajectories
            .iter()
            .flatten()
            .all(|t| t.policy_id == PolicyId(4)));
        let b = m
            .rollout(
                &ZeroPolicy,
                &init,
                1,
                |_| false,
                PolicyId(4),
                &mut stream(0, 0),
            )
            .unwrap();
        assert_eq!(b.num_transitions(), 20);
        let b = m
            .rollout(
                &ZeroPolicy,
                &init,
                5,
                |_| true,
                PolicyId(4),
                &mut stream(0, 0),
            )
            .unwrap();
        assert!(b.trajectories.iter().all(|t| t.len() == 1 && t[0].done));
    }
}
