//! The model-based training loop: real interaction, policy snapshots,
//! mixture re-weighting, ensemble fitting, branched rollouts and SAC updates.

use alloc::boxed::Box;
use alloc::collections::BTreeMap;
use alloc::format;
use alloc::vec::Vec;

#[allow(unused_imports)] // shadowed by inherent f64 methods when std is linked
use num_traits::Float;

use crate::ensemble::{EnsembleConfig, EnsembleDynamicsModel};
use crate::env::{EnvName, Environment};
use crate::error::StageExt;
use crate::linalg::Matrix;
use crate::metrics::{self, ErrorNorm};
use crate::policy::{Policy, UniformRandomPolicy};
use crate::replay::{PolicyId, ReplayBuffer, Subset, Transition, WeightMap};
use crate::rng::{self, Rng};
use crate::sac::{LossReport, SacAgent, SacConfig};
use crate::weighting::{self, PolicyMixture, PolicySnapshot, ShiftFormula, DEFAULT_ALPHA};
use crate::{Error, Result};

/// Model rollout length as a function of the epoch.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum RolloutSchedule {
    Fixed(usize),
    /// `h = min(max(x + (e - a) / (b - a) * (y - x), x), y)`.
    Linear {
        a: f64,
        b: f64,
        x: f64,
        y: f64,
    },
}

impl Default for RolloutSchedule {
    fn default() -> Self {
        Self::Fixed(1)
    }
}

impl RolloutSchedule {
    pub fn validate(&self) -> Result<()> {
        match *self {
            Self::Fixed(h) if h >= 1 => Ok(()),
            Self::Fixed(_) => Err(Error::precondition(
                "rollout_schedule: fixed horizon must be at least 1",
            )),
            Self::Linear { a, b, x, y } => {
                if !(a < b) {
                    return Err(Error::precondition("rollout_schedule: needs a < b"));
                }
                if !(x <= y) || !x.is_finite() || !y.is_finite() {
                    return Err(Error::precondition("rollout_schedule: needs finite x <= y"));
                }
                Ok(())
            }
        }
    }

    pub fn horizon(&self, epoch: u64) -> usize {
        match *self {
            Self::Fixed(h) => h.max(1),
            Self::Linear { a, b, x, y } => {
                let e = epoch as f64;
                let h = (x + (e - a) / (b - a) * (y - x)).max(x).min(y);
                (h.floor() as usize).max(1)
            }
        }
    }
}

pub fn rollout_horizon(epoch: u64, schedule: &RolloutSchedule) -> usize {
    schedule.horizon(epoch)
}

/// How per-policy sampling weights are chosen each epoch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum WeightingMode {
    #[default]
    Pdml,
    Uniform,
    ExpDecay,
    TdPriority,
}

impl WeightingMode {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Pdml => "pdml",
            Self::Uniform => "uniform",
            Self::ExpDecay => "exp_decay",
            Self::TdPriority => "td_priority",
        }
    }
}

impl core::str::FromStr for WeightingMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pdml" => Ok(Self::Pdml),
            "uniform" => Ok(Self::Uniform),
            "exp_decay" => Ok(Self::ExpDecay),
            "td_priority" => Ok(Self::TdPriority),
            other => Err(Error::precondition(format!(
                "unknown weighting mode '{other}' (expected pdml, uniform, exp_decay or td_priority)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct TrainerConfig {
    pub env: EnvName,
    pub seed: u64,
    pub total_env_steps: u64,
    pub warmup_steps: u64,
    pub steps_per_epoch: u64,
    pub policy_updates_per_env_step: usize,
    pub model_rollouts_per_epoch: usize,
    pub rollout_batch: usize,
    pub rollout_schedule: RolloutSchedule,
    pub alpha: f64,
    pub weighting: WeightingMode,
    /// Age decay rate for [`WeightingMode::ExpDecay`].
    pub decay_rate: f64,
    pub shift_formula: ShiftFormula,
    /// Visited states used to estimate policy shifts.
    pub eval_states: usize,
    pub real_capacity: usize,
    pub model_capacity: usize,
    /// Fraction of each SAC batch drawn from real transitions.
    pub real_ratio: f64,
    pub eval_interval: u64,
    pub eval_episodes: usize,
    /// Fresh transitions used for the current-policy model error.
    pub error_samples: usize,
    pub error_norm: ErrorNorm,
    pub compounding_horizon: usize,
    pub compounding_trajectories: usize,
    /// Transitions per segment scored for [`WeightingMode::TdPriority`].
    pub td_subsample: usize,
    /// Carried in its own config section.
    #[cfg_attr(feature = "serde", serde(skip))]
    pub ensemble: EnsembleConfig,
    #[cfg_attr(feature = "serde", serde(skip))]
    pub sac: SacConfig,
}

impl Default for TrainerConfig {
    fn default() -> Self {
        Self {
            env: EnvName::Pendulum,
            seed: 0,
            total_env_steps: 30_000,
            warmup_steps: 5000,
            steps_per_epoch: 250,
            policy_updates_per_env_step: 20,
            model_rollouts_per_epoch: 1,
            rollout_batch: 400,
            rollout_schedule: RolloutSchedule::Fixed(1),
            alpha: DEFAULT_ALPHA,
            weighting: WeightingMode::Pdml,
            decay_rate: 0.98,
            shift_formula: ShiftFormula::ConsistentPinsker,
            eval_states: 1000,
            real_capacity: 1_000_000,
            model_capacity: 1_000_000,
            real_ratio: 0.05,
            eval_interval: 1000,
            eval_episodes: 10,
            error_samples: 1000,
            error_norm: ErrorNorm::Euclidean,
            compounding_horizon: 0,
            compounding_trajectories: 20,
            td_subsample: 64,
            ensemble: EnsembleConfig::default(),
            sac: SacConfig::default(),
        }
    }
}

fn field_error(field: &str, msg: &str) -> Error {
    Error::precondition(format!("{field}: {msg}"))
}

impl TrainerConfig {
    /// Checks every field, reporting the first offending one by name.
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("trainer.total_env_steps", self.total_env_steps),
            ("trainer.steps_per_epoch", self.steps_per_epoch),
            ("trainer.eval_interval", self.eval_interval),
            ("trainer.eval_states", self.eval_states as u64),
            ("trainer.real_capacity", self.real_capacity as u64),
            ("trainer.model_capacity", self.model_capacity as u64),
            ("trainer.rollout_batch", self.rollout_batch as u64),
            ("trainer.eval_episodes", self.eval_episodes as u64),
            ("trainer.error_samples", self.error_samples as u64),
            ("trainer.td_subsample", self.td_subsample as u64),
            ("ensemble.ensemble_size", self.ensemble.ensemble_size as u64),
            ("ensemble.batch_size", self.ensemble.batch_size as u64),
            ("ensemble.holdout_size", self.ensemble.holdout_size as u64),
            ("sac.batch_size", self.sac.batch_size as u64),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(field_error(name, "must be at least 1"));
            }
        }
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(field_error("trainer.alpha", "must be positive and finite"));
        }
        if !(self.decay_rate > 0.0 && self.decay_rate <= 1.0) {
            return Err(field_error("trainer.decay_rate", "must lie in (0, 1]"));
        }
        if !(0.0..=1.0).contains(&self.real_ratio) {
            return Err(field_error("trainer.real_ratio", "must lie in [0, 1]"));
        }
        self.rollout_schedule
            .validate()
            .map_err(|e| field_error("trainer.rollout_schedule", &format!("{e}")))?;
        let s = &self.sac;
        if !(s.gamma > 0.0 && s.gamma < 1.0) {
            return Err(field_error("sac.gamma", "must lie in (0, 1)"));
        }
        if !(s.tau > 0.0 && s.tau <= 1.0) {
            return Err(field_error("sac.tau", "must lie in (0, 1]"));
        }
        if !(s.initial_alpha > 0.0) {
            return Err(field_error("sac.initial_alpha", "must be positive"));
        }
        for (name, v) in [
            ("sac.actor_lr", s.actor_lr),
            ("sac.critic_lr", s.critic_lr),
            ("sac.alpha_lr", s.alpha_lr),
            ("ensemble.learning_rate", self.ensemble.learning_rate),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(field_error(name, "must be non-negative and finite"));
            }
        }
        crate::policy::VarianceBounds::new(self.ensemble.var_floor, self.ensemble.var_ceiling)
            .map_err(|_| {
                field_error(
                    "ensemble.var_floor",
                    "variance bounds need 0 < floor < 1 < ceiling",
                )
            })?;
        Ok(())
    }
}

/// Metrics gathered at an evaluation point.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct EvalReport {
    pub mean_return: f64,
    pub current_error: f64,
    pub overall_error: f64,
    pub compounding_error: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochReport {
    pub epoch: u64,
    pub env_step: u64,
    pub rollout_horizon: usize,
    pub model_transitions_added: usize,
    pub sac_updates: usize,
    /// Per-policy weights handed to the sampler this epoch.
    pub weights: WeightMap,
    /// Estimated shift of each historical policy (PDML mode only).
    pub shifts: Vec<f64>,
    pub model_holdout_loss: f64,
    pub mean_losses: LossReport,
    pub eval: Option<EvalReport>,
}

mod streams {
    pub const INIT: u64 = 1;
    pub const ENV: u64 = 2;
    pub const MODEL: u64 = 3;
    pub const ROLLOUT: u64 = 4;
    pub const SAC: u64 = 5;
    pub const METRICS: u64 = 6;
    pub const EVAL: u64 = 7;
    pub const WEIGHTS: u64 = 8;
}

/// Mean undiscounted return of deterministic-action episodes.
pub fn evaluate_policy<P: Policy + ?Sized>(
    policy: &P,
    env: &mut dyn Environment,
    n_episodes: usize,
    rng: &mut dyn rand::RngCore,
) -> Result<f64> {
    if n_episodes == 0 {
        return Err(Error::precondition("evaluation needs at least one episode"));
    }
    let dim = env.spec().state_dim;
    let mut total = 0.0;
    for _ in 0..n_episodes {
        let mut obs = env.reset(rng);
        loop {
            let s = Matrix::from_vec(1, dim, obs)?;
            let a = policy.deterministic_actions(&s)?.into_vec();
            let step = env.step(&a)?;
            total += step.reward;
            if step.done() {
                break;
            }
            obs = step.observation;
        }
    }
    Ok(total / n_episodes as f64)
}

/// Per-policy weights proportional to `max(mean_abs_td, floor)`.
pub fn td_weights_from_errors(mean_abs_td: &[(PolicyId, f64)], floor: f64) -> Result<WeightMap> {
    if mean_abs_td.is_empty() {
        return Err(Error::EmptyBuffer);
    }
    let mut w: Vec<f64> = mean_abs_td.iter().map(|&(_, e)| e.max(floor)).collect();
    weighting::normalize(&mut w)?;
    Ok(mean_abs_td.iter().map(|&(id, _)| id).zip(w).collect())
}

pub const TD_FLOOR: f64 = 1e-6;

/// TD-error priority baseline: each stored policy is weighted by the mean
/// absolute one-step TD error of a uniform subsample of its segment.
pub fn td_priority_weights(
    buffer: &ReplayBuffer,
    agent: &SacAgent,
    subsample: usize,
    rng: &mut Rng,
) -> Result<WeightMap> {
    use rand::Rng as _;
    if buffer.is_empty() {
        return Err(Error::EmptyBuffer);
    }
    let mut means = Vec::new();
    for id in buffer.policy_ids() {
        let seg: Vec<&Transition> = buffer.segment(id).map(|(_, t)| t).collect();
        let batch: Vec<&Transition> = (0..subsample.max(1))
            .map(|_| seg[rng.random_range(0..seg.len())])
            .collect();
        let mut noise = Matrix::zeros(batch.len(), agent.action_dim());
        for v in noise.as_mut_slice() {
            *v = rng::standard_normal(rng);
        }
        let td = agent.td_errors(&batch, &noise)?;
        means.push((
            id,
            td.iter().map(|e| e.abs()).sum::<f64>() / td.len() as f64,
        ));
    }
    td_weights_from_errors(&means, TD_FLOOR)
}

/// Full training state. Advance with [`Trainer::warmup`] then
/// [`Trainer::run_epoch`] until [`Trainer::finished`].
pub struct Trainer {
    pub config: TrainerConfig,
    env: Box<dyn Environment>,
    eval_env: Box<dyn Environment>,
    obs: Vec<f64>,
    pub real: ReplayBuffer,
    pub model_buffer: ReplayBuffer,
    pub agent: SacAgent,
    pub model: EnsembleDynamicsModel,
    pub mixture: PolicyMixture,
    env_step: u64,
    epoch: u64,
    sac_updates: u64,
    last_weights: WeightMap,
    env_rng: Rng,
    model_rng: Rng,
    rollout_rng: Rng,
    sac_rng: Rng,
    metrics_rng: Rng,
    weights_rng: Rng,
}

impl Trainer {
    pub fn new(config: TrainerConfig) -> Result<Self> {
        config.validate()?;
        let env = config.env.make();
        let spec = env.spec().clone();
        let mut init = rng::stream(config.seed, streams::INIT);
        let agent = SacAgent::new(
            spec.state_dim,
            &spec.action_low,
            &spec.action_high,
            config.sac.clone(),
            &mut init,
        )?;
        let model = EnsembleDynamicsModel::new(
            spec.state_dim,
            spec.action_dim,
            &config.ensemble,
            &mut init,
        )?;
        let mut mixture = PolicyMixture::new(config.alpha)?;
        mixture.formula = config.shift_formula;
        mixture.push(PolicySnapshot::warmup(&spec.action_low, &spec.action_high)?)?;
        let mut env_rng = rng::stream(config.seed, streams::ENV);
        let mut env = env;
        let obs = env.reset(&mut env_rng);
        Ok(Self {
            eval_env: config.env.make(),
            real: ReplayBuffer::new(spec.state_dim, spec.action_dim, config.real_capacity)?,
            model_buffer: ReplayBuffer::new(
                spec.state_dim,
                spec.action_dim,
                config.model_capacity,
            )?,
            model_rng: rng::stream(config.seed, streams::MODEL),
            rollout_rng: rng::stream(config.seed, streams::ROLLOUT),
            sac_rng: rng::stream(config.seed, streams::SAC),
            metrics_rng: rng::stream(config.seed, streams::METRICS),
            weights_rng: rng::stream(config.seed, streams::WEIGHTS),
            env,
            obs,
            agent,
            model,
            mixture,
            env_step: 0,
            epoch: 0,
            sac_updates: 0,
            last_weights: WeightMap::new(),
            env_rng,
            config,
        })
    }

    pub fn env_step(&self) -> u64 {
        self.env_step
    }

    pub fn epoch(&self) -> u64 {
        self.epoch
    }

    pub fn sac_updates(&self) -> u64 {
        self.sac_updates
    }

    pub fn environment(&self) -> &dyn Environment {
        &*self.env
    }

    /// Weights most recently handed to the sampler.
    pub fn last_weights(&self) -> &WeightMap {
        &self.last_weights
    }

    pub fn finished(&self) -> bool {
        self.env_step >= self.config.total_env_steps
    }

    pub fn warmup_done(&self) -> bool {
        self.env_step >= self.config.warmup_steps.min(self.config.total_env_steps)
    }

    fn record(&mut self, action: Vec<f64>, id: PolicyId) -> Result<()> {
        let step = self.env.step(&action)?;
        self.model.observe_input(&self.obs, &action);
        let next = step.observation.clone();
        self.real.push(Transition {
            state: core::mem::take(&mut self.obs),
            action,
            reward: step.reward,
            next_state: next.clone(),
            done: step.terminated,
            policy_id: id,
        })?;
        self.obs = if step.done() {
            self.env.reset(&mut self.env_rng)
        } else {
            next
        };
        self.env_step += 1;
        Ok(())
    }

    /// Uniform-random collection tagged with the warm-up policy id.
    pub fn warmup(&mut self) -> Result<()> {
        let spec = self.env.spec().clone();
        let random = UniformRandomPolicy {
            low: spec.action_low.clone(),
            high: spec.action_high.clone(),
        };
        let target = self.config.warmup_steps.min(self.config.total_env_steps);
        while self.env_step < target {
            let a = random.sample(&mut self.env_rng);
            self.record(a, PolicyId(0)).stage("warm-up collection")?;
        }
        Ok(())
    }

    fn choose_weights(&mut self) -> Result<(WeightMap, Vec<f64>)> {
        match self.config.weighting {
            WeightingMode::Pdml => {
                let eval = self
                    .real
                    .sample_uniform(self.config.eval_states, &mut self.weights_rng)?;
                let states = Matrix::from_rows(
                    self.real.state_dim(),
                    eval.iter().map(|t| t.state.as_slice()),
                )?;
                self.mixture.adjust(&states)?;
                Ok((self.mixture.weight_map(), self.mixture.shifts().to_vec()))
            }
            WeightingMode::Uniform => {
                let w = self.real.uniform_weights()?;
                self.apply_to_mixture(&w)?;
                Ok((w, Vec::new()))
            }
            WeightingMode::ExpDecay => {
                let w = weighting::exponential_decay_weights(
                    self.mixture.len(),
                    self.config.decay_rate,
                    self.config.alpha,
                )?;
                self.mixture.set_weights(w)?;
                Ok((self.mixture.weight_map(), Vec::new()))
            }
            WeightingMode::TdPriority => {
                let w = td_priority_weights(
                    &self.real,
                    &self.agent,
                    self.config.td_subsample,
                    &mut self.weights_rng,
                )?;
                self.apply_to_mixture(&w)?;
                Ok((w, Vec::new()))
            }
        }
    }

    /// Mirrors a sampler weight map into the mixture (policies that were
    /// evicted from the buffer get zero).
    fn apply_to_mixture(&mut self, w: &WeightMap) -> Result<()> {
        let v: Vec<f64> = self
            .mixture
            .snapshots()
            .iter()
            .map(|s| w.get(&s.id).copied().unwrap_or(0.0))
            .collect();
        self.mixture.set_weights(v)
    }

    fn sac_batch(&mut self) -> Result<Vec<Transition>> {
        let n = self.config.sac.batch_size;
        let n_real = if self.model_buffer.is_empty() {
            n
        } else {
            ((n as f64) * self.config.real_ratio).round() as usize
        };
        let mut batch: Vec<Transition> = Vec::with_capacity(n);
        if n_real > 0 {
            batch.extend(
                self.real
                    .sample_uniform(n_real, &mut self.sac_rng)?
                    .into_iter()
                    .cloned(),
            );
        }
        if n > n_real {
            batch.extend(
                self.model_buffer
                    .sample_uniform(n - n_real, &mut self.sac_rng)?
                    .into_iter()
                    .cloned(),
            );
        }
        Ok(batch)
    }

    /// One pass of the pipeline; performs warm-up first if still pending.
    pub fn run_epoch(&mut self) -> Result<EpochReport> {
        if !self.warmup_done() {
            self.warmup()?;
        }
        if self.finished() {
            return Err(Error::precondition(
                "training already reached total_env_steps",
            ));
        }
        self.epoch += 1;
        let id = PolicyId(self.mixture.len() as u32);
        let start_step = self.env_step;
        let collect = self
            .config
            .steps_per_epoch
            .min(self.config.total_env_steps - self.env_step);
        let state_dim = self.real.state_dim();
        for _ in 0..collect {
            let s = Matrix::from_vec(1, state_dim, self.obs.clone())?;
            let a = self.agent.sample_actions(&s, &mut self.env_rng)?.into_vec();
            self.record(a, id).stage("real collection")?;
        }

        self.mixture
            .push(self.agent.snapshot_policy(id, self.env_step))
            .stage("policy snapshot")?;
        let (weights, shifts) = self.choose_weights().stage("mixture weighting")?;
        self.last_weights = weights.clone();

        let training = self
            .model
            .train(
                &self.real,
                &weights,
                &self.config.ensemble,
                &mut self.model_rng,
            )
            .stage("model training")?;
        let finite: Vec<f64> = training
            .holdout_loss
            .iter()
            .copied()
            .filter(|v| v.is_finite())
            .collect();
        let model_holdout_loss = if finite.is_empty() {
            f64::NAN
        } else {
            finite.iter().sum::<f64>() / finite.len() as f64
        };

        let horizon = self.config.rollout_schedule.horizon(self.epoch);
        let mut added = 0;
        for _ in 0..self.config.model_rollouts_per_epoch {
            let init = self
                .real
                .sample_initial_states(&weights, self.config.rollout_batch, &mut self.rollout_rng)
                .stage("rollout start states")?;
            let env = &*self.env;
            let batch = self
                .model
                .rollout(
                    &self.agent,
                    &init,
                    horizon,
                    |s| env.is_terminal(s),
                    id,
                    &mut self.rollout_rng,
                )
                .stage("model rollout")?;
            added += batch.num_transitions();
            for t in batch.into_transitions() {
                self.model_buffer.push(t)?;
            }
        }

        let updates = collect as usize * self.config.policy_updates_per_env_step;
        let mut acc = LossReport::default();
        for _ in 0..updates {
            let batch = self.sac_batch().stage("policy batch")?;
            let refs: Vec<&Transition> = batch.iter().collect();
            let l = self
                .agent
                .update(&refs, &mut self.sac_rng)
                .stage("policy update")?;
            acc.critic_loss += l.critic_loss;
            acc.actor_loss += l.actor_loss;
            acc.alpha_loss += l.alpha_loss;
            acc.mean_log_prob += l.mean_log_prob;
        }
        self.sac_updates += updates as u64;
        if updates > 0 {
            let k = updates as f64;
            acc.critic_loss /= k;
            acc.actor_loss /= k;
            acc.alpha_loss /= k;
            acc.mean_log_prob /= k;
        }
        acc.alpha = self.agent.alpha();

        let interval = self.config.eval_interval;
        let crossed = self.env_step / interval > start_step / interval;
        let eval = if crossed || self.finished() {
            Some(self.evaluate().stage("evaluation")?)
        } else {
            None
        };

        Ok(EpochReport {
            epoch: self.epoch,
            env_step: self.env_step,
            rollout_horizon: horizon,
            model_transitions_added: added,
            sac_updates: updates,
            weights,
            shifts,
            model_holdout_loss,
            mean_losses: acc,
            eval,
        })
    }

    /// Policy return on fixed start states plus model error metrics.
    pub fn evaluate(&mut self) -> Result<EvalReport> {
        let mut eval_rng = rng::stream(self.config.seed, streams::EVAL);
        let mean_return = evaluate_policy(
            &self.agent,
            &mut *self.eval_env,
            self.config.eval_episodes,
            &mut eval_rng,
        )?;
        let current_error = metrics::current_error(
            &self.model,
            &mut *self.eval_env,
            &self.agent,
            self.config.error_samples,
            self.config.error_norm,
            &mut self.metrics_rng,
        )?;
        let holdout: Vec<&Transition> = self.real.iter_subset(Subset::Holdout).collect();
        let overall_error = if holdout.is_empty() {
            f64::NAN
        } else {
            metrics::overall_error(&self.model, &holdout, self.config.error_norm)?
        };
        let compounding_error = if self.config.compounding_horizon > 0 {
            metrics::compounding_error(
                &self.model,
                &*self.eval_env,
                &self.agent,
                self.config.compounding_horizon,
                self.config.compounding_trajectories,
                self.config.error_norm,
                &mut self.metrics_rng,
            )?
        } else {
            Vec::new()
        };
        Ok(EvalReport {
            mean_return,
            current_error,
            overall_error,
            compounding_error,
        })
    }

    /// Runs warm-up and all epochs, passing each report to `on_epoch`.
    pub fn run<F>(&mut self, mut on_epoch: F) -> Result<()>
    where
        F: FnMut(&Trainer, &EpochReport) -> Result<()>,
    {
        self.warmup()?;
        while !self.finished() {
            let report = self.run_epoch()?;
            on_epoch(self, &report)?;
        }
        Ok(())
    }

    /// Counts of stored transitions per policy in the real buffer.
    pub fn real_counts(&self) -> BTreeMap<PolicyId, usize> {
        self.real.counts_per_policy()
    }
}
