//! Native continuous-control environments with exactly known dynamics.
//!
//! Each environment keeps its observation as its internal state, so
//! [`Environment::step`] is literally [`Environment::transition`] applied to
//! the current observation. That pure function doubles as the ground-truth
//! oracle for model-error metrics.
//!
//! | name          | obs | act | horizon | terminates        |
//! |---------------|-----|-----|---------|-------------------|
//! | `pendulum`    | 3   | 1   | 200     | never             |
//! | `point_mass`  | 4   | 2   | 150     | within 0.05 of goal |
//! | `mountain_car`| 2   | 1   | 300     | position >= 0.45  |

use alloc::boxed::Box;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;
use core::fmt;
use core::str::FromStr;

#[allow(unused_imports)] // shadowed by inherent f64 methods when std is linked
use num_traits::Float;
use rand::{Rng, RngCore};

use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct EnvSpec {
    pub name: &'static str,
    pub state_dim: usize,
    pub action_dim: usize,
    pub action_low: Vec<f64>,
    pub action_high: Vec<f64>,
    pub max_episode_steps: usize,
}

impl EnvSpec {
    pub fn action_range(&self) -> Vec<f64> {
        self.action_low
            .iter()
            .zip(&self.action_high)
            .map(|(l, h)| h - l)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Step {
    pub observation: Vec<f64>,
    pub reward: f64,
    /// Termination predicate fired (no bootstrapping past this step).
    pub terminated: bool,
    /// Episode step limit reached.
    pub truncated: bool,
}

impl Step {
    pub fn done(&self) -> bool {
        self.terminated || self.truncated
    }
}

pub trait Environment: Send {
    fn spec(&self) -> &EnvSpec;

    /// Deterministic dynamics `(obs, action) -> (next_obs, reward)`.
    /// Actions are clamped into the box first.
    fn transition(&self, obs: &[f64], action: &[f64]) -> (Vec<f64>, f64);

    fn is_terminal(&self, obs: &[f64]) -> bool;

    /// Draws an observation from the initial-state distribution.
    fn sample_initial(&self, rng: &mut dyn RngCore) -> Vec<f64>;

    fn observation(&self) -> &[f64];

    fn steps(&self) -> usize;

    /// Overwrites the current observation and zeroes the step counter.
    fn set_state(&mut self, obs: &[f64]);

    fn clone_box(&self) -> Box<dyn Environment>;

    fn reset(&mut self, rng: &mut dyn RngCore) -> Vec<f64> {
        let obs = self.sample_initial(rng);
        self.set_state(&obs);
        obs
    }

    fn step(&mut self, action: &[f64]) -> Result<Step>;
}

fn clamp_action(action: &[f64], spec: &EnvSpec) -> Vec<f64> {
    action
        .iter()
        .zip(spec.action_low.iter().zip(&spec.action_high))
        .map(|(&a, (&l, &h))| a.clamp(l, h))
        .collect()
}

fn check_action(action: &[f64], spec: &EnvSpec) -> Result<()> {
    if action.len() != spec.action_dim {
        return Err(Error::dims("action", spec.action_dim, action.len()));
    }
    if let Some(i) = action.iter().position(|a| !a.is_finite()) {
        return Err(Error::NonFinite {
            what: "action",
            index: i,
        });
    }
    Ok(())
}

macro_rules! impl_stateful {
    ($t:ty) => {
        impl $t {
            fn step_impl(&mut self, action: &[f64]) -> Result<Step> {
                check_action(action, &self.spec)?;
                let (next, reward) = self.transition(&self.obs, action);
                self.obs = next;
                self.steps += 1;
                let terminated = self.is_terminal(&self.obs);
                Ok(Step {
                    observation: self.obs.clone(),
                    reward,
                    terminated,
                    truncated: !terminated && self.steps >= self.spec.max_episode_steps,
                })
            }
        }
    };
}

/// Inverted pendulum swing-up. Observation `(cos th, sin th, th_dot)` with
/// `th = 0` upright. Forward-Euler step with `dt = 0.05`, `g = 10`, `m = l = 1`:
///
/// ```text
/// th'     = th + dt * th_dot
/// th_dot' = clip(th_dot + dt * (3g/(2l) sin th + 3/(m l^2) u), -8, 8)
/// reward  = -(norm(th)^2 + 0.1 th_dot^2 + 0.001 u^2)
/// ```
#[derive(Debug, Clone)]
pub struct Pendulum {
    spec: EnvSpec,
    obs: Vec<f64>,
    steps: usize,
}

impl Pendulum {
    pub const MAX_SPEED: f64 = 8.0;
    pub const MAX_TORQUE: f64 = 2.0;
    pub const DT: f64 = 0.05;
    pub const G: f64 = 10.0;
    pub const M: f64 = 1.0;
    pub const L: f64 = 1.0;

    pub fn new() -> Self {
        Self {
            spec: EnvSpec {
                name: "pendulum",
                state_dim: 3,
                action_dim: 1,
                action_low: vec![-Self::MAX_TORQUE],
                action_high: vec![Self::MAX_TORQUE],
                max_episode_steps: 200,
            },
            obs: vec![1.0, 0.0, 0.0],
            steps: 0,
        }
    }

    pub fn observe(theta: f64, theta_dot: f64) -> Vec<f64> {
        vec![theta.cos(), theta.sin(), theta_dot]
    }
}

impl Default for Pendulum {
    fn default() -> Self {
        Self::new()
    }
}

impl_stateful!(Pendulum);

impl Environment for Pendulum {
    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    fn transition(&self, obs: &[f64], action: &[f64]) -> (Vec<f64>, f64) {
        let u = action[0].clamp(-Self::MAX_TORQUE, Self::MAX_TORQUE);
        let th = obs[1].atan2(obs[0]);
        let th_dot = obs[2];
        let reward = -(th * th + 0.1 * th_dot * th_dot + 0.001 * u * u);
        let acc =
            3.0 * Self::G / (2.0 * Self::L) * th.sin() + 3.0 / (Self::M * Self::L * Self::L) * u;
        let new_th = th + Self::DT * th_dot;
        let new_th_dot = (th_dot + Self::DT * acc).clamp(-Self::MAX_SPEED, Self::MAX_SPEED);
        (Self::observe(new_th, new_th_dot), reward)
    }

    fn is_terminal(&self, _obs: &[f64]) -> bool {
        false
    }

    fn sample_initial(&self, rng: &mut dyn RngCore) -> Vec<f64> {
        let th = rng.random_range(-PI..=PI);
        let th_dot = rng.random_range(-1.0..=1.0);
        Self::observe(th, th_dot)
    }

    fn observation(&self) -> &[f64] {
        &self.obs
    }

    fn steps(&self) -> usize {
        self.steps
    }

    fn set_state(&mut self, obs: &[f64]) {
        self.obs = obs.to_vec();
        self.steps = 0;
    }

    fn clone_box(&self) -> Box<dyn Environment> {
        Box::new(self.clone())
    }

    fn step(&mut self, action: &[f64]) -> Result<Step> {
        self.step_impl(action)
    }
}

/// Damped planar point mass driven toward the origin. Observation
/// `(x, y, vx, vy)`, action `(ax, ay)` in `[-1, 1]^2`, `dt = 0.1`:
///
/// ```text
/// p' = clip(p + dt * v, -2, 2)
/// v' = clip((1 - dt * 0.5) v + dt * a, -2, 2)
/// reward = -|p| - 0.01 |a|^2
/// ```
///
/// Starts uniformly in the unit square at rest; terminates when `|p| <= 0.05`.
#[derive(Debug, Clone)]
pub struct PointMass2D {
    spec: EnvSpec,
    obs: Vec<f64>,
    steps: usize,
}

impl PointMass2D {
    pub const DT: f64 = 0.1;
    pub const DAMPING: f64 = 0.5;
    pub const BOUND: f64 = 2.0;
    pub const GOAL_RADIUS: f64 = 0.05;

    pub fn new() -> Self {
        Self {
            spec: EnvSpec {
                name: "point_mass",
                state_dim: 4,
                action_dim: 2,
                action_low: vec![-1.0, -1.0],
                action_high: vec![1.0, 1.0],
                max_episode_steps: 150,
            },
            obs: vec![0.5, 0.5, 0.0, 0.0],
            steps: 0,
        }
    }
}

impl Default for PointMass2D {
    fn default() -> Self {
        Self::new()
    }
}

impl_stateful!(PointMass2D);

impl Environment for PointMass2D {
    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    fn transition(&self, obs: &[f64], action: &[f64]) -> (Vec<f64>, f64) {
        let a = clamp_action(action, &self.spec);
        let (x, y, vx, vy) = (obs[0], obs[1], obs[2], obs[3]);
        let dist = (x * x + y * y).sqrt();
        let reward = -dist - 0.01 * (a[0] * a[0] + a[1] * a[1]);
        let b = Self::BOUND;
        let decay = 1.0 - Self::DT * Self::DAMPING;
        let next = vec![
            (x + Self::DT * vx).clamp(-b, b),
            (y + Self::DT * vy).clamp(-b, b),
            (decay * vx + Self::DT * a[0]).clamp(-b, b),
            (decay * vy + Self::DT * a[1]).clamp(-b, b),
        ];
        (next, reward)
    }

    fn is_terminal(&self, obs: &[f64]) -> bool {
        (obs[0] * obs[0] + obs[1] * obs[1]).sqrt() <= Self::GOAL_RADIUS
    }

    fn sample_initial(&self, rng: &mut dyn RngCore) -> Vec<f64> {
        vec![rng.random::<f64>(), rng.random::<f64>(), 0.0, 0.0]
    }

    fn observation(&self) -> &[f64] {
        &self.obs
    }

    fn steps(&self) -> usize {
        self.steps
    }

    fn set_state(&mut self, obs: &[f64]) {
        self.obs = obs.to_vec();
        self.steps = 0;
    }

    fn clone_box(&self) -> Box<dyn Environment> {
        Box::new(self.clone())
    }

    fn step(&mut self, action: &[f64]) -> Result<Step> {
        self.step_impl(action)
    }
}

/// Continuous mountain car. Observation `(position, velocity)`, action in
/// `[-1, 1]`, forward Euler with unit step:
///
/// ```text
/// v' = clip(v + 0.0015 a - 0.0025 cos(3 p), -0.07, 0.07)
/// p' = clip(p + v, -1.2, 0.6); v' = 0 if p' hits -1.2 while v' < 0
/// reward = 100 * [p' >= 0.45] - 0.1 a^2
/// ```
///
/// Starts at `p ~ U[-0.6, -0.4]`, `v = 0`.
#[derive(Debug, Clone)]
pub struct MountainCar {
    spec: EnvSpec,
    obs: Vec<f64>,
    steps: usize,
}

impl MountainCar {
    pub const MIN_POSITION: f64 = -1.2;
    pub const MAX_POSITION: f64 = 0.6;
    pub const MAX_SPEED: f64 = 0.07;
    pub const GOAL_POSITION: f64 = 0.45;
    pub const POWER: f64 = 0.0015;

    pub fn new() -> Self {
        Self {
            spec: EnvSpec {
                name: "mountain_car",
                state_dim: 2,
                action_dim: 1,
                action_low: vec![-1.0],
                action_high: vec![1.0],
                max_episode_steps: 300,
            },
            obs: vec![-0.5, 0.0],
            steps: 0,
        }
    }
}

impl Default for MountainCar {
    fn default() -> Self {
        Self::new()
    }
}

impl_stateful!(MountainCar);

impl Environment for MountainCar {
    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    fn transition(&self, obs: &[f64], action: &[f64]) -> (Vec<f64>, f64) {
        let a = action[0].clamp(-1.0, 1.0);
        let (p, v) = (obs[0], obs[1]);
        let mut nv = (v + Self::POWER * a - 0.0025 * (3.0 * p).cos())
            .clamp(-Self::MAX_SPEED, Self::MAX_SPEED);
        let np = (p + v).clamp(Self::MIN_POSITION, Self::MAX_POSITION);
        if np <= Self::MIN_POSITION && nv < 0.0 {
            nv = 0.0;
        }
        let bonus = if np >= Self::GOAL_POSITION {
            100.0
        } else {
            0.0
        };
        (vec![np, nv], bonus - 0.1 * a * a)
    }

    fn is_terminal(&self, obs: &[f64]) -> bool {
        obs[0] >= Self::GOAL_POSITION
    }

    fn sample_initial(&self, rng: &mut dyn RngCore) -> Vec<f64> {
        vec![rng.random_range(-0.6..=-0.4), 0.0]
    }

    fn observation(&self) -> &[f64] {
        &self.obs
    }

    fn steps(&self) -> usize {
        self.steps
    }

    fn set_state(&mut self, obs: &[f64]) {
        self.obs = obs.to_vec();
        self.steps = 0;
    }

    fn clone_box(&self) -> Box<dyn Environment> {
        Box::new(self.clone())
    }

    fn step(&mut self, action: &[f64]) -> Result<Step> {
        self.step_impl(action)
    }
}

/// Environment selector used by configuration and the CLI.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum EnvName {
    Pendulum,
    PointMass,
    MountainCar,
}

impl EnvName {
    pub fn make(self) -> Box<dyn Environment> {
        match self {
            EnvName::Pendulum => Box::new(Pendulum::new()),
            EnvName::PointMass => Box::new(PointMass2D::new()),
            EnvName::MountainCar => Box::new(MountainCar::new()),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            EnvName::Pendulum => "pendulum",
            EnvName::PointMass => "point_mass",
            EnvName::MountainCar => "mountain_car",
        }
    }
}

impl fmt::Display for EnvName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EnvName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pendulum" => Ok(EnvName::Pendulum),
            "point_mass" => Ok(EnvName::PointMass),
            "mountain_car" => Ok(EnvName::MountainCar),
            other => Err(Error::Precondition(
                String::from("unknown environment: ") + other,
            )),
        }
    }
}
