//! Policy-adapted dynamics model learning for Dyna-style model-based RL.
//!
//! The crate is `no_std` (with `alloc`) and holds every algorithmic piece:
//!
//! * [`weighting`]: policy distribution shift estimation and the adjusted
//!   historical policy mixture used to reweight model training data.
//! * [`replay`]: a real-sample buffer segmented by generating policy with
//!   two-stage weighted sampling.
//! * [`nn`]: a small multilayer perceptron with reverse-mode gradients and Adam.
//! * [`ensemble`] and [`metrics`]: the probabilistic dynamics ensemble, model
//!   rollouts and the one-step / overall / compounding error measurements.
//! * [`sac`]: a soft actor-critic agent producing Gaussian policy snapshots.
//! * [`env`]: native continuous-control environments with exact dynamics.
//! * [`trainer`]: the epoch pipeline tying everything together.
//! * [`tabular`]: exact finite-MDP checks of the performance-gap bound.
//!
//! File formats, configuration parsing and the command-line runner live in
//! the companion `pdml` crate.

#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod ensemble;
pub mod env;
mod error;
pub mod linalg;
pub mod metrics;
pub mod nn;
pub mod policy;
pub mod replay;
pub mod rng;
pub mod sac;
pub mod tabular;
pub mod trainer;
pub mod weighting;

pub use error::{Error, Result};
pub use linalg::Matrix;
pub use replay::{PolicyId, ReplayBuffer, Transition};
pub use weighting::{GaussianActionDistribution, PolicyMixture, PolicySnapshot};
