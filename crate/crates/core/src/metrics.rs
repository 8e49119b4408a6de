//! Model-error metrics: current-policy one-step error, overall error on a
//! stored dataset, and per-step compounding error against the real system.

use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)] // shadowed by inherent f64 methods when std is linked
use num_traits::Float;
use rand::RngCore;

use crate::ensemble::DynamicsModel;
use crate::env::Environment;
use crate::linalg::Matrix;
use crate::policy::Policy;
use crate::replay::{PolicyId, Transition};
use crate::rng;
use crate::{Error, Result};

/// Per-sample distance used by the error metrics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum ErrorNorm {
    /// L2 distance.
    #[default]
    Euclidean,
    /// Squared L2 distance.
    Squared,
}

impl ErrorNorm {
    pub fn distance(self, a: &[f64], b: &[f64]) -> f64 {
        let sq = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>();
        match self {
            ErrorNorm::Euclidean => sq.sqrt(),
            ErrorNorm::Squared => sq,
        }
    }
}

/// Mean distance between the model's mean next-state prediction and the
/// recorded next state.
pub fn one_step_error<M: DynamicsModel + ?Sized>(
    model: &M,
    data: &[&Transition],
    norm: ErrorNorm,
) -> Result<f64> {
    let first = data.first().ok_or(Error::EmptyDataset)?;
    let (sd, ad) = (first.state.len(), first.action.len());
    let s = Matrix::from_rows(sd, data.iter().map(|t| t.state.as_slice()))?;
    let a = Matrix::from_rows(ad, data.iter().map(|t| t.action.as_slice()))?;
    let (pred, _) = model.mean_prediction(&s, &a)?;
    let total: f64 = data
        .iter()
        .enumerate()
        .map(|(r, t)| norm.distance(pred.row(r), &t.next_state))
        .sum();
    Ok(total / data.len() as f64)
}

/// Rolls `policy` in the live environment for `n` steps (resetting at episode
/// ends) and returns the collected transitions.
pub fn collect_transitions<P: Policy + ?Sized>(
    env: &mut dyn Environment,
    policy: &P,
    n: usize,
    rng: &mut dyn RngCore,
) -> Result<Vec<Transition>> {
    let dim = env.spec().state_dim;
    let mut out = Vec::with_capacity(n);
    let mut obs = env.reset(rng);
    while out.len() < n {
        let s = Matrix::from_vec(1, dim, obs.clone())?;
        let action = policy.sample_actions(&s, rng)?.into_vec();
        let step = env.step(&action)?;
        out.push(Transition {
            state: obs,
            action,
            reward: step.reward,
            next_state: step.observation.clone(),
            done: step.terminated,
            policy_id: PolicyId(0),
        });
        obs = if step.done() {
            env.reset(rng)
        } else {
            step.observation
        };
    }
    Ok(out)
}

/// One-step error on `n` fresh transitions gathered by the current policy.
pub fn current_error<M, P>(
    model: &M,
    env: &mut dyn Environment,
    policy: &P,
    n: usize,
    norm: ErrorNorm,
    rng: &mut dyn RngCore,
) -> Result<f64>
where
    M: DynamicsModel + ?Sized,
    P: Policy + ?Sized,
{
    if n == 0 {
        return Err(Error::EmptyDataset);
    }
    let data = collect_transitions(env, policy, n, rng)?;
    let refs: Vec<&Transition> = data.iter().collect();
    one_step_error(model, &refs, norm)
}

/// One-step error over a held-out dataset covering historical policies.
pub fn overall_error<M: DynamicsModel + ?Sized>(
    model: &M,
    eval_dataset: &[&Transition],
    norm: ErrorNorm,
) -> Result<f64> {
    one_step_error(model, eval_dataset, norm)
}

/// Per-step mean gap between model and real trajectories that start
/// from the same states and share the action noise at every step. The model
/// side follows the member-averaged mean. Entry `h - 1` is the gap after `h`
/// steps. Real trajectories that terminate keep their final state.
pub fn compounding_error<M, P>(
    model: &M,
    env: &dyn Environment,
    policy: &P,
    horizon: usize,
    n_trajectories: usize,
    norm: ErrorNorm,
    rng: &mut dyn RngCore,
) -> Result<Vec<f64>>
where
    M: DynamicsModel + ?Sized,
    P: Policy + ?Sized,
{
    if horizon == 0 || n_trajectories == 0 {
        return Err(Error::precondition(
            "compounding error needs a positive horizon and trajectory count",
        ));
    }
    let dim = env.spec().state_dim;
    let starts: Vec<Vec<f64>> = (0..n_trajectories)
        .map(|_| env.sample_initial(rng))
        .collect();
    let mut real = Matrix::from_rows(dim, starts.iter().map(Vec::as_slice))?;
    let mut sim = real.clone();
    let mut stopped = vec![false; n_trajectories];
    let mut out = Vec::with_capacity(horizon);
    for _ in 0..horizon {
        let mut noise = Matrix::zeros(n_trajectories, policy.action_dim());
        for v in noise.as_mut_slice() {
            *v = rng::standard_normal(rng);
        }
        let real_actions = policy.act_with_noise(&real, &noise)?;
        let sim_actions = policy.act_with_noise(&sim, &noise)?;
        for (i, halt) in stopped.iter_mut().enumerate() {
            if *halt {
                continue;
            }
            let (next, _) = env.transition(real.row(i), real_actions.row(i));
            if next.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite {
                    what: "environment state",
                    index: i,
                });
            }
            *halt = env.is_terminal(&next);
            real.row_mut(i).copy_from_slice(&next);
        }
        sim = model.mean_prediction(&sim, &sim_actions)?.0;
        let gap: f64 = (0..n_trajectories)
            .map(|i| norm.distance(sim.row(i), real.row(i)))
            .sum();
        out.push(gap / n_trajectories as f64);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::Pendulum;
    use crate::rng::stream;

    /// Exact model built from the environment's pure transition function.
    struct Oracle(Pendulum);
    impl DynamicsModel for Oracle {
        fn mean_prediction(&self, s: &Matrix, a: &Matrix) -> Result<(Matrix, Vec<f64>)> {
            let mut next = Matrix::zeros(s.rows(), s.cols());
            let mut r = vec![0.0; s.rows()];
            for i in 0..s.rows() {
                let (n, rew) = self.0.transition(s.row(i), a.row(i));
                next.row_mut(i).copy_from_slice(&n);
                r[i] = rew;
            }
            Ok((next, r))
        }
    }

    struct Identity;
    impl DynamicsModel for Identity {
        fn mean_prediction(&self, s: &Matrix, _a: &Matrix) -> Result<(Matrix, Vec<f64>)> {
            Ok((s.clone(), vec![0.0; s.rows()]))
        }
    }

    struct Torque(f64);
    impl Policy for Torque {
        fn action_dim(&self) -> usize {
            1
        }
        fn act_with_noise(&self, s: &Matrix, noise: &Matrix) -> Result<Matrix> {
            let mut a = Matrix::zeros(s.rows(), 1);
            for i in 0..s.rows() {
                a.set(i, 0, (self.0 + 0.5 * noise.get(i, 0)).clamp(-2.0, 2.0));
            }
            Ok(a)
        }
    }

    #[test]
    fn perfect_model_has_zero_errors() {
        let model = Oracle(Pendulum::new());
        let mut env = Pendulum::new();
        let e = current_error(
            &model,
            &mut env,
            &Torque(0.3),
            200,
            ErrorNorm::Squared,
            &mut stream(1, 0),
        )
        .unwrap();
        assert!(e.abs() < 1e-12);
        let c = compounding_error(
            &model,
            &env,
            &Torque(0.3),
            8,
            5,
            ErrorNorm::Euclidean,
            &mut stream(1, 1),
        )
        .unwrap();
        assert_eq!(c.len(), 8);
        assert!(c.iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn identity_model_error_is_mean_displacement() {
        let mut env = Pendulum::new();
        let data = collect_transitions(&mut env, &Torque(1.0), 300, &mut stream(2, 0)).unwrap();
        let refs: Vec<&Transition> = data.iter().collect();
        for norm in [ErrorNorm::Euclidean, ErrorNorm::Squared] {
            let direct: f64 = data
                .iter()
                .map(|t| {
                    let sq: f64 = t
                        .state
                        .iter()
                        .zip(&t.next_state)
                        .map(|(a, b)| (a - b).powi(2))
                        .sum();
                    if norm == ErrorNorm::Squared {
                        sq
                    } else {
                        sq.sqrt()
                    }
                })
                .sum::<f64>()
                / 300.0;
            assert!((overall_error(&Identity, &refs, norm).unwrap() - direct).abs() < 1e-12);
        }
    }

    #[test]
    fn empty_dataset_is_rejected() {
        assert_eq!(
            overall_error(&Identity, &[], ErrorNorm::Euclidean).unwrap_err(),
            Error::EmptyDataset
        );
    }
}
