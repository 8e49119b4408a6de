//! Probabilistic ensemble training, variance bounds and rollouts.

use pdml_core::ensemble::{EnsembleConfig, EnsembleDynamicsModel};
use pdml_core::linalg::Matrix;
use pdml_core::metrics::{one_step_error, ErrorNorm};
use pdml_core::replay::{Subset, WeightMap};
use pdml_core::rng::{self, standard_normal};
use pdml_core::sac::{SacAgent, SacConfig};
use pdml_core::{PolicyId, ReplayBuffer, Transition};
use proptest::prelude::*;
use rand::Rng;

fn small_config() -> EnsembleConfig {
    EnsembleConfig {
        ensemble_size: 2,
        hidden_sizes: vec![32, 32],
        learning_rate: 1e-3,
        batch_size: 64,
        max_steps: 2000,
        eval_interval: 50,
        patience: 10,
        holdout_size: 200,
        ..EnsembleConfig::default()
    }
}

/// `s' = A s + B a`, `r = c . s`.
fn linear_step(s: &[f64], a: &[f64]) -> (Vec<f64>, f64) {
    let next = vec![
        0.9 * s[0] + 0.2 * s[1] + 0.5 * a[0],
        -0.1 * s[0] + 0.8 * s[1] - 0.3 * a[0],
    ];
    (next, 0.5 * s[0] - s[1])
}

fn linear_data<R: Rng>(n: usize, rng: &mut R) -> Vec<Transition> {
    (0..n)
        .map(|_| {
            let s = vec![standard_normal(rng), standard_normal(rng)];
            let a = vec![rng.random_range(-1.0..1.0)];
            let (next, r) = linear_step(&s, &a);
            Transition {
                state: s,
                action: a,
                reward: r,
                next_state: next,
                done: false,
                policy_id: PolicyId(0),
            }
        })
        .collect()
}

#[test]
fn training_on_linear_dynamics_cuts_holdout_error_tenfold() {
    let mut rng = rng::stream(3, 0);
    let mut buffer = ReplayBuffer::new(2, 1, 10_000).unwrap();
    let cfg = small_config();
    let mut model = EnsembleDynamicsModel::new(2, 1, &cfg, &mut rng).unwrap();
    for t in linear_data(2000, &mut rng) {
        model.observe_input(&t.state, &t.action);
        buffer.push(t).unwrap();
    }
    let holdout: Vec<&Transition> = buffer.iter_subset(Subset::Holdout).collect();
    let before = one_step_error(&model, &holdout, ErrorNorm::Euclidean).unwrap();
    let weights: WeightMap = [(PolicyId(0), 1.0)].into_iter().collect();
    model.train(&buffer, &weights, &cfg, &mut rng).unwrap();
    let after = one_step_error(&model, &holdout, ErrorNorm::Euclidean).unwrap();
    assert!(after * 10.0 <= before, "before {before} after {after}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn a_tiny_exact_gradient_step_lowers_the_loss(seed in any::<u64>()) {
        let mut rng = rng::stream(seed, 0);
        let cfg = EnsembleConfig { hidden_sizes: vec![8], ..small_config() };
        let mut model = EnsembleDynamicsModel::new(2, 1, &cfg, &mut rng).unwrap();
        let data = linear_data(32, &mut rng);
        for t in &data {
            model.observe_input(&t.state, &t.action);
        }
        let batch: Vec<&Transition> = data.iter().collect();
        let (before, grad) = model.model_loss_grad(0, &batch).unwrap();
        // Members initialized near the variance floor have huge gradients.
        let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
        let step = 1e-6 / norm.max(1.0);
        for (p, g) in model.members_mut()[0].net.params_mut().iter_mut().zip(&grad) {
            *p -= step * g;
        }
        prop_assert!(model.model_loss(0, &batch).unwrap() < before);
    }

    #[test]
    fn predicted_variances_respect_the_bounds(seed in any::<u64>(), magnitude in 0.0..1e4f64) {
        let mut rng = rng::stream(seed, 1);
        let cfg = EnsembleConfig { hidden_sizes: vec![8, 8], var_floor: 1e-4, var_ceiling: 10.0, ..small_config() };
        let mut model = EnsembleDynamicsModel::new(2, 1, &cfg, &mut rng).unwrap();
        for p in model.members_mut()[1].net.params_mut() {
            *p *= 5.0;
        }
        let x: Vec<f64> = (0..30).map(|_| magnitude * standard_normal(&mut rng)).collect();
        let inputs = Matrix::from_vec(10, 3, x).unwrap();
        for m in 0..2 {
            let p = model.member_prediction(m, &inputs).unwrap();
            for &lv in p.log_var.as_slice() {
                prop_assert!(lv >= 1e-4f64.ln() - 1e-12 && lv <= 10f64.ln() + 1e-12, "log variance {lv}");
            }
        }
    }
}

#[test]
fn seeded_rollouts_are_reproducible() {
    let mut rng = rng::stream(4, 0);
    let cfg = small_config();
    let model = EnsembleDynamicsModel::new(2, 1, &cfg, &mut rng).unwrap();
    let agent = SacAgent::new(
        2,
        &[-1.0],
        &[1.0],
        SacConfig {
            hidden_sizes: vec![8],
            ..SacConfig::default()
        },
        &mut rng,
    )
    .unwrap();
    let init =
        Matrix::from_vec(20, 2, (0..40).map(|_| standard_normal(&mut rng)).collect()).unwrap();
    let run = |seed| {
        let mut r = rng::stream(seed, 9);
        model
            .rollout(&agent, &init, 5, |s| s[0] > 3.0, PolicyId(1), &mut r)
            .unwrap()
    };
    let (a, b) = (run(7), run(7));
    assert_eq!(a, b);
    assert!(a.trajectories.iter().all(|t| !t.is_empty() && t.len() <= 5));
    assert_ne!(a, run(8));
}

