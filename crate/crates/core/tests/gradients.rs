//! Analytic gradients against central finite differences.

use pdml_core::ensemble::{EnsembleConfig, EnsembleDynamicsModel};
use pdml_core::linalg::Matrix;
use pdml_core::rng::{self, standard_normal};
use pdml_core::sac::{SacAgent, SacConfig};
use pdml_core::{PolicyId, Transition};
use proptest::prelude::*;
use rand::Rng;

const STEP: f64 = 1e-6;
const TOLERANCE: f64 = 1e-4;

/// Central differences of `f` around `params`.
fn numeric_gradient(params: &[f64], f: impl Fn(&[f64]) -> f64) -> Vec<f64> {
    let mut p = params.to_vec();
    (0..p.len())
        .map(|i| {
            let orig = p[i];
            p[i] = orig + STEP;
            let up = f(&p);
            p[i] = orig - STEP;
            let down = f(&p);
            p[i] = orig;
            (up - down) / (2.0 * STEP)
        })
        .collect()
}

fn relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    let diff: f64 = analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| (a - n).powi(2))
        .sum::<f64>()
        .sqrt();
    let na: f64 = analytic.iter().map(|a| a * a).sum::<f64>().sqrt();
    let nn: f64 = numeric.iter().map(|a| a * a).sum::<f64>().sqrt();
    diff / na.max(nn).max(1e-8)
}

fn hidden<R: Rng>(rng: &mut R) -> Vec<usize> {
    (0..rng.random_range(1..=2))
        .map(|_| rng.random_range(3..=8))
        .collect()
}

fn random_batch<R: Rng>(n: usize, sd: usize, ad: usize, rng: &mut R) -> Vec<Transition> {
    (0..n)
        .map(|i| Transition {
            state: (0..sd).map(|_| standard_normal(rng)).collect(),
            action: (0..ad).map(|_| rng.random_range(-0.9..0.9)).collect(),
            reward: standard_normal(rng),
            next_state: (0..sd).map(|_| standard_normal(rng)).collect(),
            done: i % 5 == 4,
            policy_id: PolicyId(0),
        })
        .collect()
}

fn noise<R: Rng>(rows: usize, cols: usize, rng: &mut R) -> Matrix {
    let v = (0..rows * cols).map(|_| standard_normal(rng)).collect();
    Matrix::from_vec(rows, cols, v).unwrap()
}

/// Random biases keep pre-activations off the ReLU kink, which zero-initialized
/// biases hit exactly whenever an upstream layer is fully inactive.
fn jitter<R: Rng>(params: &mut [f64], rng: &mut R) {
    for p in params {
        *p += 0.1 * standard_normal(rng);
    }
}

fn agent<R: Rng>(sd: usize, ad: usize, rng: &mut R) -> SacAgent {
    let cfg = SacConfig {
        hidden_sizes: hidden(rng),
        ..SacConfig::default()
    };
    let mut a = SacAgent::new(sd, &vec![-1.0; ad], &vec![1.0; ad], cfg, rng).unwrap();
    a.log_alpha = rng.random_range(-2.0..0.5);
    jitter(a.actor.net.params_mut(), rng);
    jitter(a.q1.params_mut(), rng);
    jitter(a.q2.params_mut(), rng);
    jitter(a.q1_target.params_mut(), rng);
    jitter(a.q2_target.params_mut(), rng);
    a
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn model_loss_gradient(seed in any::<u64>()) {
        let mut rng = rng::stream(seed, 0);
        let (sd, ad) = (rng.random_range(1..=3), rng.random_range(1..=2));
        let cfg = EnsembleConfig { ensemble_size: 2, hidden_sizes: hidden(&mut rng), ..EnsembleConfig::default() };
        let mut model = EnsembleDynamicsModel::new(sd, ad, &cfg, &mut rng).unwrap();
        for m in model.members_mut() {
            jitter(m.net.params_mut(), &mut rng);
        }
        let data = random_batch(6, sd, ad, &mut rng);
        for t in &data {
            model.observe_input(&t.state, &t.action);
        }
        let batch: Vec<&Transition> = data.iter().collect();
        let member = rng.random_range(0..2);
        let (_, analytic) = model.model_loss_grad(member, &batch).unwrap();
        let params = model.members()[member].net.params().to_vec();
        let numeric = numeric_gradient(&params, |p| {
            let mut m = model.clone();
            m.members_mut()[member].net.params_mut().copy_from_slice(p);
            m.model_loss(member, &batch).unwrap()
        });
        let err = relative_error(&analytic, &numeric);
        prop_assert!(err <= TOLERANCE, "relative error {err}");
    }

    #[test]
    fn critic_loss_gradient(seed in any::<u64>()) {
        let mut rng = rng::stream(seed, 1);
        let (sd, ad) = (rng.random_range(1..=3), rng.random_range(1..=2));
        let a = agent(sd, ad, &mut rng);
        let data = random_batch(5, sd, ad, &mut rng);
        let batch: Vec<&Transition> = data.iter().collect();
        let nn = noise(batch.len(), ad, &mut rng);
        let obj = a.critic_objective(&batch, &nn).unwrap();
        for which in 0..2 {
            let (params, analytic) = if which == 0 {
                (a.q1.params().to_vec(), &obj.grad_q1)
            } else {
                (a.q2.params().to_vec(), &obj.grad_q2)
            };
            let numeric = numeric_gradient(&params, |p| {
                let mut b = a.clone();
                let q = if which == 0 { &mut b.q1 } else { &mut b.q2 };
                q.params_mut().copy_from_slice(p);
                b.critic_objective(&batch, &nn).unwrap().loss
            });
            let err = relative_error(analytic, &numeric);
            prop_assert!(err <= TOLERANCE, "critic {which}: relative error {err}");
        }
    }

    #[test]
    fn actor_loss_gradient(seed in any::<u64>()) {
        let mut rng = rng::stream(seed, 2);
        let (sd, ad) = (rng.random_range(1..=3), rng.random_range(1..=2));
        let a = agent(sd, ad, &mut rng);
        let states = noise(5, sd, &mut rng);
        let eps = noise(5, ad, &mut rng);
        let obj = a.actor_objective(&states, &eps).unwrap();
        let numeric = numeric_gradient(a.actor.net.params(), |p| {
            let mut b = a.clone();
            b.actor.net.params_mut().copy_from_slice(p);
            b.actor_objective(&states, &eps).unwrap().loss
        });
        let err = relative_error(&obj.grad, &numeric);
        prop_assert!(err <= TOLERANCE, "relative error {err}");
    }
}
