//! Exact tabular evaluations against independent oracles.

use pdml_core::rng::{self, Rng};
use pdml_core::tabular::{
    check_lemma1, check_proposition1, occupancy, random_bound_instance, random_lemma_instance,
    random_mdp, random_policy, state_occupancy, tv_distance, value, TabularMdp, TabularPolicy,
};
use proptest::prelude::*;
use rand::Rng as _;

fn instance(seed: u64) -> (TabularMdp, TabularPolicy, Rng) {
    let mut rng = rng::stream(seed, 0);
    let s = rng.random_range(1..=6);
    let a = rng.random_range(1..=3);
    let gamma = rng.random_range(0.05..0.95);
    let mdp = random_mdp(s, a, gamma, &mut rng).unwrap();
    let pi = random_policy(s, a, &mut rng);
    (mdp, pi, rng)
}

fn policy_transition(mdp: &TabularMdp, pi: &TabularPolicy, s: usize, next: usize) -> f64 {
    (0..mdp.num_actions)
        .map(|a| pi.p(s, a) * mdp.t(s, a, next))
        .sum()
}

/// `(1 - gamma) sum_t gamma^t d_t` with `d_{t+1} = P_pi^T d_t`, truncated.
fn occupancy_power_series(mdp: &TabularMdp, pi: &TabularPolicy) -> Vec<f64> {
    let n = mdp.num_states;
    let mut d = mdp.initial.clone();
    let mut acc = vec![0.0; n];
    let mut g = 1.0 - mdp.gamma;
    while g > 1e-17 {
        for s in 0..n {
            acc[s] += g * d[s];
        }
        d = (0..n)
            .map(|next| {
                (0..n)
                    .map(|s| d[s] * policy_transition(mdp, pi, s, next))
                    .sum()
            })
            .collect();
        g *= mdp.gamma;
    }
    acc
}

/// Iterative policy evaluation, scaled to the normalized convention.
fn value_by_iteration(mdp: &TabularMdp, pi: &TabularPolicy) -> f64 {
    let n = mdp.num_states;
    let r_pi: Vec<f64> = (0..n)
        .map(|s| (0..mdp.num_actions).map(|a| pi.p(s, a) * mdp.r(s, a)).sum())
        .collect();
    let mut v = vec![0.0; n];
    for _ in 0..2000 {
        v = (0..n)
            .map(|s| {
                r_pi[s]
                    + mdp.gamma
                        * (0..n)
                            .map(|t| policy_transition(mdp, pi, s, t) * v[t])
                            .sum::<f64>()
            })
            .collect();
    }
    (1.0 - mdp.gamma) * mdp.initial.iter().zip(&v).map(|(p, x)| p * x).sum::<f64>()
}

fn sample(p: &[f64], rng: &mut Rng) -> usize {
    let u: f64 = rng.random();
    let mut c = 0.0;
    for (i, &x) in p.iter().enumerate() {
        c += x;
        if u < c {
            return i;
        }
    }
    p.len() - 1
}

fn probability_vector(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.0..1.0f64, n).prop_map(|v| {
        let s: f64 = v.iter().sum::<f64>() + 1e-12;
        v.into_iter().map(|x| x / s).collect()
    })
}

proptest! {
    #[test]
    fn occupancy_is_a_distribution_matching_the_power_series(seed in any::<u64>()) {
        let (mdp, pi, _) = instance(seed);
        let rho = occupancy(&mdp, &pi).unwrap();
        prop_assert!(rho.iter().all(|&x| x >= 0.0));
        prop_assert!((rho.iter().sum::<f64>() - 1.0).abs() <= 1e-10);
        let v = state_occupancy(&mdp, &pi).unwrap();
        for (a, b) in v.iter().zip(occupancy_power_series(&mdp, &pi)) {
            prop_assert!((a - b).abs() <= 1e-10);
        }
    }

    #[test]
    fn value_matches_policy_evaluation(seed in any::<u64>()) {
        let (mdp, pi, _) = instance(seed);
        prop_assert!((value(&mdp, &pi).unwrap() - value_by_iteration(&mdp, &pi)).abs() <= 1e-10);
    }

    #[test]
    fn value_is_linear_in_reward(seed in any::<u64>()) {
        let (mdp, pi, mut rng) = instance(seed);
        let mut m1 = mdp.clone();
        let mut m2 = mdp.clone();
        for r in m1.rewards.iter_mut().chain(m2.rewards.iter_mut()) {
            *r = rng.random_range(-1.0..1.0);
        }
        let mut sum = mdp.clone();
        for i in 0..sum.rewards.len() {
            sum.rewards[i] = m1.rewards[i] + m2.rewards[i];
        }
        let lhs = value(&sum, &pi).unwrap();
        let rhs = value(&m1, &pi).unwrap() + value(&m2, &pi).unwrap();
        prop_assert!((lhs - rhs).abs() <= 1e-12);
    }

    #[test]
    fn tv_is_a_symmetric_metric((p, q, r) in (1usize..10).prop_flat_map(|n| (probability_vector(n), probability_vector(n), probability_vector(n)))) {
        let pq = tv_distance(&p, &q).unwrap();
        prop_assert!((pq - tv_distance(&q, &p).unwrap()).abs() <= 1e-15);
        prop_assert!(pq <= tv_distance(&p, &r).unwrap() + tv_distance(&r, &q).unwrap() + 1e-12);
        prop_assert!(tv_distance(&p, &p).unwrap() == 0.0);
    }

    #[test]
    fn visitation_gap_stays_within_the_lemma(seed in any::<u64>(), eps in 0.0..0.2f64) {
        let mut rng = rng::stream(seed, 1);
        let (mdp, model, p1, p2) = random_lemma_instance(eps, &mut rng).unwrap();
        prop_assert!(check_lemma1(&mdp, &model, &p1, &p2).unwrap().max_violation <= 1e-9);
    }

    #[test]
    fn bound_holds_with_an_exact_model(seed in any::<u64>()) {
        let mut rng = rng::stream(seed, 2);
        let inst = random_bound_instance(0.0, &mut rng).unwrap();
        let rep = inst.check().unwrap();
        prop_assert!(rep.holds(), "lhs {} rhs {}", rep.lhs, rep.rhs);
        prop_assert!(rep.assumption_residual <= 1e-12);
    }
}

#[test]
fn value_agrees_with_monte_carlo_rollouts() {
    let (mdp, pi, mut rng) = instance(42);
    let episodes = 200_000;
    let (mut sum, mut sq) = (0.0, 0.0);
    for _ in 0..episodes {
        // Geometric stopping with continuation gamma makes the per-step
        // reward at the stopping time an unbiased sample of J.
        let mut s = sample(&mdp.initial, &mut rng);
        loop {
            let a = sample(pi.row(s), &mut rng);
            if rng.random::<f64>() >= mdp.gamma {
                let r = mdp.r(s, a);
                sum += r;
                sq += r * r;
                break;
            }
            let row: Vec<f64> = (0..mdp.num_states).map(|n| mdp.t(s, a, n)).collect();
            s = sample(&row, &mut rng);
        }
    }
    let mean = sum / episodes as f64;
    let se = ((sq / episodes as f64 - mean * mean) / episodes as f64).sqrt();
    let exact = value(&mdp, &pi).unwrap();
    assert!(
        (mean - exact).abs() <= 4.0 * se + 1e-12,
        "mc {mean} exact {exact} se {se}"
    );
}

#[test]
fn inverse_shift_weights_beat_uniform() {
    let shifts = [(3.0, 3.0), (2.0, 2.0), (1.0, 1.0)];
    let inv = [1.0 / 3.0, 0.5, 1.0];
    let total: f64 = inv.iter().sum();
    let w: Vec<f64> = inv.iter().map(|x| x / total).collect();
    assert!(
        (w[0] - 0.1818).abs() < 1e-4
            && (w[1] - 0.2727).abs() < 1e-4
            && (w[2] - 0.5455).abs() < 1e-4
    );
    let rep = check_proposition1(&shifts, &w, 0.9, 4, 1.0).unwrap();
    assert!(rep.holds && rep.weighted < rep.uniform);
    let uniform = check_proposition1(&shifts, &[1.0 / 3.0; 3], 0.9, 4, 1.0).unwrap();
    assert!(uniform.holds && uniform.margin.abs() < 1e-12);
}

#[test]
fn non_monotone_shifts_are_rejected() {
    assert!(check_proposition1(&[(1.0, 1.0), (2.0, 2.0)], &[0.5, 0.5], 0.9, 2, 1.0).is_err());
}
