//! Acceptance checks. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails.
//!
//! Run with `cargo test --release -p pdml --test acceptance`. The training
//! benchmark dominates the runtime; set `PDML_ACCEPTANCE_DIR` to keep its
//! run directories, and `PDML_ACCEPTANCE_JOBS` to train seeds in parallel.

use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use pdml::compare::{compare, final_rows, summarize, CompareOptions, Metric, Series, SummaryRow};
use pdml::config::RunConfig;
use pdml::metrics::{read_series, DETERMINISTIC_FILES, RETURNS};
use pdml::run::{run_dir, run_training};
use pdml::verify::{run_lemma1, run_proposition1, run_theorem1, RESIDUAL_THRESHOLD};
use pdml_core::ensemble::{EnsembleConfig, EnsembleDynamicsModel};
use pdml_core::linalg::Matrix;
use pdml_core::rng::{self, standard_normal};
use pdml_core::sac::{SacAgent, SacConfig};
use pdml_core::trainer::RolloutSchedule;
use pdml_core::weighting::{
    compute_current_weight, compute_historical_weights, exponential_decay_weights, normalize,
    tv_bound, ShiftFormula, DEFAULT_ALPHA, SHIFT_FLOOR,
};
use pdml_core::{PolicyId, Transition};
use rand::Rng;

type Outcome = Result<String, String>;

fn timed(limit: Option<Duration>, f: impl FnOnce() -> Outcome) -> Outcome {
    let start = Instant::now();
    let out = f();
    let took = start.elapsed();
    let note = format!("{:.2}s", took.as_secs_f64());
    match (out, limit) {
        (Ok(_), Some(l)) if took > l => Err(format!("took {note}, limit {:.0}s", l.as_secs_f64())),
        (Ok(m), _) => Ok(format!("{m} ({note})")),
        (Err(m), _) => Err(format!("{m} ({note})")),
    }
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn weight_law() -> Outcome {
    let mut rng = rng::stream(1, 0);
    for case in 0..1000 {
        let n = rng.random_range(1..=50);
        let shifts: Vec<f64> = (0..n).map(|_| rng.random_range(1e-4..5.0)).collect();
        let w = compute_historical_weights(&shifts, SHIFT_FLOOR).map_err(|e| e.to_string())?;
        let sum: f64 = w.iter().sum();
        ensure((sum - 1.0).abs() <= 1e-9, || {
            format!("case {case}: sum {sum}")
        })?;
        for i in 0..n {
            for j in 0..n {
                ensure(shifts[i] >= shifts[j] || w[i] > w[j], || {
                    format!("case {case}: order broken at {i},{j}")
                })?;
            }
        }
        let mut full = w.clone();
        full.push(compute_current_weight(&w, DEFAULT_ALPHA).map_err(|e| e.to_string())?);
        normalize(&mut full).map_err(|e| e.to_string())?;
        let last = full[n];
        ensure(full.iter().all(|&x| x <= last), || {
            format!("case {case}: current weight is not the maximum")
        })?;
    }
    Ok("1000 vectors".into())
}

fn log_density(x: f64, mean: f64, var: f64) -> f64 {
    -0.5 * ((x - mean).powi(2) / var + (2.0 * std::f64::consts::PI * var).ln())
}

fn tv_simpson(pm: f64, pv: f64, qm: f64, qv: f64) -> f64 {
    let s = pv.max(qv).sqrt();
    let (lo, hi) = (pm.min(qm) - 12.0 * s, pm.max(qm) + 12.0 * s);
    let n = 20_000;
    let h = (hi - lo) / n as f64;
    let f = |x: f64| (log_density(x, pm, pv).exp() - log_density(x, qm, qv).exp()).abs();
    let mut acc = f(lo) + f(hi);
    for i in 1..n {
        acc += f(lo + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    0.5 * acc * h / 3.0
}

fn tv_monte_carlo<R: Rng>(
    pm: &[f64],
    pv: &[f64],
    qm: &[f64],
    qv: &[f64],
    n: usize,
    rng: &mut R,
) -> (f64, f64) {
    let (mut sum, mut sq) = (0.0, 0.0);
    for _ in 0..n {
        let mut log_ratio = 0.0;
        for k in 0..pm.len() {
            let x = pm[k] + pv[k].sqrt() * standard_normal(rng);
            log_ratio += log_density(x, qm[k], qv[k]) - log_density(x, pm[k], pv[k]);
        }
        let v = (1.0 - log_ratio.exp()).max(0.0);
        sum += v;
        sq += v * v;
    }
    let mean = sum / n as f64;
    let se = ((sq / n as f64 - mean * mean).max(0.0) / n as f64).sqrt();
    (mean, se)
}

fn tv_upper_bound() -> Outcome {
    let mut rng = rng::stream(2, 0);
    let mut worst_gap = f64::INFINITY;
    for case in 0..500 {
        let d = rng.random_range(1..=4);
        let mut draw =
            |lo: f64, hi: f64| -> Vec<f64> { (0..d).map(|_| rng.random_range(lo..hi)).collect() };
        let (pm, pv, qm, qv) = (
            draw(-2.0, 2.0),
            draw(0.05, 4.0),
            draw(-2.0, 2.0),
            draw(0.05, 4.0),
        );
        let bound = tv_bound(&pm, &pv, &qm, &qv, ShiftFormula::ConsistentPinsker);
        let (tv, se) = if d == 1 {
            (tv_simpson(pm[0], pv[0], qm[0], qv[0]), 0.0)
        } else {
            tv_monte_carlo(&pm, &pv, &qm, &qv, 100_000, &mut rng)
        };
        let gap = bound + 3.0 * se - tv;
        worst_gap = worst_gap.min(gap);
        ensure(gap >= -1e-9, || {
            format!("case {case}: bound {bound} + 3se {se} < tv {tv}")
        })?;
    }
    Ok(format!("500 pairs, smallest slack {worst_gap:.3e}"))
}

fn proposition() -> Outcome {
    let mut failures = Vec::new();
    let margin = run_proposition1(1000, 0, &mut failures).map_err(|e| e.to_string())?;
    ensure(failures.is_empty() && margin >= -1e-12, || {
        format!("min margin {margin:e}, {} failures", failures.len())
    })?;
    Ok(format!("1000 instances, min margin {margin:.3e}"))
}

fn lemma() -> Outcome {
    let mut failures = Vec::new();
    let worst = run_lemma1(200, 0, &mut failures).map_err(|e| e.to_string())?;
    ensure(worst <= 1e-9, || format!("max violation {worst:e}"))?;
    Ok(format!("200 instances, max violation {worst:.3e}"))
}

fn theorem() -> Outcome {
    let mut failures = Vec::new();
    let s = run_theorem1(200, 0, &mut failures).map_err(|e| e.to_string())?;
    ensure(s.exact_holds == 200, || {
        format!("exact model: {}/200 hold", s.exact_holds)
    })?;
    ensure(failures.is_empty(), || {
        format!("{} assertable instances violate the bound", failures.len())
    })?;
    Ok(format!(
        "exact 200/200; perturbed satisfaction {}/200, {} with residual <= {RESIDUAL_THRESHOLD:e} all hold",
        s.perturbed_holds, s.assertable
    ))
}

const FD_STEP: f64 = 1e-6;

fn numeric_gradient(params: &[f64], f: impl Fn(&[f64]) -> f64) -> Vec<f64> {
    let mut p = params.to_vec();
    (0..p.len())
        .map(|i| {
            let orig = p[i];
            p[i] = orig + FD_STEP;
            let up = f(&p);
            p[i] = orig - FD_STEP;
            let down = f(&p);
            p[i] = orig;
            (up - down) / (2.0 * FD_STEP)
        })
        .collect()
}

fn relative_error(a: &[f64], n: &[f64]) -> f64 {
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let diff: Vec<f64> = a.iter().zip(n).map(|(x, y)| x - y).collect();
    norm(&diff) / norm(a).max(norm(n)).max(1e-8)
}

fn jitter<R: Rng>(params: &mut [f64], rng: &mut R) {
    for p in params {
        *p += 0.1 * standard_normal(rng);
    }
}

fn noise<R: Rng>(rows: usize, cols: usize, rng: &mut R) -> Matrix {
    Matrix::from_vec(
        rows,
        cols,
        (0..rows * cols).map(|_| standard_normal(rng)).collect(),
    )
    .expect("shape matches")
}

fn gradient_case(seed: u64) -> Result<f64, String> {
    let mut rng = rng::stream(seed, 6);
    let (sd, ad) = (rng.random_range(1..=3), rng.random_range(1..=2));
    let hidden: Vec<usize> = (0..rng.random_range(1..=2))
        .map(|_| rng.random_range(3..=8))
        .collect();
    let data: Vec<Transition> = (0..6)
        .map(|i| Transition {
            state: (0..sd).map(|_| standard_normal(&mut rng)).collect(),
            action: (0..ad).map(|_| rng.random_range(-0.9..0.9)).collect(),
            reward: standard_normal(&mut rng),
            next_state: (0..sd).map(|_| standard_normal(&mut rng)).collect(),
            done: i == 5,
            policy_id: PolicyId(0),
        })
        .collect();
    let batch: Vec<&Transition> = data.iter().collect();
    let err = |e: pdml_core::Error| e.to_string();

    let cfg = EnsembleConfig {
        ensemble_size: 1,
        hidden_sizes: hidden.clone(),
        ..EnsembleConfig::default()
    };
    let mut model = EnsembleDynamicsModel::new(sd, ad, &cfg, &mut rng).map_err(err)?;
    jitter(model.members_mut()[0].net.params_mut(), &mut rng);
    for t in &data {
        model.observe_input(&t.state, &t.action);
    }
    let (_, g) = model.model_loss_grad(0, &batch).map_err(err)?;
    let n = numeric_gradient(model.members()[0].net.params(), |p| {
        let mut m = model.clone();
        m.members_mut()[0].net.params_mut().copy_from_slice(p);
        m.model_loss(0, &batch).expect("valid batch")
    });
    let mut worst = relative_error(&g, &n);

    let sac = SacConfig {
        hidden_sizes: hidden,
        ..SacConfig::default()
    };
    let mut agent =
        SacAgent::new(sd, &vec![-1.0; ad], &vec![1.0; ad], sac, &mut rng).map_err(err)?;
    agent.log_alpha = rng.random_range(-2.0..0.5);
    for net in [
        &mut agent.actor.net,
        &mut agent.q1,
        &mut agent.q2,
        &mut agent.q1_target,
        &mut agent.q2_target,
    ] {
        jitter(net.params_mut(), &mut rng);
    }
    let next_noise = noise(batch.len(), ad, &mut rng);
    let obj = agent.critic_objective(&batch, &next_noise).map_err(err)?;
    for which in 0..2 {
        let (params, g) = if which == 0 {
            (agent.q1.params(), &obj.grad_q1)
        } else {
            (agent.q2.params(), &obj.grad_q2)
        };
        let n = numeric_gradient(params, |p| {
            let mut b = agent.clone();
            let q = if which == 0 { &mut b.q1 } else { &mut b.q2 };
            q.params_mut().copy_from_slice(p);
            b.critic_objective(&batch, &next_noise)
                .expect("valid batch")
                .loss
        });
        worst = worst.max(relative_error(g, &n));
    }
    let states = noise(5, sd, &mut rng);
    let eps = noise(5, ad, &mut rng);
    let obj = agent.actor_objective(&states, &eps).map_err(err)?;
    let n = numeric_gradient(agent.actor.net.params(), |p| {
        let mut b = agent.clone();
        b.actor.net.params_mut().copy_from_slice(p);
        b.actor_objective(&states, &eps).expect("valid batch").loss
    });
    Ok(worst.max(relative_error(&obj.grad, &n)))
}

fn gradients() -> Outcome {
    let mut worst: f64 = 0.0;
    for seed in 0..100 {
        let e = gradient_case(seed)?;
        ensure(e <= 1e-4, || {
            format!("network {seed}: relative error {e:e}")
        })?;
        worst = worst.max(e);
    }
    Ok(format!("100 networks, max relative error {worst:.3e}"))
}

fn schedule() -> Outcome {
    let s = RolloutSchedule::Linear {
        a: 1.0,
        b: 15.0,
        x: 20.0,
        y: 100.0,
    };
    let got = [s.horizon(1), s.horizon(8)];
    ensure(got == [20, 60], || format!("h(1), h(8) = {got:?}"))?;
    ensure((15..1000).all(|e| s.horizon(e) == 100), || {
        "h != 100 past epoch 15".into()
    })?;
    ensure(
        (0..1000).all(|e| RolloutSchedule::Fixed(1).horizon(e) == 1),
        || "fixed schedule varies".into(),
    )?;
    Ok("h = 20, 60, 100; fixed = 1".into())
}

fn decay() -> Outcome {
    let err = |e: pdml_core::Error| e.to_string();
    for k in 2..=50 {
        let w = exponential_decay_weights(k, 1.0 - 1e-12, DEFAULT_ALPHA).map_err(err)?;
        let mut uniform = vec![1.0 / (k - 1) as f64; k - 1];
        uniform.push(compute_current_weight(&uniform, DEFAULT_ALPHA).map_err(err)?);
        normalize(&mut uniform).map_err(err)?;
        let gap = w
            .iter()
            .zip(&uniform)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        ensure(gap <= 1e-9, || {
            format!("k = {k}: rate near 1 differs from uniform by {gap:e}")
        })?;
        let w = exponential_decay_weights(k, 0.98, DEFAULT_ALPHA).map_err(err)?;
        ensure(w[..k - 1].windows(2).all(|p| p[0] < p[1]), || {
            format!("k = {k}: rate 0.98 not age-decreasing")
        })?;
    }
    Ok("k = 2..50".into())
}

fn configs_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn determinism(root: &Path) -> Outcome {
    let ov = |k: &str, v: &str| (k.to_string(), v.to_string());
    let overrides = [
        ov("trainer.total_env_steps", "3000"),
        ov("trainer.warmup_steps", "1000"),
        ov("trainer.eval_interval", "1000"),
    ];
    let a = RunConfig::load(&configs_dir().join("pendulum_pdml.toml"), &overrides)
        .map_err(|e| e.to_string())?;
    let mut b = a.clone();
    b.run.name = format!("{}_repeat", a.run.name);
    let ra = run_training(&a, &root.join("determinism")).map_err(|e| e.to_string())?;
    let rb = run_training(&b, &root.join("determinism")).map_err(|e| e.to_string())?;
    for f in DETERMINISTIC_FILES {
        let x = std::fs::read(ra.dir.join(f)).map_err(|e| e.to_string())?;
        let y = std::fs::read(rb.dir.join(f)).map_err(|e| e.to_string())?;
        ensure(x == y, || format!("{f} differs"))?;
    }
    Ok(format!("{} files identical", DETERMINISTIC_FILES.len()))
}

fn row<'a>(rows: &'a [SummaryRow], config: &str, step: u64) -> Option<&'a SummaryRow> {
    rows.iter()
        .find(|r| r.config == config && r.env_step == step)
}

fn benchmark(root: &Path) -> Outcome {
    let jobs = std::env::var("PDML_ACCEPTANCE_JOBS")
        .ok()
        .and_then(|s| s.parse().ok())
        .unwrap_or(1);
    let configs = vec![
        configs_dir().join("pendulum_pdml.toml"),
        configs_dir().join("pendulum_uniform.toml"),
    ];
    let loaded: Vec<RunConfig> = configs
        .iter()
        .map(|p| RunConfig::load(p, &[]))
        .collect::<pdml::Result<_>>()
        .map_err(|e| e.to_string())?;
    let (pdml_name, uniform_name) = (loaded[0].run.name.clone(), loaded[1].run.name.clone());
    let seeds: Vec<u64> = (1..=5).collect();
    let root = root.join("benchmark");
    let out = compare(&CompareOptions {
        configs,
        seeds: seeds.clone(),
        metric: Metric::CurrentError,
        jobs,
        root: root.clone(),
        overrides: vec![],
    })
    .map_err(|e| e.to_string())?;
    ensure(out.success(), || format!("runs failed: {:?}", out.failures))?;

    let mut steps: Vec<u64> = out
        .summary
        .iter()
        .filter(|r| r.config == pdml_name)
        .map(|r| r.env_step)
        .collect();
    steps.sort_unstable();
    let last3 = &steps[steps.len().saturating_sub(3)..];
    let mut notes = Vec::new();
    let mut error_ok = last3.len() == 3;
    for &s in last3 {
        let (p, u) = (
            row(&out.summary, &pdml_name, s),
            row(&out.summary, &uniform_name, s),
        );
        let (Some(p), Some(u)) = (p, u) else {
            return Err(format!("missing error summary at step {s}"));
        };
        error_ok &= p.median <= u.median;
        notes.push(format!("{s}: {:.4} vs {:.4}", p.median, u.median));
    }

    let mut returns = Vec::new();
    for cfg in &loaded {
        for &seed in &seeds {
            let mut c = cfg.clone();
            c.trainer.seed = seed;
            let points = read_series(&run_dir(&root, &c).join(RETURNS), "mean_return")
                .map_err(|e| e.to_string())?;
            returns.push(Series {
                config: c.run.name.clone(),
                seed,
                points,
            });
        }
    }
    let finals = final_rows(&summarize(&returns));
    let get = |name: &str| finals.iter().find(|r| r.config == name).map(|r| r.median);
    let (Some(rp), Some(ru)) = (get(&pdml_name), get(&uniform_name)) else {
        return Err("missing return summary".into());
    };
    let return_ok = rp >= ru - 0.05 * ru.abs();
    let detail = format!(
        "(a) median current error pdml vs uniform [{}] {}; (b) median final return {rp:.1} vs {ru:.1} {}",
        notes.join(", "),
        if error_ok { "ok" } else { "not met" },
        if return_ok { "ok" } else { "not met" },
    );
    if error_ok && return_ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn main() {
    let keep = std::env::var_os("PDML_ACCEPTANCE_DIR").map(PathBuf::from);
    let temp = tempfile::tempdir().expect("temporary directory");
    let root = keep.unwrap_or_else(|| temp.path().to_path_buf());
    let secs = |s| Some(Duration::from_secs(s));

    let criteria: Vec<(&str, Box<dyn FnOnce() -> Outcome + '_>)> = vec![
        ("weight law", Box::new(|| timed(secs(1), weight_law))),
        (
            "tv upper bound",
            Box::new(|| timed(secs(30), tv_upper_bound)),
        ),
        (
            "mixture inequality",
            Box::new(|| timed(secs(1), proposition)),
        ),
        ("occupancy lemma", Box::new(|| timed(secs(30), lemma))),
        ("return bound", Box::new(|| timed(secs(60), theorem))),
        ("gradient checks", Box::new(|| timed(secs(60), gradients))),
        ("rollout schedule", Box::new(|| timed(None, schedule))),
        (
            "pendulum benchmark",
            Box::new(|| timed(None, || benchmark(&root))),
        ),
        ("exponential decay", Box::new(|| timed(None, decay))),
        (
            "determinism",
            Box::new(|| timed(None, || determinism(&root))),
        ),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.into_iter().enumerate() {
        let (tag, detail) = match check() {
            Ok(d) => ("PASS", d),
            Err(d) => {
                failed += 1;
                ("FAIL", d)
            }
        };
        println!("criterion {:>2} {tag}  {name}: {detail}", i + 1);
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
