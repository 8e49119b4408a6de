//! Multi-config, multi-seed comparisons with median / IQR summaries.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use crate::config::RunConfig;
use crate::error::{AppError, Result};
use crate::metrics::{self, read_series};
use crate::run::{run_dir, run_training};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Metric {
    Return,
    CurrentError,
    OverallError,
}

impl Metric {
    pub fn file_and_column(self) -> (&'static str, &'static str) {
        match self {
            Metric::Return => (metrics::RETURNS, "mean_return"),
            Metric::CurrentError => (metrics::ERRORS, "current_error"),
            Metric::OverallError => (metrics::ERRORS, "overall_error"),
        }
    }

    pub fn name(self) -> &'static str {
        self.file_and_column().1
    }
}

impl FromStr for Metric {
    type Err = AppError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "return" | "mean_return" => Ok(Metric::Return),
            "current_error" => Ok(Metric::CurrentError),
            "overall_error" => Ok(Metric::OverallError),
            other => Err(AppError::Usage(format!(
                "unknown metric '{other}' (expected return, current_error or overall_error)"
            ))),
        }
    }
}

/// One run's metric series.
#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub config: String,
    pub seed: u64,
    pub points: Vec<(u64, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub config: String,
    pub env_step: u64,
    pub n: usize,
    pub median: f64,
    pub q1: f64,
    pub q3: f64,
}

/// Linear-interpolation quantile of sorted data.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Median and quartiles per `(config, env_step)` across seeds, ignoring
/// missing values.
pub fn summarize(series: &[Series]) -> Vec<SummaryRow> {
    let mut groups: BTreeMap<(String, u64), Vec<f64>> = BTreeMap::new();
    for s in series {
        for &(step, v) in &s.points {
            if v.is_finite() {
                groups.entry((s.config.clone(), step)).or_default().push(v);
            }
        }
    }
    groups
        .into_iter()
        .map(|((config, env_step), mut v)| {
            v.sort_by(f64::total_cmp);
            SummaryRow {
                config,
                env_step,
                n: v.len(),
                median: quantile(&v, 0.5),
                q1: quantile(&v, 0.25),
                q3: quantile(&v, 0.75),
            }
        })
        .collect()
}

/// The last evaluation point of each config.
pub fn final_rows(rows: &[SummaryRow]) -> Vec<SummaryRow> {
    let mut last: BTreeMap<&str, &SummaryRow> = BTreeMap::new();
    for r in rows {
        last.insert(&r.config, r);
    }
    last.into_values().cloned().collect()
}

#[derive(Debug, Clone)]
pub struct CompareOptions {
    pub configs: Vec<PathBuf>,
    pub seeds: Vec<u64>,
    pub metric: Metric,
    pub jobs: usize,
    pub root: PathBuf,
    pub overrides: Vec<(String, String)>,
}

#[derive(Debug, Clone)]
pub struct CompareOutcome {
    pub merged_csv: PathBuf,
    pub summary_csv: PathBuf,
    pub summary: Vec<SummaryRow>,
    pub failures: Vec<String>,
    pub surviving_configs: usize,
}

impl CompareOutcome {
    pub fn success(&self) -> bool {
        self.failures.is_empty() && self.surviving_configs >= 2
    }
}

fn csv_err(path: &Path) -> impl Fn(csv::Error) -> AppError + '_ {
    move |e| AppError::format(path, e)
}

/// Runs every config over every seed, then writes `merged.csv` and
/// `summary.csv` under `<root>/compare/<metric>/`.
pub fn compare(opts: &CompareOptions) -> Result<CompareOutcome> {
    if opts.configs.len() < 2 {
        return Err(AppError::Usage("compare needs at least two configs".into()));
    }
    if opts.seeds.is_empty() {
        return Err(AppError::Usage("compare needs at least one seed".into()));
    }
    let mut loaded = Vec::new();
    let mut names = BTreeSet::new();
    for path in &opts.configs {
        let cfg = RunConfig::load(path, &opts.overrides)?;
        if !names.insert(cfg.run.name.clone()) {
            return Err(AppError::Usage(format!(
                "two configs share the run name '{}'",
                cfg.run.name
            )));
        }
        loaded.push(cfg);
    }
    let tasks: Vec<RunConfig> = loaded
        .iter()
        .flat_map(|c| {
            opts.seeds.iter().map(move |&seed| {
                let mut c = c.clone();
                c.trainer.seed = seed;
                c
            })
        })
        .collect();

    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<Option<std::result::Result<Series, String>>>> =
        Mutex::new(vec![None; tasks.len()]);
    let (file, column) = opts.metric.file_and_column();
    std::thread::scope(|scope| {
        for _ in 0..opts.jobs.max(1).min(tasks.len()) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(cfg) = tasks.get(i) else { break };
                let outcome = run_training(cfg, &opts.root)
                    .and_then(|_| read_series(&run_dir(&opts.root, cfg).join(file), column))
                    .map(|points| Series {
                        config: cfg.run.name.clone(),
                        seed: cfg.trainer.seed,
                        points,
                    })
                    .map_err(|e| format!("{} seed {}: {e}", cfg.run.name, cfg.trainer.seed));
                results
                    .lock()
                    .expect("no worker panics while holding the lock")[i] = Some(outcome);
            });
        }
    });

    let mut series = Vec::new();
    let mut failures = Vec::new();
    for r in results
        .into_inner()
        .expect("workers have finished")
        .into_iter()
        .flatten()
    {
        match r {
            Ok(s) => series.push(s),
            Err(e) => failures.push(e),
        }
    }
    let out_dir = opts.root.join("compare").join(opts.metric.name());
    fs::create_dir_all(&out_dir).map_err(|e| AppError::io(&out_dir, e))?;

    let merged_csv = out_dir.join("merged.csv");
    let mut w = csv::Writer::from_path(&merged_csv).map_err(csv_err(&merged_csv))?;
    w.write_record(["config", "seed", "env_step", column])
        .map_err(csv_err(&merged_csv))?;
    for s in &series {
        for &(step, v) in &s.points {
            let v = if v.is_nan() {
                String::new()
            } else {
                format!("{v:?}")
            };
            w.write_record([s.config.clone(), s.seed.to_string(), step.to_string(), v])
                .map_err(csv_err(&merged_csv))?;
        }
    }
    w.flush().map_err(|e| AppError::io(&merged_csv, e))?;

    let summary = summarize(&series);
    let summary_csv = out_dir.join("summary.csv");
    let mut w = csv::Writer::from_path(&summary_csv).map_err(csv_err(&summary_csv))?;
    w.write_record(["config", "env_step", "n", "median", "q1", "q3", "iqr"])
        .map_err(csv_err(&summary_csv))?;
    for r in &summary {
        w.write_record([
            r.config.clone(),
            r.env_step.to_string(),
            r.n.to_string(),
            format!("{:?}", r.median),
            format!("{:?}", r.q1),
            format!("{:?}", r.q3),
            format!("{:?}", r.q3 - r.q1),
        ])
        .map_err(csv_err(&summary_csv))?;
    }
    w.flush().map_err(|e| AppError::io(&summary_csv, e))?;

    let surviving_configs = series
        .iter()
        .map(|s| &s.config)
        .collect::<BTreeSet<_>>()
        .len();
    Ok(CompareOutcome {
        merged_csv,
        summary_csv,
        summary,
        failures,
        surviving_configs,
    })
}
