//! A training run on disk: `<root>/<name>/<seed>/` holding `manifest.json`,
//! the metric CSVs and `checkpoints/`.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use pdml_core::trainer::Trainer;
use serde::{Deserialize, Serialize};

use crate::checkpoint;
use crate::config::RunConfig;
use crate::error::{AppError, Result};
use crate::metrics::MetricsWriter;

/// Environment variable naming the default output root.
pub const RUNS_DIR_VAR: &str = "PDML_RUNS_DIR";
pub const MANIFEST: &str = "manifest.json";

pub fn default_root() -> PathBuf {
    std::env::var_os(RUNS_DIR_VAR)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("runs"))
}

pub fn run_dir(root: &Path, cfg: &RunConfig) -> PathBuf {
    root.join(&cfg.run.name).join(cfg.trainer.seed.to_string())
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct EnvironmentInfo {
    pub name: String,
    pub state_dim: usize,
    pub action_dim: usize,
    pub action_low: Vec<f64>,
    pub action_high: Vec<f64>,
    pub max_episode_steps: usize,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Running,
    Completed,
    Failed,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct RunManifest {
    pub name: String,
    pub seed: u64,
    pub code_version: String,
    pub started_at: String,
    pub finished_at: Option<String>,
    pub status: RunStatus,
    pub error: Option<String>,
    pub environment: EnvironmentInfo,
    /// Effective configuration as TOML.
    pub config: String,
    pub output_dir: PathBuf,
    /// Paths relative to `output_dir`.
    pub files: Vec<String>,
}

impl RunManifest {
    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join(MANIFEST);
        let text = fs::read_to_string(&path).map_err(|e| AppError::io(&path, e))?;
        serde_json::from_str(&text).map_err(|e| AppError::format(&path, e))
    }

    fn save(&self, dir: &Path) -> Result<()> {
        let path = dir.join(MANIFEST);
        checkpoint::write_atomic(&path, |w| {
            serde_json::to_writer_pretty(&mut *w, self).map_err(std::io::Error::other)
        })
    }
}

fn now() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true)
}

fn relative(dir: &Path, paths: Vec<PathBuf>) -> Vec<String> {
    paths
        .into_iter()
        .map(|p| {
            p.strip_prefix(dir)
                .unwrap_or(&p)
                .to_string_lossy()
                .into_owned()
        })
        .collect()
}

fn save_checkpoint(dir: &Path, trainer: &Trainer, with_buffer: bool) -> Result<Vec<String>> {
    let base = dir.join("checkpoints");
    let mut files = checkpoint::save_agent(&base.join("agent"), &trainer.agent)?;
    files.extend(checkpoint::save_ensemble(
        &base.join("model"),
        &trainer.model,
    )?);
    if with_buffer {
        let p = base.join("buffer.bin");
        checkpoint::save_buffer(&p, &trainer.real)?;
        files.push(p);
    }
    Ok(relative(dir, files))
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub dir: PathBuf,
    pub manifest: RunManifest,
}

/// Trains to completion, writing metrics as it goes. On failure the
/// manifest records the error and every output written so far is kept.
pub fn run_training(cfg: &RunConfig, root: &Path) -> Result<RunOutcome> {
    cfg.validate()?;
    let dir = run_dir(root, cfg);
    fs::create_dir_all(&dir).map_err(|e| AppError::io(&dir, e))?;
    let tc = cfg.trainer_config();
    let spec = tc.env.make().spec().clone();
    let mut files: Vec<String> = MetricsWriter::file_names()
        .iter()
        .map(|s| s.to_string())
        .collect();
    let mut manifest = RunManifest {
        name: cfg.run.name.clone(),
        seed: tc.seed,
        code_version: env!("CARGO_PKG_VERSION").to_string(),
        started_at: now(),
        finished_at: None,
        status: RunStatus::Running,
        error: None,
        environment: EnvironmentInfo {
            name: spec.name.to_string(),
            state_dim: spec.state_dim,
            action_dim: spec.action_dim,
            action_low: spec.action_low.clone(),
            action_high: spec.action_high.clone(),
            max_episode_steps: spec.max_episode_steps,
        },
        config: cfg.to_toml(),
        output_dir: dir.clone(),
        files: files.clone(),
    };
    manifest.save(&dir)?;
    let mut writer = MetricsWriter::create(&dir)?;

    let started = Instant::now();
    let interval = cfg.run.checkpoint_interval;
    let with_buffer = cfg.run.checkpoint_buffer;
    let result = Trainer::new(tc)
        .map_err(AppError::from)
        .and_then(|mut trainer| {
            let mut side: Option<AppError> = None;
            let mut next_ckpt = interval;
            let outcome = trainer.run(|t, report| {
                let mut step = || -> Result<()> {
                    writer.record(report, started.elapsed().as_secs_f64())?;
                    if interval > 0 && report.env_step >= next_ckpt {
                        save_checkpoint(&dir, t, with_buffer)?;
                        next_ckpt = (report.env_step / interval + 1) * interval;
                    }
                    Ok(())
                };
                step().map_err(|e| {
                    side = Some(e);
                    pdml_core::Error::Precondition("run output failed".into())
                })
            });
            if let Some(e) = side {
                return Err(e);
            }
            outcome?;
            save_checkpoint(&dir, &trainer, with_buffer)
        });
    writer.flush()?;
    manifest.finished_at = Some(now());
    match result {
        Ok(ckpt) => {
            files.extend(ckpt);
            manifest.files = files;
            manifest.status = RunStatus::Completed;
            manifest.save(&dir)?;
            Ok(RunOutcome { dir, manifest })
        }
        Err(e) => {
            manifest.status = RunStatus::Failed;
            manifest.error = Some(e.to_string());
            manifest.save(&dir)?;
            Err(AppError::Failed(format!(
                "run {} seed {} failed: {e}",
                cfg.run.name, cfg.trainer.seed
            )))
        }
    }
}
