//! CSV metric streams written by a training run.
//!
//! | file              | columns                                                     |
//! |-------------------|-------------------------------------------------------------|
//! | `returns.csv`     | env_step, epoch, mean_return                                |
//! | `errors.csv`      | env_step, epoch, current_error, overall_error               |
//! | `compounding.csv` | env_step, h, compounding_error                              |
//! | `weights.csv`     | env_step, epoch, policy_id, weight, shift                   |
//! | `losses.csv`      | env_step, epoch, rollout_horizon, model_transitions, sac_updates, model_holdout_loss, critic_loss, actor_loss, alpha_loss, alpha |
//! | `timing.csv`      | env_step, epoch, wallclock_seconds, timestamp               |
//!
//! Everything except `timing.csv` is a deterministic function of the config
//! and seed. Timestamps are ISO-8601 UTC.

use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use pdml_core::trainer::EpochReport;

use crate::error::{AppError, Result};

pub const RETURNS: &str = "returns.csv";
pub const ERRORS: &str = "errors.csv";
pub const COMPOUNDING: &str = "compounding.csv";
pub const WEIGHTS: &str = "weights.csv";
pub const LOSSES: &str = "losses.csv";
pub const TIMING: &str = "timing.csv";

/// Files whose contents must be identical across same-seed runs.
pub const DETERMINISTIC_FILES: [&str; 5] = [RETURNS, ERRORS, COMPOUNDING, WEIGHTS, LOSSES];

struct Stream {
    path: PathBuf,
    w: csv::Writer<BufWriter<File>>,
}

impl Stream {
    fn create(dir: &Path, name: &str, header: &[&str]) -> Result<Self> {
        let path = dir.join(name);
        let file = File::create(&path).map_err(|e| AppError::io(&path, e))?;
        let mut w = csv::Writer::from_writer(BufWriter::new(file));
        w.write_record(header)
            .map_err(|e| AppError::format(&path, e))?;
        Ok(Self { path, w })
    }

    fn row(&mut self, fields: &[String]) -> Result<()> {
        self.w
            .write_record(fields)
            .map_err(|e| AppError::format(&self.path, e))
    }

    fn flush(&mut self) -> Result<()> {
        self.w.flush().map_err(|e| AppError::io(&self.path, e))
    }
}

pub struct MetricsWriter {
    returns: Stream,
    errors: Stream,
    compounding: Stream,
    weights: Stream,
    losses: Stream,
    timing: Stream,
}

fn num(x: f64) -> String {
    // Shortest round-trip representation keeps files bitwise comparable.
    if x.is_nan() {
        String::new()
    } else {
        format!("{x:?}")
    }
}

impl MetricsWriter {
    pub fn create(dir: &Path) -> Result<Self> {
        Ok(Self {
            returns: Stream::create(dir, RETURNS, &["env_step", "epoch", "mean_return"])?,
            errors: Stream::create(
                dir,
                ERRORS,
                &["env_step", "epoch", "current_error", "overall_error"],
            )?,
            compounding: Stream::create(dir, COMPOUNDING, &["env_step", "h", "compounding_error"])?,
            weights: Stream::create(
                dir,
                WEIGHTS,
                &["env_step", "epoch", "policy_id", "weight", "shift"],
            )?,
            losses: Stream::create(
                dir,
                LOSSES,
                &[
                    "env_step",
                    "epoch",
                    "rollout_horizon",
                    "model_transitions",
                    "sac_updates",
                    "model_holdout_loss",
                    "critic_loss",
                    "actor_loss",
                    "alpha_loss",
                    "alpha",
                ],
            )?,
            timing: Stream::create(
                dir,
                TIMING,
                &["env_step", "epoch", "wallclock_seconds", "timestamp"],
            )?,
        })
    }

    pub fn file_names() -> [&'static str; 6] {
        [RETURNS, ERRORS, COMPOUNDING, WEIGHTS, LOSSES, TIMING]
    }

    pub fn record(&mut self, r: &EpochReport, wallclock_seconds: f64) -> Result<()> {
        let (step, epoch) = (r.env_step.to_string(), r.epoch.to_string());
        for (i, (id, w)) in r.weights.iter().enumerate() {
            let shift = r.shifts.get(i).copied().unwrap_or(f64::NAN);
            self.weights.row(&[
                step.clone(),
                epoch.clone(),
                id.0.to_string(),
                num(*w),
                num(shift),
            ])?;
        }
        let l = &r.mean_losses;
        self.losses.row(&[
            step.clone(),
            epoch.clone(),
            r.rollout_horizon.to_string(),
            r.model_transitions_added.to_string(),
            r.sac_updates.to_string(),
            num(r.model_holdout_loss),
            num(l.critic_loss),
            num(l.actor_loss),
            num(l.alpha_loss),
            num(l.alpha),
        ])?;
        if let Some(e) = &r.eval {
            self.returns
                .row(&[step.clone(), epoch.clone(), num(e.mean_return)])?;
            self.errors.row(&[
                step.clone(),
                epoch.clone(),
                num(e.current_error),
                num(e.overall_error),
            ])?;
            for (h, v) in e.compounding_error.iter().enumerate() {
                self.compounding
                    .row(&[step.clone(), (h + 1).to_string(), num(*v)])?;
            }
        }
        let ts = chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true);
        self.timing
            .row(&[step, epoch, format!("{wallclock_seconds:.3}"), ts])?;
        self.flush()
    }

    pub fn flush(&mut self) -> Result<()> {
        for s in [
            &mut self.returns,
            &mut self.errors,
            &mut self.compounding,
            &mut self.weights,
            &mut self.losses,
            &mut self.timing,
        ] {
            s.flush()?;
        }
        Ok(())
    }
}

/// A numeric column of a metrics CSV, keyed by `env_step`.
pub fn read_series(path: &Path, column: &str) -> Result<Vec<(u64, f64)>> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| AppError::format(path, e))?;
    let headers = rdr
        .headers()
        .map_err(|e| AppError::format(path, e))?
        .clone();
    let find = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| AppError::format(path, format!("missing column '{name}'")))
    };
    let (si, ci) = (find("env_step")?, find(column)?);
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| AppError::format(path, e))?;
        let step: u64 = rec[si].parse().map_err(|e| AppError::format(path, e))?;
        let v: f64 = if rec[ci].is_empty() {
            f64::NAN
        } else {
            rec[ci].parse().map_err(|e| AppError::format(path, e))?
        };
        out.push((step, v));
    }
    Ok(out)
}
