//! Run configuration files.
//!
//! A config is TOML with one section per component. Every key is optional
//! and falls back to its default; unknown keys are errors.
//!
//! ```toml
//! [run]
//! name = "pendulum_pdml"
//!
//! [trainer]
//! env = "pendulum"
//! weighting = "pdml"
//! rollout_schedule = { fixed = 1 }
//!
//! [ensemble]
//! hidden_sizes = [32, 32, 32]
//!
//! [sac]
//! hidden_sizes = [32, 32]
//! ```

use std::fs;
use std::path::Path;

use pdml_core::ensemble::EnsembleConfig;
use pdml_core::sac::SacConfig;
use pdml_core::trainer::TrainerConfig;
use serde::{Deserialize, Serialize};

use crate::error::{AppError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSection {
    /// Directory name under the output root.
    pub name: String,
    /// Environment steps between checkpoints; 0 writes only the final one.
    pub checkpoint_interval: u64,
    /// Also save the real replay buffer with each checkpoint.
    pub checkpoint_buffer: bool,
}

impl Default for RunSection {
    fn default() -> Self {
        Self {
            name: "run".into(),
            checkpoint_interval: 0,
            checkpoint_buffer: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub run: RunSection,
    pub trainer: TrainerConfig,
    pub ensemble: EnsembleConfig,
    pub sac: SacConfig,
}

impl RunConfig {
    /// Trainer config with the ensemble and SAC sections folded in.
    pub fn trainer_config(&self) -> TrainerConfig {
        TrainerConfig {
            ensemble: self.ensemble.clone(),
            sac: self.sac.clone(),
            ..self.trainer.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.run.name.is_empty()
            || self.run.name.contains(['/', '\\'])
            || self.run.name.starts_with('.')
        {
            return Err(AppError::Usage(
                "run.name: must be a non-empty directory name without separators".into(),
            ));
        }
        self.trainer_config()
            .validate()
            .map_err(|e| AppError::Usage(format!("invalid config: {e}")))
    }

    pub fn parse(text: &str, overrides: &[(String, String)]) -> Result<Self> {
        let mut table: toml::Table = text
            .parse()
            .map_err(|e: toml::de::Error| AppError::Usage(format!("config: {e}")))?;
        for (key, value) in overrides {
            set_dotted(&mut table, key, parse_value(value))?;
        }
        // Round-trip through text so deserialization errors carry key paths.
        let merged =
            toml::to_string(&table).map_err(|e| AppError::Usage(format!("config: {e}")))?;
        let cfg: RunConfig =
            toml::from_str(&merged).map_err(|e| AppError::Usage(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path, overrides: &[(String, String)]) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| AppError::io(path, e))?;
        Self::parse(&text, overrides).map_err(|e| match e {
            AppError::Usage(m) => AppError::Usage(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config types serialize to TOML")
    }
}

/// Parses `key=value` into a pair.
pub fn parse_override(s: &str) -> std::result::Result<(String, String), String> {
    let (k, v) = s
        .split_once('=')
        .ok_or_else(|| format!("override '{s}' is not of the form section.key=value"))?;
    let k = k.trim();
    if !k.contains('.') {
        return Err(format!(
            "override key '{k}' needs a section, e.g. trainer.{k}"
        ));
    }
    Ok((k.to_string(), v.trim().to_string()))
}

fn parse_value(raw: &str) -> toml::Value {
    let probe = format!("v = {raw}");
    match probe.parse::<toml::Table>() {
        Ok(mut t) => t
            .remove("v")
            .unwrap_or_else(|| toml::Value::String(raw.into())),
        Err(_) => toml::Value::String(raw.into()),
    }
}

fn set_dotted(table: &mut toml::Table, key: &str, value: toml::Value) -> Result<()> {
    let mut parts: Vec<&str> = key.split('.').collect();
    let last = parts
        .pop()
        .filter(|s| !s.is_empty())
        .ok_or_else(|| AppError::Usage(format!("bad override key '{key}'")))?;
    let mut cur = table;
    for p in parts {
        let entry = cur
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| AppError::Usage(format!("override '{key}': '{p}' is not a section")))?;
    }
    cur.insert(last.to_string(), value);
    Ok(())
}
