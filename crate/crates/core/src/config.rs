//! Run configuration: one structured TOML file with five sections (`hand`,
//! `env`, `controller`, `rl`, `vge`) plus run identity at the top level.
//! Command lines may override any key with a dotted path. Unknown keys are
//! hard errors so configs cannot silently drift.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::controllers::{CsConfig, IgmConfig};
use crate::env::EnvConfig;
use crate::kinematics::HandModel;
use crate::rl::{ControllerKind, RlConfig};
use crate::trainer::VgeConfig;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Read {
        path: String,
        source: std::io::Error,
    },
    #[error("config parse error: {0}")]
    Parse(String),
    #[error("bad override '{0}': expected key=value with a dotted key")]
    BadOverride(String),
    #[error("invalid config: {0}")]
    Invalid(String),
}

/// Controller selection and parameters (config section `controller`).
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ControllerConfig {
    pub kind: ControllerKind,
    pub alpha: f64,
    pub delta_o: [f64; 3],
    /// Contact-switch trajectory length, steps.
    #[serde(rename = "H")]
    pub h_steps: usize,
    pub vel_min: f64,
    pub vel_max: f64,
    pub damping_lambda: f64,
    pub max_action_norm: f64,
    pub torque_weight: f64,
}

impl Default for ControllerConfig {
    fn default() -> Self {
        let igm = IgmConfig::default();
        let cs = CsConfig::default();
        ControllerConfig {
            kind: ControllerKind::Fg,
            alpha: igm.alpha,
            delta_o: igm.delta_o,
            h_steps: cs.h_steps,
            vel_min: cs.vel_min,
            vel_max: cs.vel_max,
            damping_lambda: igm.damping_lambda,
            max_action_norm: igm.max_action_norm,
            torque_weight: igm.torque_weight,
        }
    }
}

impl ControllerConfig {
    pub fn igm(&self) -> IgmConfig {
        IgmConfig {
            alpha: self.alpha,
            delta_o: self.delta_o,
            damping_lambda: self.damping_lambda,
            max_action_norm: self.max_action_norm,
            torque_weight: self.torque_weight,
        }
    }

    pub fn cs(&self, dt: f64) -> CsConfig {
        CsConfig {
            h_steps: self.h_steps,
            vel_min: self.vel_min,
            vel_max: self.vel_max,
            dt,
        }
    }
}

/// The complete configuration for one run.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub run_name: String,
    pub seed: u64,
    pub out_dir: String,
    pub hand: HandModel,
    pub env: EnvConfig,
    pub controller: ControllerConfig,
    pub rl: RlConfig,
    pub vge: VgeConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            run_name: "run".into(),
            seed: 0,
            out_dir: "runs".into(),
            hand: HandModel::default_hand(),
            env: EnvConfig::default(),
            controller: ControllerConfig::default(),
            rl: RlConfig::default(),
            vge: VgeConfig::default(),
        }
    }
}

impl RunConfig {
    /// Load from an optional TOML file, then apply `key=value` overrides
    /// with dotted keys (e.g. `vge.total_steps=2000`).
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<RunConfig, ConfigError> {
        let mut table: toml::Table = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|source| ConfigError::Read {
                    path: p.display().to_string(),
                    source,
                })?;
                text.parse::<toml::Table>()
                    .map_err(|e| ConfigError::Parse(e.to_string()))?
            }
            None => toml::Table::new(),
        };
        for ov in overrides {
            apply_override(&mut table, ov)?;
        }
        let cfg: RunConfig = toml::Value::Table(table)
            .try_into()
            .map_err(|e| ConfigError::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Parse a config from TOML text (same schema as the file form).
    pub fn load_from_str(text: &str) -> Result<RunConfig, ConfigError> {
        let cfg: RunConfig =
            toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.hand
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.env
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        if self.controller.alpha <= 0.0 {
            return Err(ConfigError::Invalid("controller.alpha must be > 0".into()));
        }
        if self.controller.damping_lambda < 0.0 {
            return Err(ConfigError::Invalid(
                "controller.damping_lambda must be >= 0".into(),
            ));
        }
        if self.controller.max_action_norm <= 0.0 {
            return Err(ConfigError::Invalid(
                "controller.max_action_norm must be > 0".into(),
            ));
        }
        if self.controller.h_steps < 1 {
            return Err(ConfigError::Invalid("controller.H must be >= 1".into()));
        }
        if !(self.controller.vel_min <= self.controller.vel_max && self.controller.vel_min >= 0.0)
        {
            return Err(ConfigError::Invalid(
                "controller velocity range must satisfy 0 <= vel_min <= vel_max".into(),
            ));
        }
        if self.vge.h_commit < 1 {
            return Err(ConfigError::Invalid("vge.H must be >= 1".into()));
        }
        if self.vge.beta0 < 0.0 {
            return Err(ConfigError::Invalid("vge.beta0 must be >= 0".into()));
        }
        if self.run_name.is_empty() {
            return Err(ConfigError::Invalid("run_name must not be empty".into()));
        }
        Ok(())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }
}

/// Insert `key=value` into the TOML tree, creating intermediate tables.
fn apply_override(table: &mut toml::Table, ov: &str) -> Result<(), ConfigError> {
    let (key, value) = ov
        .split_once('=')
        .ok_or_else(|| ConfigError::BadOverride(ov.to_string()))?;
    let key = key.trim();
    if key.is_empty() {
        return Err(ConfigError::BadOverride(ov.to_string()));
    }
    // Parse the value through a scratch document so numbers, booleans,
    // arrays, and strings all behave like TOML literals. Bare words fall
    // back to strings ("FG", "polygon", ...).
    let parsed: toml::Value = match format!("v = {}", value.trim()).parse::<toml::Table>() {
        Ok(t) => t["v"].clone(),
        Err(_) => toml::Value::String(value.trim().to_string()),
    };
    let parts: Vec<&str> = key.split('.').collect();
    let mut cursor = table;
    for part in &parts[..parts.len() - 1] {
        cursor = cursor
            .entry(part.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()))
            .as_table_mut()
            .ok_or_else(|| ConfigError::BadOverride(ov.to_string()))?;
    }
    cursor.insert(parts[parts.len() - 1].to_string(), parsed);
    Ok(())
}
