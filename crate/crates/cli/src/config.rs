//! Run configuration: JSON files layered over the built-in preset.
//!
//! Every configuration starts from the `paper-4x4` values. A config file
//! (a flat JSON object) and `--set key=value` overrides replace individual
//! keys; unknown keys are rejected. The validated configuration is
//! serialized canonically and hashed, and that fingerprint is stamped on
//! every output file.

use std::fs;
use std::path::{Path, PathBuf};

use htcontrol::closed_loop::LoopOptions;
use htcontrol::model::{is_known_state, LatticeSpec, Metric, Site};
use htcontrol::propagate::DEFAULT_ORACLE_MAX_DIM;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

pub const PRESET_4X4: &str = "paper-4x4";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub rows: usize,
    pub cols: usize,
    pub coupling: f64,
    pub periodic: bool,
    pub control_sites: Vec<Site>,
    pub u_max: f64,
    pub gamma: f64,
    pub dt: f64,
    pub target: String,
    pub steps: usize,
    pub ranks: Vec<usize>,
    pub tail_window: usize,
    pub initial_state: String,
    pub seed: u64,
    /// `null` disables spectra snapshots.
    pub spectra_snapshot_stride: Option<usize>,
    pub renormalize_after_truncation: bool,
    pub metric: Metric,
    /// Largest Hilbert-space dimension for which the dense exact propagator
    /// is used as a cross-check.
    pub oracle_max_dim: usize,
}

impl RunConfig {
    /// The 4×4 experiment started from `random_product:0.6` with seed 1.
    pub fn heisenberg_4x4() -> Self {
        let spec = LatticeSpec::heisenberg_4x4();
        Self {
            rows: spec.rows,
            cols: spec.cols,
            coupling: spec.coupling,
            periodic: spec.periodic,
            control_sites: spec.control_sites,
            u_max: spec.u_max,
            gamma: spec.gamma,
            dt: spec.dt,
            target: spec.target,
            steps: spec.steps,
            ranks: spec.ranks,
            tail_window: spec.tail_window,
            initial_state: "random_product:0.6".into(),
            seed: 1,
            spectra_snapshot_stride: Some(10),
            renormalize_after_truncation: false,
            metric: Metric::MinPhase,
            oracle_max_dim: DEFAULT_ORACLE_MAX_DIM,
        }
    }

    pub fn lattice(&self) -> LatticeSpec {
        LatticeSpec {
            rows: self.rows,
            cols: self.cols,
            coupling: self.coupling,
            periodic: self.periodic,
            control_sites: self.control_sites.clone(),
            u_max: self.u_max,
            gamma: self.gamma,
            dt: self.dt,
            target: self.target.clone(),
            steps: self.steps,
            ranks: self.ranks.clone(),
            tail_window: self.tail_window,
        }
    }

    pub fn loop_options(&self) -> LoopOptions {
        LoopOptions {
            spectra_stride: self.spectra_snapshot_stride,
            renormalize_after_truncation: self.renormalize_after_truncation,
            metric: self.metric,
            instrument: false,
        }
    }

    pub fn validate(&self) -> CliResult<()> {
        self.lattice().validate()?;
        if !is_known_state(&self.initial_state) {
            return Err(config_error(
                "initial_state",
                format!("unknown state `{}`", self.initial_state),
            ));
        }
        if self.spectra_snapshot_stride == Some(0) {
            return Err(config_error("spectra_snapshot_stride", "must be at least 1 (or null)"));
        }
        if self.oracle_max_dim == 0 {
            return Err(config_error("oracle_max_dim", "must be at least 1"));
        }
        Ok(())
    }

    pub fn canonical_json(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }

    /// Lowercase hex SHA-256 of [`RunConfig::canonical_json`].
    pub fn fingerprint(&self) -> String {
        hex::encode(Sha256::digest(self.canonical_json().as_bytes()))
    }
}

fn config_error(key: &str, message: impl Into<String>) -> CliError {
    CliError::Config {
        key: key.into(),
        message: message.into(),
    }
}

/// A parsed configuration plus the output directory named in the file, if any.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadedConfig {
    pub config: RunConfig,
    pub output_dir: Option<PathBuf>,
}

/// Splits `key=value`; the value is read as JSON and falls back to a plain
/// string, so `--set initial_state=neel` and `--set ranks=[4]` both work.
pub fn parse_override(text: &str) -> CliResult<(String, Value)> {
    let (key, raw) = text
        .split_once('=')
        .ok_or_else(|| CliError::Usage(format!("override `{text}` is not of the form key=value")))?;
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    Ok((key.trim().to_string(), value))
}

/// Builds a validated configuration from an optional preset name, an
/// optional JSON file and inline overrides, applied in that order.
pub fn parse_config(
    preset: Option<&str>,
    path: Option<&Path>,
    overrides: &[(String, Value)],
) -> CliResult<LoadedConfig> {
    if preset.is_none() && path.is_none() {
        return Err(CliError::Usage("give --config <path> or --preset paper-4x4".into()));
    }
    if let Some(name) = preset {
        check_preset(name)?;
    }
    let mut entries = Vec::new();
    if let Some(path) = path {
        let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let value: Value = serde_json::from_str(&text).map_err(|e| CliError::parse(path, e.line(), e.to_string()))?;
        let Value::Object(object) = value else {
            return Err(CliError::parse(path, 1, "config must be a JSON object"));
        };
        entries.extend(object);
    }
    entries.extend(overrides.iter().cloned());

    let base = serde_json::to_value(RunConfig::heisenberg_4x4()).expect("config serializes");
    let Value::Object(base) = base else { unreachable!() };
    let mut merged: Map<String, Value> = base.clone();
    let mut output_dir = None;
    for (key, value) in entries {
        match key.as_str() {
            "preset" => {
                let name = value
                    .as_str()
                    .ok_or_else(|| config_error("preset", "must be a string"))?;
                check_preset(name)?;
            }
            "output_dir" => {
                let dir = value
                    .as_str()
                    .ok_or_else(|| config_error("output_dir", "must be a string"))?;
                output_dir = Some(PathBuf::from(dir));
            }
            _ if !base.contains_key(&key) => {
                return Err(config_error(&key, "unknown key"));
            }
            _ => {
                // Deserialize the preset with only this key replaced, so a
                // type error is attributed to the key that caused it.
                let mut probe = base.clone();
                probe.insert(key.clone(), value.clone());
                serde_json::from_value::<RunConfig>(Value::Object(probe))
                    .map_err(|e| config_error(&key, e.to_string()))?;
                merged.insert(key, value);
            }
        }
    }
    let config: RunConfig =
        serde_json::from_value(Value::Object(merged)).map_err(|e| CliError::Usage(e.to_string()))?;
    config.validate()?;
    Ok(LoadedConfig { config, output_dir })
}

fn check_preset(name: &str) -> CliResult<()> {
    if name == PRESET_4X4 {
        Ok(())
    } else {
        Err(config_error("preset", format!("unknown preset `{name}`")))
    }
}
