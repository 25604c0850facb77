//! Plain-text `key = value` experiment configs.
//!
//! Every subcommand declares its keys with defaults. The resolved settings
//! (defaults, then the config file, then command-line overrides) fully
//! determine a run and are hashed for provenance.

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use sha2::{Digest, Sha256};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {msg}")]
    Read { path: String, msg: String },
    #[error("config line {line}: expected `key = value`, got {text:?}")]
    Syntax { line: usize, text: String },
    #[error("key {key:?} given twice")]
    Duplicate { key: String },
    #[error("unknown key {key:?} for `{command}` (known: {known})")]
    UnknownKey { key: String, command: String, known: String },
    #[error("bad value {value:?} for {key}: {msg}")]
    BadValue { key: String, value: String, msg: String },
}

/// Parse `key = value` lines; `#` starts a comment.
pub fn parse_pairs(text: &str) -> Result<Vec<(String, String)>, ConfigError> {
    let mut out: Vec<(String, String)> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| ConfigError::Syntax { line: i + 1, text: raw.to_string() })?;
        let (k, v) = (k.trim(), v.trim());
        if k.is_empty() {
            return Err(ConfigError::Syntax { line: i + 1, text: raw.to_string() });
        }
        if out.iter().any(|(seen, _)| seen == k) {
            return Err(ConfigError::Duplicate { key: k.to_string() });
        }
        out.push((k.to_string(), v.to_string()));
    }
    Ok(out)
}

pub fn read_file(path: &Path) -> Result<Vec<(String, String)>, ConfigError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| ConfigError::Read { path: path.display().to_string(), msg: e.to_string() })?;
    parse_pairs(&text)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExperimentConfig {
    command: String,
    values: BTreeMap<String, String>,
}

impl ExperimentConfig {
    /// Overlay `layers` in order on the defaults, rejecting keys the command
    /// does not know.
    pub fn resolve(
        command: &str,
        defaults: &[(&str, &str)],
        layers: &[Vec<(String, String)>],
    ) -> Result<Self, ConfigError> {
        let mut values: BTreeMap<String, String> =
            defaults.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect();
        for layer in layers {
            for (k, v) in layer {
                if !values.contains_key(k) {
                    let known: Vec<&str> = defaults.iter().map(|(k, _)| *k).collect();
                    return Err(ConfigError::UnknownKey {
                        key: k.clone(),
                        command: command.to_string(),
                        known: known.join(", "),
                    });
                }
                values.insert(k.clone(), v.clone());
            }
        }
        Ok(ExperimentConfig { command: command.to_string(), values })
    }

    pub fn command(&self) -> &str {
        &self.command
    }

    pub fn values(&self) -> &BTreeMap<String, String> {
        &self.values
    }

    pub fn raw(&self, key: &str) -> &str {
        self.values.get(key).map(String::as_str).unwrap_or_else(|| panic!("key {key} has no default"))
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<T, ConfigError>
    where
        T::Err: std::fmt::Display,
    {
        let v = self.raw(key);
        v.parse().map_err(|e: T::Err| ConfigError::BadValue { key: key.to_string(), value: v.to_string(), msg: e.to_string() })
    }

    pub fn bad(&self, key: &str, msg: impl Into<String>) -> ConfigError {
        ConfigError::BadValue { key: key.to_string(), value: self.raw(key).to_string(), msg: msg.into() }
    }

    /// Canonical text: `command=<name>` then sorted `key=value` lines.
    pub fn canonical(&self) -> String {
        let mut s = format!("command={}\n", self.command);
        for (k, v) in &self.values {
            s += &format!("{k}={v}\n");
        }
        s
    }

    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.canonical().as_bytes()))
    }
}
