//! Plain-text `key = value` run configuration.

use std::collections::BTreeMap;
use std::path::Path;

use super::CliError;

/// Keys accepted in a config file. Each mirrors the long flag of the same
/// name with dashes replaced by underscores.
pub const KNOWN_KEYS: &[&str] = &[
    "activation",
    "alphas",
    "draws",
    "hidden",
    "iterations",
    "lr",
    "n",
    "n_same",
    "out_dir",
    "quantiles",
    "regime",
    "res",
    "samples",
    "seed",
    "sigma_schedule",
];

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConfigFile {
    values: BTreeMap<String, String>,
}

impl ConfigFile {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let mut values = BTreeMap::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| CliError::usage(format!("config line {}: expected `key = value`", n + 1)))?;
            let key = key.trim().replace('-', "_");
            if !KNOWN_KEYS.contains(&key.as_str()) {
                return Err(CliError::usage(format!("config line {}: unknown key `{key}`", n + 1)));
            }
            values.insert(key, value.trim().to_string());
        }
        Ok(Self { values })
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::io(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }
}
