//! `key = value` config files. Keys mirror the long flag names (dashes and
//! underscores are interchangeable); `#` starts a comment. Values from the
//! file fill in flags that were not given on the command line.

use crate::error::CliError;
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

#[derive(Debug, Default)]
pub struct ConfigMap {
    entries: BTreeMap<String, String>,
}

fn canonical(key: &str) -> String {
    key.trim().replace('-', "_").to_ascii_lowercase()
}

impl ConfigMap {
    pub fn load(path: Option<&Path>) -> Result<ConfigMap, CliError> {
        let Some(path) = path else {
            return Ok(ConfigMap::default());
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::usage(format!("config {}: {e}", path.display())))?;
        let mut entries = BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(CliError::usage(format!(
                    "config {} line {}: expected key = value",
                    path.display(),
                    lineno + 1
                )));
            };
            entries.insert(canonical(key), value.trim().to_string());
        }
        Ok(ConfigMap { entries })
    }

    /// Command-line value, else config value, else None.
    pub fn merge<T: FromStr>(&self, flag: Option<T>, key: &str) -> Result<Option<T>, CliError> {
        if flag.is_some() {
            return Ok(flag);
        }
        match self.entries.get(&canonical(key)) {
            None => Ok(None),
            Some(raw) => raw.parse::<T>().map(Some).map_err(|_| {
                CliError::usage(format!("config key {key}: cannot parse {raw:?}"))
            }),
        }
    }

    /// Same, with a default for when neither source provides the value.
    pub fn merge_or<T: FromStr>(
        &self,
        flag: Option<T>,
        key: &str,
        default: T,
    ) -> Result<T, CliError> {
        Ok(self.merge(flag, key)?.unwrap_or(default))
    }

    pub fn require<T: FromStr>(&self, flag: Option<T>, key: &str) -> Result<T, CliError> {
        self.merge(flag, key)?
            .ok_or_else(|| CliError::usage(format!("--{key} is required")))
    }

    pub fn merge_path(&self, flag: Option<PathBuf>, key: &str) -> Option<PathBuf> {
        flag.or_else(|| self.entries.get(&canonical(key)).map(PathBuf::from))
    }
}
