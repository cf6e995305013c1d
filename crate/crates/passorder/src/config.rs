//! `key = value` configuration files. Command-line flags override them.

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ConfigError {
    #[error("{path}:{line}: expected 'key = value'")]
    Syntax { path: String, line: usize },
    #[error("{path}:{line}: duplicate key '{key}'")]
    Duplicate { path: String, line: usize, key: String },
    #[error("unknown config key '{0}'")]
    UnknownKey(String),
    #[error("config key '{key}': cannot parse '{value}'")]
    BadValue { key: String, value: String },
    #[error("cannot read config {path}: {message}")]
    Io { path: String, message: String },
}

/// Keys accepted in a config file.
pub const KEYS: &[&str] = &[
    "backend",
    "opt_path",
    "timeout_secs",
    "seed",
    "workers",
    "budget_evals",
    "budget_seconds",
    "max_len",
    "token_limit",
    "patterns",
    "vocabulary",
];

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ConfigFile {
    values: BTreeMap<String, String>,
}

impl ConfigFile {
    pub fn parse(text: &str, path: &str) -> Result<Self, ConfigError> {
        let mut values = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .map(|(k, v)| (k.trim(), v.trim()))
                .filter(|(k, _)| !k.is_empty())
                .ok_or(ConfigError::Syntax { path: path.to_string(), line: i + 1 })?;
            if !KEYS.contains(&k) {
                return Err(ConfigError::UnknownKey(k.to_string()));
            }
            if values.insert(k.to_string(), v.to_string()).is_some() {
                return Err(ConfigError::Duplicate { path: path.to_string(), line: i + 1, key: k.to_string() });
            }
        }
        Ok(ConfigFile { values })
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError::Io { path: path.display().to_string(), message: e.to_string() })?;
        Self::parse(&text, &path.display().to_string())
    }

    pub fn get_str(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>, ConfigError> {
        self.get_str(key)
            .map(|v| v.parse().map_err(|_| ConfigError::BadValue { key: key.to_string(), value: v.to_string() }))
            .transpose()
    }

    /// `flag`, else the config value, else `None`.
    pub fn or<T: FromStr>(&self, flag: Option<T>, key: &str) -> Result<Option<T>, ConfigError> {
        match flag {
            Some(v) => Ok(Some(v)),
            None => self.get(key),
        }
    }

    pub fn values(&self) -> &BTreeMap<String, String> {
        &self.values
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_and_overrides() {
        let c = ConfigFile::parse("# run\nseed = 7\n\nbackend=mini\n", "c").unwrap();
        assert_eq!(c.get::<u64>("seed").unwrap(), Some(7));
        assert_eq!(c.or(Some(9u64), "seed").unwrap(), Some(9));
        assert_eq!(c.or::<u64>(None, "workers").unwrap(), None);
        assert_eq!(c.get_str("backend"), Some("mini"));
    }

    #[test]
    fn rejects_bad_input() {
        assert_eq!(ConfigFile::parse("seed 7", "c"), Err(ConfigError::Syntax { path: "c".into(), line: 1 }));
        assert_eq!(ConfigFile::parse("colour = red", "c"), Err(ConfigError::UnknownKey("colour".into())));
        assert!(matches!(ConfigFile::parse("seed=1\nseed=2", "c"), Err(ConfigError::Duplicate { line: 2, .. })));
        let c = ConfigFile::parse("seed = x", "c").unwrap();
        assert!(matches!(c.get::<u64>("seed"), Err(ConfigError::BadValue { .. })));
    }
}
