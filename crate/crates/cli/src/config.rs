//! Line-based `key = value` configuration with `#` comments.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: expected `key = value`, got '{text}'")]
    Syntax { line: usize, text: String },
    #[error("line {line}: key '{key}' given twice")]
    Duplicate { key: String, line: usize },
    #[error("missing required key '{0}'")]
    Missing(String),
    #[error("key '{key}': cannot parse '{value}' as {expected}")]
    Type {
        key: String,
        value: String,
        expected: &'static str,
    },
    #[error("key '{key}': {message}")]
    Invalid { key: String, message: String },
    #[error("unknown key '{0}'")]
    Unknown(String),
    #[error("cannot read config {path}: {message}")]
    Read { path: String, message: String },
}

impl ConfigError {
    pub fn invalid(key: &str, message: impl Into<String>) -> Self {
        ConfigError::Invalid {
            key: key.to_string(),
            message: message.into(),
        }
    }
}

/// Every key any command understands. Anything else is rejected so typos
/// surface instead of silently falling back to defaults.
pub const KNOWN_KEYS: &[&str] = &[
    "command",
    "output",
    "seed",
    "a.kind",
    "a.alpha",
    "a.value",
    "a.file",
    "a.name",
    "a.case",
    "a.K",
    "hypothesis.samples",
    "beta.kind",
    "beta.scale",
    "b.value",
    "c.value",
    "grid.N",
    "grid.gamma",
    "time.M",
    "T",
    "omega",
    "y0.kind",
    "epsilon",
    "cg.tol",
    "cg.max_iters",
    "eps_list",
    "s_list",
    "carleman.c1",
    "carleman.lambda",
    "carleman.samples",
    "carleman.variant",
    "cacciopoli.s",
    "nl",
    "fp.tol",
    "fp.max_iters",
    "t0",
    "samples",
    "power_iters",
    "hardy.samples",
];

#[derive(Debug, Clone, Default)]
pub struct Config {
    values: BTreeMap<String, String>,
    base: PathBuf,
}

impl Config {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut values = BTreeMap::new();
        let mut lines = BTreeMap::new();
        for (k, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| ConfigError::Syntax {
                line: k + 1,
                text: raw.trim().to_string(),
            })?;
            let key = key.trim();
            if key.is_empty() {
                return Err(ConfigError::Syntax {
                    line: k + 1,
                    text: raw.trim().to_string(),
                });
            }
            if !KNOWN_KEYS.contains(&key) {
                return Err(ConfigError::Unknown(key.to_string()));
            }
            if lines.insert(key.to_string(), k + 1).is_some() {
                return Err(ConfigError::Duplicate {
                    key: key.to_string(),
                    line: k + 1,
                });
            }
            values.insert(key.to_string(), value.trim().to_string());
        }
        Ok(Self {
            values,
            base: PathBuf::new(),
        })
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Read {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        let mut cfg = Self::parse(&text)?;
        cfg.base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(cfg)
    }

    pub fn set(&mut self, key: &str, value: impl Into<String>) {
        self.values.insert(key.to_string(), value.into());
    }

    pub fn raw(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    pub fn require(&self, key: &str) -> Result<&str, ConfigError> {
        self.raw(key)
            .ok_or_else(|| ConfigError::Missing(key.to_string()))
    }

    fn parse_value<T: FromStr>(
        &self,
        key: &str,
        value: &str,
        expected: &'static str,
    ) -> Result<T, ConfigError> {
        value.parse().map_err(|_| ConfigError::Type {
            key: key.to_string(),
            value: value.to_string(),
            expected,
        })
    }

    pub fn f64(&self, key: &str) -> Result<f64, ConfigError> {
        let v = self.require(key)?;
        self.parse_value(key, v, "a number")
    }

    pub fn f64_or(&self, key: &str, default: f64) -> Result<f64, ConfigError> {
        match self.raw(key) {
            Some(v) => self.parse_value(key, v, "a number"),
            None => Ok(default),
        }
    }

    pub fn usize(&self, key: &str) -> Result<usize, ConfigError> {
        let v = self.require(key)?;
        self.parse_value(key, v, "a non-negative integer")
    }

    pub fn usize_or(&self, key: &str, default: usize) -> Result<usize, ConfigError> {
        match self.raw(key) {
            Some(v) => self.parse_value(key, v, "a non-negative integer"),
            None => Ok(default),
        }
    }

    pub fn u64_or(&self, key: &str, default: u64) -> Result<u64, ConfigError> {
        match self.raw(key) {
            Some(v) => self.parse_value(key, v, "a non-negative integer"),
            None => Ok(default),
        }
    }

    pub fn str_or<'a>(&'a self, key: &str, default: &'a str) -> &'a str {
        self.raw(key).unwrap_or(default)
    }

    /// Comma-separated numbers.
    pub fn list(&self, key: &str) -> Result<Vec<f64>, ConfigError> {
        let v = self.require(key)?;
        v.split(',')
            .map(|s| self.parse_value(key, s.trim(), "a comma-separated list of numbers"))
            .collect()
    }

    pub fn list_or(&self, key: &str, default: &[f64]) -> Result<Vec<f64>, ConfigError> {
        if self.raw(key).is_some() {
            self.list(key)
        } else {
            Ok(default.to_vec())
        }
    }

    /// Path value resolved against the config file's directory.
    pub fn path(&self, key: &str) -> Result<PathBuf, ConfigError> {
        let p = PathBuf::from(self.require(key)?);
        Ok(if p.is_absolute() {
            p
        } else {
            self.base.join(p)
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_comments_and_whitespace() {
        let c =
            Config::parse("# header\ncommand = validate  # trailing\n\n a.alpha=0.5\n").unwrap();
        assert_eq!(c.raw("command"), Some("validate"));
        assert_eq!(c.f64("a.alpha").unwrap(), 0.5);
    }

    #[test]
    fn reports_offending_key() {
        let c = Config::parse("grid.N = many").unwrap();
        let e = c.usize("grid.N").unwrap_err();
        assert!(e.to_string().contains("grid.N"));
        assert_eq!(c.f64("T").unwrap_err(), ConfigError::Missing("T".into()));
    }

    #[test]
    fn rejects_unknown_duplicate_and_malformed() {
        assert_eq!(
            Config::parse("grid.n = 3").unwrap_err(),
            ConfigError::Unknown("grid.n".into())
        );
        assert!(matches!(
            Config::parse("T = 1\nT = 2"),
            Err(ConfigError::Duplicate { .. })
        ));
        assert!(matches!(
            Config::parse("just words"),
            Err(ConfigError::Syntax { line: 1, .. })
        ));
    }

    #[test]
    fn lists() {
        let c = Config::parse("eps_list = 1e-2, 1e-3,1e-4").unwrap();
        assert_eq!(c.list("eps_list").unwrap(), vec![1e-2, 1e-3, 1e-4]);
        let c = Config::parse("eps_list = 1e-2, x").unwrap();
        assert!(c.list("eps_list").is_err());
    }
}
