//! Flat `key = value` configuration with dotted keys.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};

/// Keys accepted in a run configuration.
pub const KNOWN_KEYS: &[&str] = &[
    "seed",
    "alpha",
    "strict",
    "strategy",
    "score",
    "score.lambda",
    "score.k_reg",
    "score.randomized",
    "data.path",
    "data.train",
    "data.calibration",
    "data.split",
    "data.n_classes",
    "generator.family",
    "generator.n",
    "generator.dim",
    "generator.noise",
    "generator.cv",
    "generator.mean",
    "generator.sigma",
    "generator.slope",
    "generator.base",
    "model.kind",
    "model.k",
    "model.penalty",
    "model.bags",
    "model.laplace",
    "mondrian.taxonomy",
    "mondrian.bins",
    "mondrian.column",
    "mondrian.n_classes",
    "cluster.hierarchy",
    "cluster.threshold",
    "cluster.size_threshold",
    "cluster.min_obs",
    "cluster.m",
    "cluster.levels",
    "resample.folds",
    "ccp.grid",
    "monitor.betting",
    "monitor.epsilon",
    "monitor.threshold",
    "monitor.mode",
];

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Config {
    entries: BTreeMap<String, String>,
    base_dir: PathBuf,
}

impl Config {
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::config(format!("line {}", i + 1), format!("expected `key = value`, got `{line}`")))?;
            let key = key.trim();
            let value = value.trim();
            let valid = !key.is_empty()
                && key
                    .chars()
                    .all(|c| c.is_ascii_lowercase() || c.is_ascii_digit() || matches!(c, '.' | '_' | '-'));
            if !valid {
                return Err(Error::config(key, "keys use lowercase letters, digits, `.`, `_` and `-`"));
            }
            if !KNOWN_KEYS.contains(&key) {
                return Err(Error::config(key, "unknown key"));
            }
            if entries.insert(key.to_string(), value.to_string()).is_some() {
                return Err(Error::config(key, "duplicate key"));
            }
        }
        Ok(Self {
            entries,
            base_dir: PathBuf::new(),
        })
    }

    /// Reads a file; relative paths inside it resolve against its directory.
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config("--config", format!("cannot read {}: {e}", path.display())))?;
        let mut cfg = Self::parse(&text)?;
        cfg.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(cfg)
    }

    pub fn set(&mut self, key: &str, value: impl ToString) {
        self.entries.insert(key.to_string(), value.to_string());
    }

    pub fn entries(&self) -> impl Iterator<Item = (&str, &str)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v.as_str()))
    }

    pub fn raw(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>> {
        self.raw(key)
            .map(|v| {
                v.parse::<T>()
                    .map_err(|_| Error::config(key, format!("cannot parse `{v}`")))
            })
            .transpose()
    }

    pub fn get_or<T: FromStr>(&self, key: &str, default: T) -> Result<T> {
        Ok(self.get(key)?.unwrap_or(default))
    }

    pub fn require<T: FromStr>(&self, key: &str) -> Result<T> {
        self.get(key)?.ok_or_else(|| Error::config(key, "missing required key"))
    }

    /// A path value resolved against the config file's directory. The file
    /// must exist.
    pub fn path(&self, key: &str) -> Result<Option<PathBuf>> {
        let Some(raw) = self.raw(key) else {
            return Ok(None);
        };
        let p = Path::new(raw);
        let resolved = if p.is_absolute() { p.to_path_buf() } else { self.base_dir.join(p) };
        if !resolved.exists() {
            return Err(Error::config(key, format!("file {} does not exist", resolved.display())));
        }
        Ok(Some(resolved))
    }

    /// Comma-separated list of numbers.
    pub fn list(&self, key: &str) -> Result<Option<Vec<f64>>> {
        self.raw(key)
            .map(|v| {
                v.split(',')
                    .map(|s| {
                        s.trim()
                            .parse::<f64>()
                            .map_err(|_| Error::config(key, format!("cannot parse `{s}` as a number")))
                    })
                    .collect()
            })
            .transpose()
    }

    /// One of `choices`, or the default when absent.
    pub fn choice<'a>(&'a self, key: &str, choices: &[&str], default: &'a str) -> Result<&'a str> {
        let v = self.raw(key).unwrap_or(default);
        if choices.contains(&v) {
            Ok(v)
        } else {
            Err(Error::config(key, format!("`{v}` is not one of {}", choices.join(", "))))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_dotted_keys_and_comments() {
        let cfg = Config::parse("# run\nseed = 7\nmodel.k = 5  # neighbours\n\nalpha=0.2\n").unwrap();
        assert_eq!(cfg.get::<u64>("seed").unwrap(), Some(7));
        assert_eq!(cfg.get::<usize>("model.k").unwrap(), Some(5));
        assert_eq!(cfg.get_or("alpha", 0.1).unwrap(), 0.2);
        assert_eq!(cfg.get::<f64>("model.penalty").unwrap(), None);
    }

    #[test]
    fn errors_name_the_key() {
        for (text, key) in [
            ("model.k = five", "model.k"),
            ("bogus = 1", "bogus"),
            ("seed = 1\nseed = 2", "seed"),
            ("just text", "line 1"),
        ] {
            let err = match Config::parse(text) {
                Ok(cfg) => cfg.get::<usize>(key).unwrap_err(),
                Err(e) => e,
            };
            assert_eq!(err.exit_code(), 2);
            assert!(matches!(&err, Error::Config { key: k, .. } if k == key), "{err}");
        }
    }

    #[test]
    fn choices_and_lists() {
        let cfg = Config::parse("strategy = mondrian\ncluster.levels = 0.5, 0.9").unwrap();
        assert_eq!(cfg.choice("strategy", &["marginal", "mondrian"], "marginal").unwrap(), "mondrian");
        assert!(cfg.choice("strategy", &["marginal"], "marginal").is_err());
        assert_eq!(cfg.choice("score", &["residual"], "residual").unwrap(), "residual");
        assert_eq!(cfg.list("cluster.levels").unwrap(), Some(vec![0.5, 0.9]));
    }

    #[test]
    fn missing_files_are_config_errors() {
        let cfg = Config::parse("data.path = /definitely/not/here.csv").unwrap();
        assert_eq!(cfg.path("data.path").unwrap_err().exit_code(), 2);
    }
}
