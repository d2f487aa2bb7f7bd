//! Flat `key = value` settings: a config file overlaid by command-line flags.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};

/// Every key the harness understands.
pub const KNOWN_KEYS: &[&str] = &[
    "actions",
    "big_n",
    "boundary",
    "c1",
    "c2",
    "c_eta",
    "c_n",
    "c_theta",
    "critic",
    "diag_every",
    "dim",
    "eta",
    "gamma",
    "generator",
    "horizon",
    "mdp",
    "measure",
    "out",
    "output",
    "p_min",
    "policy",
    "quiet",
    "run",
    "samples",
    "schedule",
    "seed",
    "seeds",
    "snapshot_every",
    "start_state",
    "states",
    "t",
    "theta",
    "tol",
];

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Settings {
    values: BTreeMap<String, String>,
}

fn canonical(key: &str) -> String {
    key.trim().replace('-', "_")
}

impl Settings {
    /// Parses `key = value` lines; `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self> {
        let mut values = BTreeMap::new();
        for (no, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Argument(format!("config line {}: expected key = value", no + 1)))?;
            let key = canonical(k);
            if !KNOWN_KEYS.contains(&key.as_str()) {
                return Err(Error::Argument(format!("config line {}: unknown key '{key}'", no + 1)));
            }
            values.insert(key, v.trim().to_string());
        }
        Ok(Self { values })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Argument(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn set(&mut self, key: &str, value: impl ToString) {
        self.values.insert(canonical(key), value.to_string());
    }

    /// Sets `key` when the flag was given.
    pub fn flag<T: ToString>(&mut self, key: &str, value: Option<T>) {
        if let Some(v) = value {
            self.set(key, v);
        }
    }

    pub fn raw(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        match self.values.get(key) {
            None => Ok(None),
            Some(v) => v.parse().map(Some).map_err(|e| Error::Argument(format!("bad value '{v}' for {key}: {e}"))),
        }
    }

    pub fn get_or<T: FromStr>(&self, key: &str, default: T) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        Ok(self.get(key)?.unwrap_or(default))
    }

    pub fn require<T: FromStr>(&self, key: &str) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        self.get(key)?.ok_or_else(|| Error::Argument(format!("missing required setting '{key}'")))
    }

    pub fn path(&self, key: &str) -> Option<PathBuf> {
        self.values.get(key).map(PathBuf::from)
    }

    pub fn as_map(&self) -> &BTreeMap<String, String> {
        &self.values
    }

    pub fn quiet(&self) -> bool {
        matches!(self.raw("quiet"), Some("true" | "1" | "yes"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_override_file() {
        let mut s = Settings::parse("t = 10\n# comment\nc-theta=2.5  # trailing\n").unwrap();
        assert_eq!(s.get::<usize>("t").unwrap(), Some(10));
        assert_eq!(s.get::<f64>("c_theta").unwrap(), Some(2.5));
        s.flag("t", Some(64));
        s.flag::<f64>("c_n", None);
        assert_eq!(s.get::<usize>("t").unwrap(), Some(64));
        assert_eq!(s.get::<f64>("c_n").unwrap(), None);
    }

    #[test]
    fn rejects_bad_lines() {
        assert!(Settings::parse("t 10").is_err());
        assert!(Settings::parse("warp = 9").is_err());
        let s = Settings::parse("t = ten").unwrap();
        assert!(s.get::<usize>("t").is_err());
    }
}
