//! Plain-text `key = value` run configuration.
//!
//! Flags override file values; the fully resolved configuration is echoed
//! into every run's output directory, and a run directory is named by the
//! hash of that echo, so identical configurations land in identical places.

use std::collections::BTreeMap;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Ordered key-value configuration with strict key checking.
#[derive(Debug, Clone, Default)]
pub struct KvConfig {
    map: BTreeMap<String, String>,
}

impl KvConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", lineno + 1)))?;
            map.insert(key.trim().to_string(), value.trim().to_string());
        }
        Ok(KvConfig { map })
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    /// Rejects keys outside the allowed set.
    pub fn check_known(&self, allowed: &[&str]) -> Result<()> {
        for key in self.map.keys() {
            if !allowed.contains(&key.as_str()) {
                return Err(Error::Config(format!(
                    "unknown key '{key}' (allowed: {})",
                    allowed.join(", ")
                )));
            }
        }
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.map.get(key).map(String::as_str)
    }

    pub fn set(&mut self, key: &str, value: String) {
        self.map.insert(key.to_string(), value);
    }

    /// Flag value wins over file value, else the default.
    pub fn resolve<T: Clone + std::fmt::Display>(
        &mut self,
        key: &str,
        flag: Option<T>,
        default: T,
        parse: impl Fn(&str) -> Result<T>,
    ) -> Result<T> {
        let value = match flag {
            Some(v) => v,
            None => match self.map.get(key) {
                Some(s) => parse(s)?,
                None => default,
            },
        };
        self.map.insert(key.to_string(), format!("{value}"));
        Ok(value)
    }

    /// Sorted `key = value` lines of the resolved configuration.
    pub fn echo(&self) -> String {
        let mut s = String::new();
        for (k, v) in &self.map {
            s.push_str(&format!("{k} = {v}\n"));
        }
        s
    }

    /// Short stable hash of the echo, for run-directory names.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.echo().as_bytes());
        digest[..6].iter().map(|b| format!("{b:02x}")).collect()
    }
}

pub fn parse_u64(s: &str) -> Result<u64> {
    s.parse().map_err(|_| Error::Config(format!("bad integer '{s}'")))
}

pub fn parse_usize(s: &str) -> Result<usize> {
    s.parse().map_err(|_| Error::Config(format!("bad integer '{s}'")))
}

pub fn parse_f64(s: &str) -> Result<f64> {
    s.parse().map_err(|_| Error::Config(format!("bad number '{s}'")))
}

pub fn parse_string(s: &str) -> Result<String> {
    Ok(s.to_string())
}

pub fn parse_f64_list(s: &str) -> Result<Vec<f64>> {
    s.split(',').map(|p| parse_f64(p.trim())).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_resolve_echo() {
        let mut cfg = KvConfig::parse("alpha = 3\n# comment\nbeta = x\n").unwrap();
        assert!(cfg.check_known(&["alpha", "beta"]).is_ok());
        assert!(cfg.check_known(&["alpha"]).is_err());
        let v = cfg.resolve("alpha", None, 7u64, parse_u64).unwrap();
        assert_eq!(v, 3);
        let w = cfg.resolve("gamma", Some(2u64), 0, parse_u64).unwrap();
        assert_eq!(w, 2);
        let echo = cfg.echo();
        assert!(echo.contains("alpha = 3\n"));
        assert!(echo.contains("gamma = 2\n"));
    }

    #[test]
    fn hash_is_stable_and_sensitive() {
        let a = KvConfig::parse("x = 1\n").unwrap();
        let b = KvConfig::parse("x = 1\n").unwrap();
        let c = KvConfig::parse("x = 2\n").unwrap();
        assert_eq!(a.hash(), b.hash());
        assert_ne!(a.hash(), c.hash());
    }
}
