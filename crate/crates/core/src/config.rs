//! Flat `key = value` configuration files.
//!
//! Blank lines and lines starting with `#` are ignored. Keys may repeat; list
//! valued settings read every occurrence in file order.

use std::path::Path;
use std::str::FromStr;

use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ConfigError {
    #[error("line {line}: expected `key = value`")]
    Syntax { line: usize },
    #[error("invalid value for {key}: {value:?} ({msg})")]
    Value {
        key: String,
        value: String,
        msg: String,
    },
    #[error("unknown key {0:?}")]
    UnknownKey(String),
    #[error("cannot read {path}: {msg}")]
    Io { path: String, msg: String },
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct KvConfig {
    entries: Vec<(String, String)>,
}

impl KvConfig {
    pub fn parse(text: &str) -> Result<KvConfig, ConfigError> {
        let mut entries = Vec::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or(ConfigError::Syntax { line: n + 1 })?;
            let k = k.trim();
            if k.is_empty() {
                return Err(ConfigError::Syntax { line: n + 1 });
            }
            entries.push((k.to_string(), v.trim().to_string()));
        }
        Ok(KvConfig { entries })
    }

    pub fn load(path: &Path) -> Result<KvConfig, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io {
            path: path.display().to_string(),
            msg: e.to_string(),
        })?;
        KvConfig::parse(&text)
    }

    pub fn set(&mut self, key: &str, value: impl Into<String>) {
        self.entries.retain(|(k, _)| k != key);
        self.entries.push((key.to_string(), value.into()));
    }

    pub fn push(&mut self, key: &str, value: impl Into<String>) {
        self.entries.push((key.to_string(), value.into()));
    }

    /// Last value for `key`.
    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries
            .iter()
            .rev()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    pub fn get_all<'a>(&'a self, key: &'a str) -> impl Iterator<Item = &'a str> + 'a {
        self.entries
            .iter()
            .filter(move |(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|(k, _)| k.as_str())
    }

    /// Parses the last value for `key`, if present.
    pub fn parse_opt<T: FromStr>(&self, key: &str) -> Result<Option<T>, ConfigError>
    where
        T::Err: std::fmt::Display,
    {
        self.get(key)
            .map(|v| {
                v.parse::<T>().map_err(|e| ConfigError::Value {
                    key: key.to_string(),
                    value: v.to_string(),
                    msg: e.to_string(),
                })
            })
            .transpose()
    }

    /// Overwrites `slot` when `key` is present.
    pub fn read_into<T: FromStr>(&self, key: &str, slot: &mut T) -> Result<(), ConfigError>
    where
        T::Err: std::fmt::Display,
    {
        if let Some(v) = self.parse_opt(key)? {
            *slot = v;
        }
        Ok(())
    }

    /// Rejects keys outside `allowed`. A trailing `*` in an allowed entry
    /// matches any suffix.
    pub fn check_keys(&self, allowed: &[&str]) -> Result<(), ConfigError> {
        for k in self.keys() {
            let ok = allowed.iter().any(|a| match a.strip_suffix('*') {
                Some(prefix) => k.starts_with(prefix),
                None => *a == k,
            });
            if !ok {
                return Err(ConfigError::UnknownKey(k.to_string()));
            }
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for (k, v) in &self.entries {
            s.push_str(k);
            s.push_str(" = ");
            s.push_str(v);
            s.push('\n');
        }
        s
    }
}

pub fn parse_bool(key: &str, v: &str) -> Result<bool, ConfigError> {
    match v {
        "true" | "1" | "yes" | "on" => Ok(true),
        "false" | "0" | "no" | "off" => Ok(false),
        _ => Err(ConfigError::Value {
            key: key.to_string(),
            value: v.to_string(),
            msg: "expected a boolean".into(),
        }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_comments_and_repeats() {
        let c = KvConfig::parse("# c\nblocks = 10\n\nspike = 5:deposit\nspike=9:withdrawal\n").unwrap();
        assert_eq!(c.get("blocks"), Some("10"));
        assert_eq!(c.get_all("spike").collect::<Vec<_>>(), ["5:deposit", "9:withdrawal"]);
        assert_eq!(c.parse_opt::<u32>("blocks").unwrap(), Some(10));
        assert!(c.parse_opt::<u32>("spike").is_err());
    }

    #[test]
    fn syntax_error_names_line() {
        assert_eq!(KvConfig::parse("a = 1\nbroken\n"), Err(ConfigError::Syntax { line: 2 }));
    }

    #[test]
    fn key_whitelist() {
        let c = KvConfig::parse("tags.0 = x\nseed = 1\n").unwrap();
        assert!(c.check_keys(&["tags.*", "seed"]).is_ok());
        assert!(c.check_keys(&["seed"]).is_err());
    }
}
