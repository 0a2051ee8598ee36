//! Plain-text `key = value` configuration files.
//!
//! Blank lines and lines starting with `#` are ignored. Keys are matched
//! case-sensitively; list values are comma separated.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Clone, Debug, Default, PartialEq)]
pub struct KvConfig {
    entries: BTreeMap<String, String>,
}

impl KvConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(Error::Config(format!("line {}: expected `key = value`", n + 1)));
            };
            let key = key.trim();
            if key.is_empty() {
                return Err(Error::Config(format!("line {}: empty key", n + 1)));
            }
            entries.insert(key.to_string(), value.trim().to_string());
        }
        Ok(Self { entries })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path.as_ref())?;
        Self::parse(&text)
    }

    pub fn get_str(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>> {
        match self.entries.get(key) {
            None => Ok(None),
            Some(v) => v.parse().map(Some).map_err(|_| Error::Config(format!("cannot parse `{key}` from `{v}`"))),
        }
    }

    pub fn get_list<T: FromStr>(&self, key: &str) -> Result<Option<Vec<T>>> {
        match self.entries.get(key) {
            None => Ok(None),
            Some(v) => v
                .split(',')
                .map(|item| {
                    item.trim().parse().map_err(|_| Error::Config(format!("cannot parse `{key}` item `{item}`")))
                })
                .collect::<Result<Vec<T>>>()
                .map(Some),
        }
    }

    pub fn set(&mut self, key: impl Into<String>, value: impl ToString) {
        self.entries.insert(key.into(), value.to_string());
    }

    pub fn merge(&mut self, other: &KvConfig) {
        for (k, v) in &other.entries {
            self.entries.insert(k.clone(), v.clone());
        }
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.entries {
            let _ = writeln!(out, "{k} = {v}");
        }
        out
    }
}

/// Overwrite `target` with the parsed value of `key` when present.
pub(crate) fn read_into<T: FromStr>(kv: &KvConfig, key: &str, target: &mut T) -> Result<()> {
    if let Some(v) = kv.get(key)? {
        *target = v;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_comments_and_lists() {
        let kv = KvConfig::parse("# env\nlambda = 0.5, 0.25\n\nb_max=5\n").unwrap();
        assert_eq!(kv.get::<usize>("b_max").unwrap(), Some(5));
        assert_eq!(kv.get_list::<f64>("lambda").unwrap(), Some(vec![0.5, 0.25]));
        assert_eq!(kv.get::<usize>("missing").unwrap(), None);
    }

    #[test]
    fn rejects_malformed_lines() {
        assert!(KvConfig::parse("just words").is_err());
        assert!(KvConfig::parse(" = 3").is_err());
        let kv = KvConfig::parse("b_max = five").unwrap();
        assert!(kv.get::<usize>("b_max").is_err());
    }

    #[test]
    fn render_parses_back() {
        let mut kv = KvConfig::default();
        kv.set("gamma", 0.9);
        kv.set("seed", 7);
        assert_eq!(KvConfig::parse(&kv.render()).unwrap(), kv);
    }
}
