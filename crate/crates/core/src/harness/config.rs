//! Flat `key = value` configuration text.
//!
//! ```text
//! # comment
//! d = 256
//! n = [500, 2000, 8000]
//! link = he2
//! ```
//!
//! Lists may be written `[a, b]` or `a,b`; a scalar is a one-element list.

use std::collections::BTreeMap;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Default, PartialEq)]
pub struct KvConfig {
    entries: BTreeMap<String, String>,
}

impl KvConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (no, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Parse(format!("line {}: expected `key = value`", no + 1)))?;
            let key = k.trim();
            if key.is_empty() {
                return Err(Error::Parse(format!("line {}: empty key", no + 1)));
            }
            entries.insert(key.to_string(), v.trim().to_string());
        }
        Ok(Self { entries })
    }

    pub fn set(&mut self, key: &str, value: impl Into<String>) {
        self.entries.insert(key.to_string(), value.into());
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    /// Parse `key` as a list; `None` when absent.
    pub fn list<T: FromStr>(&self, key: &str) -> Result<Option<Vec<T>>> {
        let Some(raw) = self.get(key) else { return Ok(None) };
        let inner = raw.trim().trim_start_matches('[').trim_end_matches(']');
        inner
            .split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|s| s.parse::<T>().map_err(|_| Error::Parse(format!("bad value `{s}` for `{key}`"))))
            .collect::<Result<Vec<T>>>()
            .map(Some)
    }

    /// Parse `key` as a single value; `None` when absent.
    pub fn scalar<T: FromStr>(&self, key: &str) -> Result<Option<T>> {
        match self.get(key) {
            None => Ok(None),
            Some(raw) => raw
                .trim()
                .parse::<T>()
                .map(Some)
                .map_err(|_| Error::Parse(format!("bad value `{raw}` for `{key}`"))),
        }
    }
}
