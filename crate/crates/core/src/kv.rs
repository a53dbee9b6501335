//! Flat `key=value` text used for priors, trained models, and CLI config files.
//!
//! One pair per line, `#` starts a comment line, blank lines are ignored.
//! Keys are unique; order is preserved on output.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Default, PartialEq)]
pub struct KvDoc {
    entries: Vec<(String, String, usize)>,
}

impl KvDoc {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut doc = KvDoc::new();
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(Error::parse(line_no, format!("expected key=value, got {line:?}")));
            };
            let key = key.trim();
            if key.is_empty() {
                return Err(Error::parse(line_no, "empty key"));
            }
            if doc.get(key).is_some() {
                return Err(Error::parse(line_no, format!("duplicate key {key:?}")));
            }
            doc.entries.push((key.to_string(), value.trim().to_string(), line_no));
        }
        Ok(doc)
    }

    pub fn push(&mut self, key: impl Into<String>, value: impl ToString) {
        self.entries.push((key.into(), value.to_string(), 0));
    }

    /// Shortest representation that parses back to the identical f64.
    pub fn push_f64(&mut self, key: impl Into<String>, value: f64) {
        self.push(key, format!("{value:e}"));
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries
            .iter()
            .find(|(k, _, _)| k == key)
            .map(|(_, v, _)| v.as_str())
    }

    fn line_of(&self, key: &str) -> usize {
        self.entries
            .iter()
            .find(|(k, _, _)| k == key)
            .map(|(_, _, l)| *l)
            .unwrap_or(0)
    }

    pub fn require(&self, key: &str) -> Result<&str> {
        self.get(key)
            .ok_or_else(|| Error::parse(0, format!("missing key {key:?}")))
    }

    pub fn f64(&self, key: &str) -> Result<f64> {
        let raw = self.require(key)?;
        let v: f64 = raw
            .parse()
            .map_err(|_| Error::parse(self.line_of(key), format!("{key}: not a number: {raw:?}")))?;
        if !v.is_finite() {
            return Err(Error::parse(self.line_of(key), format!("{key}: not finite")));
        }
        Ok(v)
    }

    pub fn opt_f64(&self, key: &str) -> Result<Option<f64>> {
        match self.get(key) {
            None => Ok(None),
            Some(_) => self.f64(key).map(Some),
        }
    }

    pub fn usize(&self, key: &str) -> Result<usize> {
        let raw = self.require(key)?;
        raw.parse()
            .map_err(|_| Error::parse(self.line_of(key), format!("{key}: not a non-negative integer: {raw:?}")))
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|(k, _, _)| k.as_str())
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str)> {
        self.entries.iter().map(|(k, v, _)| (k.as_str(), v.as_str()))
    }

    /// Entries whose key starts with `prefix`, with the prefix stripped.
    pub fn section(&self, prefix: &str) -> KvDoc {
        KvDoc {
            entries: self
                .entries
                .iter()
                .filter_map(|(k, v, l)| k.strip_prefix(prefix).map(|rest| (rest.to_string(), v.clone(), *l)))
                .collect(),
        }
    }

    pub fn extend_prefixed(&mut self, prefix: &str, other: &KvDoc) {
        for (k, v, _) in &other.entries {
            self.entries.push((format!("{prefix}{k}"), v.clone(), 0));
        }
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (k, v, _) in &self.entries {
            out.push_str(k);
            out.push('=');
            out.push_str(v);
            out.push('\n');
        }
        out
    }
}
