//! Line-oriented key-value text format used for configs and manifests.
//!
//! Grammar, one entry per line:
//!
//! ```text
//! line    := blank | comment | entry
//! comment := '#' any*
//! entry   := key ws* '=' ws* value
//! key     := segment ('.' segment)*          segment := [A-Za-z0-9_-]+
//! value   := any* (trimmed; may be empty)
//! ```
//!
//! Nesting is expressed by dotted keys (`train.lr_ae = 1e-5`). Lists are
//! comma-separated values. Keys must be unique within a document. Documents
//! are written sorted by key, so serialisation is canonical.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use crate::error::{CassError, Result};

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct KvDoc {
    entries: BTreeMap<String, String>,
}

fn valid_key(key: &str) -> bool {
    !key.is_empty()
        && key.split('.').all(|seg| {
            !seg.is_empty()
                && seg
                    .chars()
                    .all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-')
        })
}

impl KvDoc {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut doc = KvDoc::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                CassError::config(format!("line {}: expected `key = value`", lineno + 1))
            })?;
            let key = key.trim();
            if !valid_key(key) {
                return Err(CassError::config(format!(
                    "line {}: invalid key `{key}`",
                    lineno + 1
                )));
            }
            if doc
                .entries
                .insert(key.to_string(), value.trim().to_string())
                .is_some()
            {
                return Err(CassError::config(format!(
                    "line {}: duplicate key `{key}`",
                    lineno + 1
                )));
            }
        }
        Ok(doc)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CassError::io(path, e))?;
        Self::parse(&text).map_err(|e| match e {
            CassError::Config(msg) => CassError::format(path, msg),
            other => other,
        })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_string()).map_err(|e| CassError::io(path, e))
    }

    pub fn set(&mut self, key: impl Into<String>, value: impl fmt::Display) {
        let key = key.into();
        debug_assert!(valid_key(&key), "invalid key {key}");
        let value = value.to_string();
        debug_assert!(!value.contains('\n'), "multi-line value for {key}");
        self.entries.insert(key, value);
    }

    pub fn set_list<V: fmt::Display>(&mut self, key: impl Into<String>, values: &[V]) {
        let joined = values
            .iter()
            .map(|v| v.to_string())
            .collect::<Vec<_>>()
            .join(",");
        self.set(key, joined);
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    pub fn contains(&self, key: &str) -> bool {
        self.entries.contains_key(key)
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v.as_str()))
    }

    /// Entries below `prefix.` with the prefix stripped.
    pub fn section(&self, prefix: &str) -> KvDoc {
        let p = format!("{prefix}.");
        KvDoc {
            entries: self
                .entries
                .iter()
                .filter_map(|(k, v)| k.strip_prefix(&p).map(|s| (s.to_string(), v.clone())))
                .collect(),
        }
    }

    pub fn require(&self, key: &str) -> Result<&str> {
        self.get(key)
            .ok_or_else(|| CassError::config(format!("missing key `{key}`")))
    }

    pub fn parse_value<V: FromStr>(&self, key: &str) -> Result<Option<V>>
    where
        V::Err: fmt::Display,
    {
        match self.get(key) {
            None => Ok(None),
            Some(raw) => raw.parse::<V>().map(Some).map_err(|e| {
                CassError::config(format!("key `{key}`: cannot parse `{raw}`: {e}"))
            }),
        }
    }

    pub fn parse_or<V: FromStr>(&self, key: &str, default: V) -> Result<V>
    where
        V::Err: fmt::Display,
    {
        Ok(self.parse_value(key)?.unwrap_or(default))
    }

    pub fn parse_required<V: FromStr>(&self, key: &str) -> Result<V>
    where
        V::Err: fmt::Display,
    {
        self.parse_value(key)?
            .ok_or_else(|| CassError::config(format!("missing key `{key}`")))
    }

    pub fn parse_list<V: FromStr>(&self, key: &str) -> Result<Option<Vec<V>>>
    where
        V::Err: fmt::Display,
    {
        let Some(raw) = self.get(key) else {
            return Ok(None);
        };
        if raw.is_empty() {
            return Ok(Some(Vec::new()));
        }
        raw.split(',')
            .map(|item| {
                let item = item.trim();
                item.parse::<V>().map_err(|e| {
                    CassError::config(format!("key `{key}`: cannot parse `{item}`: {e}"))
                })
            })
            .collect::<Result<Vec<_>>>()
            .map(Some)
    }
}

impl fmt::Display for KvDoc {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (k, v) in &self.entries {
            writeln!(f, "{k} = {v}")?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_comments_and_dotted_keys() {
        let doc = KvDoc::parse("# header\n\ntrain.lr_ae = 1e-5\nstft.window = hann \n").unwrap();
        assert_eq!(doc.get("train.lr_ae"), Some("1e-5"));
        assert_eq!(doc.parse_required::<f64>("train.lr_ae").unwrap(), 1e-5);
        assert_eq!(doc.section("stft").get("window"), Some("hann"));
    }

    #[test]
    fn rejects_duplicates_and_garbage() {
        assert!(KvDoc::parse("a = 1\na = 2").is_err());
        assert!(KvDoc::parse("no equals sign").is_err());
        assert!(KvDoc::parse("bad key = 1").is_err());
        assert!(KvDoc::parse("a..b = 1").is_err());
    }

    #[test]
    fn lists_and_roundtrip() {
        let mut doc = KvDoc::new();
        doc.set_list("network.channels", &[16, 32, 64]);
        doc.set("dataset.kind", "ecg");
        doc.set("empty", "");
        let back = KvDoc::parse(&doc.to_string()).unwrap();
        assert_eq!(back, doc);
        assert_eq!(
            back.parse_list::<usize>("network.channels").unwrap(),
            Some(vec![16, 32, 64])
        );
        assert_eq!(back.parse_list::<usize>("empty").unwrap(), Some(vec![]));
        assert!(back.parse_list::<usize>("dataset.kind").is_err());
    }
}
