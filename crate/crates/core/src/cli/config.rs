//! Flat key-value run configuration.
//!
//! Grammar, one entry per line:
//!
//! ```text
//! # comment
//! key = value
//! ```
//!
//! Keys match `[a-z0-9_.]+`; values run to the end of the line with
//! surrounding whitespace trimmed; lists are comma-separated. A key may appear
//! once per file. A `manifest.json` written by a previous command is also
//! accepted and replays its recorded `config` table.
//!
//! Precedence, lowest first: built-in defaults, the config file, `--set
//! key=value` overrides, then the `--seed` and `--out-dir` flags.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RunConfig {
    values: BTreeMap<String, String>,
}

fn valid_key(k: &str) -> bool {
    !k.is_empty() && k.bytes().all(|b| b.is_ascii_lowercase() || b.is_ascii_digit() || b == b'_' || b == b'.')
}

impl RunConfig {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut values = BTreeMap::new();
        let mut errors = Vec::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                errors.push(format!("line {}: expected `key = value`", n + 1));
                continue;
            };
            let (k, v) = (k.trim(), v.trim());
            if !valid_key(k) {
                errors.push(format!("line {}: invalid key {k:?}", n + 1));
            } else if values.insert(k.to_string(), v.to_string()).is_some() {
                errors.push(format!("line {}: duplicate key {k}", n + 1));
            }
        }
        if errors.is_empty() {
            Ok(Self { values })
        } else {
            Err(Error::Config(errors))
        }
    }

    /// Load a config file, or the `config` table of a JSON manifest.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        if path.extension().is_some_and(|e| e == "json") {
            let v: serde_json::Value = serde_json::from_str(&text).map_err(|e| Error::json(path.display().to_string(), e))?;
            let table = v
                .get("config")
                .and_then(|c| c.as_object())
                .ok_or_else(|| Error::Config(vec![format!("{} has no config table", path.display())]))?;
            let mut cfg = Self::new();
            for (k, v) in table {
                let s = v
                    .as_str()
                    .ok_or_else(|| Error::Config(vec![format!("manifest value for {k} is not a string")]))?;
                cfg.set(k, s)?;
            }
            Ok(cfg)
        } else {
            Self::parse(&text)
        }
    }

    pub fn set(&mut self, key: &str, value: impl Into<String>) -> Result<()> {
        if !valid_key(key) {
            return Err(Error::Config(vec![format!("invalid key {key:?}")]));
        }
        self.values.insert(key.to_string(), value.into());
        Ok(())
    }

    /// Apply a `key=value` override.
    pub fn set_pair(&mut self, pair: &str) -> Result<()> {
        let (k, v) = pair
            .split_once('=')
            .ok_or_else(|| Error::Config(vec![format!("override {pair:?} is not key=value")]))?;
        self.set(k.trim(), v.trim())
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    pub fn entries(&self) -> &BTreeMap<String, String> {
        &self.values
    }

    /// Serialize back into the file grammar.
    pub fn to_text(&self) -> String {
        self.values.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }
}

/// Typed, error-collecting view of a [`RunConfig`].
///
/// Each accessor records the value it resolved, so the resolved table holds
/// every setting that influenced the command, defaults included.
pub struct Settings<'a> {
    cfg: &'a RunConfig,
    errors: Vec<String>,
    resolved: BTreeMap<String, String>,
}

impl<'a> Settings<'a> {
    pub fn new(cfg: &'a RunConfig) -> Self {
        Self {
            cfg,
            errors: Vec::new(),
            resolved: BTreeMap::new(),
        }
    }

    pub fn error(&mut self, msg: impl Into<String>) {
        self.errors.push(msg.into());
    }

    fn raw(&mut self, key: &str, default: Option<String>) -> Option<String> {
        let v = self.cfg.get(key).map(str::to_string).or(default);
        if let Some(v) = &v {
            self.resolved.insert(key.to_string(), v.clone());
        }
        v
    }

    pub fn value<T: FromStr + Display>(&mut self, key: &str, default: T) -> T
    where
        T::Err: Display,
    {
        let raw = self.raw(key, Some(default.to_string())).expect("default present");
        match raw.parse() {
            Ok(v) => v,
            Err(e) => {
                self.errors.push(format!("{key}: cannot parse {raw:?}: {e}"));
                default
            }
        }
    }

    pub fn required<T: FromStr>(&mut self, key: &str) -> Option<T>
    where
        T::Err: Display,
    {
        let Some(raw) = self.raw(key, None) else {
            self.errors.push(format!("{key}: required"));
            return None;
        };
        match raw.parse() {
            Ok(v) => Some(v),
            Err(e) => {
                self.errors.push(format!("{key}: cannot parse {raw:?}: {e}"));
                None
            }
        }
    }

    pub fn optional<T: FromStr>(&mut self, key: &str) -> Option<T>
    where
        T::Err: Display,
    {
        let raw = self.raw(key, None)?;
        match raw.parse() {
            Ok(v) => Some(v),
            Err(e) => {
                self.errors.push(format!("{key}: cannot parse {raw:?}: {e}"));
                None
            }
        }
    }

    pub fn path(&mut self, key: &str) -> Option<PathBuf> {
        self.optional::<String>(key).map(PathBuf::from)
    }

    pub fn list<T: FromStr + Display>(&mut self, key: &str, default: &[T]) -> Vec<T>
    where
        T::Err: Display,
    {
        let default_text = default.iter().map(T::to_string).collect::<Vec<_>>().join(",");
        let raw = self.raw(key, Some(default_text)).expect("default present");
        let mut out = Vec::new();
        for item in raw.split(',').map(str::trim).filter(|s| !s.is_empty()) {
            match item.parse() {
                Ok(v) => out.push(v),
                Err(e) => self.errors.push(format!("{key}: cannot parse item {item:?}: {e}")),
            }
        }
        out
    }

    /// Keys under `prefix.` with their parsed values.
    pub fn prefixed<T: FromStr>(&mut self, prefix: &str) -> BTreeMap<String, T>
    where
        T::Err: Display,
    {
        let dotted = format!("{prefix}.");
        let keys: Vec<String> = self.cfg.entries().keys().filter(|k| k.starts_with(&dotted)).cloned().collect();
        let mut out = BTreeMap::new();
        for k in keys {
            if let Some(v) = self.optional(&k) {
                out.insert(k[dotted.len()..].to_string(), v);
            }
        }
        out
    }

    /// Fail with every problem found, including keys nobody read.
    pub fn finish(mut self) -> Result<BTreeMap<String, String>> {
        let unknown: BTreeSet<&String> = self.cfg.entries().keys().filter(|k| !self.resolved.contains_key(*k)).collect();
        for k in unknown {
            self.errors.push(format!("{k}: unknown key"));
        }
        if self.errors.is_empty() {
            Ok(self.resolved)
        } else {
            Err(Error::Config(self.errors))
        }
    }
}
