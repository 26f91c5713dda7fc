//! Parameter resolution and the run record echoed into every artifact.
//!
//! A value comes from the command line if given, else from the `--config`
//! file, else from the built-in default. Every value a command reads is
//! recorded, defaults included, so the saved [`RunConfig`] can be fed back
//! through `--config` to repeat the run.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use cue_core::CueError;
use serde::{Deserialize, Serialize};
use serde_json::Value;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub params: BTreeMap<String, Value>,
}

fn invalid(msg: String) -> CueError {
    CueError::InvalidArgument(msg)
}

/// Parses a config file: `key = value` lines with `#` comments, or a JSON
/// run record written by an earlier invocation.
pub fn parse_config_file(path: &Path, known: &BTreeSet<String>) -> Result<BTreeMap<String, String>, CueError> {
    let text = std::fs::read_to_string(path).map_err(|e| CueError::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    let mut out = BTreeMap::new();
    if text.trim_start().starts_with('{') {
        let not_run = |e: serde_json::Error| invalid(format!("{}: not a run record: {e}", path.display()));
        let mut doc: Value = serde_json::from_str(&text).map_err(not_run)?;
        // Artifacts embed the record under `run_config`.
        if let Some(inner) = doc.get_mut("run_config") {
            doc = inner.take();
        }
        let run: RunConfig = serde_json::from_value(doc).map_err(not_run)?;
        for (k, v) in run.params {
            let s = match v {
                Value::String(s) => s,
                Value::Null => continue,
                other => other.to_string(),
            };
            out.insert(k, s);
        }
    } else {
        for (n, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| invalid(format!("{}:{}: expected key = value", path.display(), n + 1)))?;
            out.insert(k.trim().to_string(), v.trim().to_string());
        }
    }
    if let Some(k) = out.keys().find(|k| !known.contains(*k)) {
        return Err(invalid(format!("{}: unknown key {k:?}", path.display())));
    }
    Ok(out)
}

pub struct Resolver {
    command: String,
    cli: BTreeMap<String, String>,
    file: BTreeMap<String, String>,
    used: BTreeMap<String, Value>,
}

impl Resolver {
    pub fn new(command: &str, cli: BTreeMap<String, String>, file: BTreeMap<String, String>) -> Self {
        Self {
            command: command.to_string(),
            cli,
            file,
            used: BTreeMap::new(),
        }
    }

    fn raw(&self, key: &str) -> Option<&String> {
        self.cli.get(key).or_else(|| self.file.get(key))
    }

    fn parse<T>(&self, key: &str, raw: &str) -> Result<T, CueError>
    where
        T: FromStr,
        T::Err: Display,
    {
        raw.parse()
            .map_err(|e| invalid(format!("--{key} {raw:?}: {e}")))
    }

    pub fn command(&self) -> &str {
        &self.command
    }

    /// Records (or overrides) the value reported for `key`.
    pub fn record<T: Serialize>(&mut self, key: &str, value: &T) {
        let v = serde_json::to_value(value).unwrap_or(Value::Null);
        self.used.insert(key.to_string(), v);
    }

    pub fn get<T>(&mut self, key: &str, default: T) -> Result<T, CueError>
    where
        T: FromStr + Serialize,
        T::Err: Display,
    {
        let value = match self.raw(key) {
            Some(raw) => self.parse(key, raw)?,
            None => default,
        };
        self.record(key, &value);
        Ok(value)
    }

    pub fn optional<T>(&mut self, key: &str) -> Result<Option<T>, CueError>
    where
        T: FromStr + Serialize,
        T::Err: Display,
    {
        let value = match self.raw(key) {
            Some(raw) => Some(self.parse(key, raw)?),
            None => None,
        };
        self.record(key, &value);
        Ok(value)
    }

    pub fn required_path(&mut self, key: &str) -> Result<PathBuf, CueError> {
        self.optional::<PathBuf>(key)?
            .ok_or_else(|| invalid(format!("{} needs --{key}", self.command)))
    }

    /// Keys given on the command line that the command never read.
    pub fn unused_cli_keys(&self) -> Vec<&str> {
        self.cli
            .keys()
            .filter(|k| !self.used.contains_key(*k))
            .map(String::as_str)
            .collect()
    }

    pub fn run_config(&self) -> RunConfig {
        RunConfig {
            tool: "cue".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: self.command.clone(),
            params: self.used.clone(),
        }
    }
}

/// Comma-separated list, e.g. split ratios `0.6,0.2,0.2`.
#[derive(Debug, Clone, PartialEq)]
pub struct List<T>(pub Vec<T>);

impl<T: FromStr> FromStr for List<T>
where
    T::Err: Display,
{
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        s.split(',')
            .map(|p| p.trim().parse::<T>().map_err(|e| format!("{p:?}: {e}")))
            .collect::<Result<Vec<_>, _>>()
            .map(List)
    }
}

impl<T: Display> Serialize for List<T> {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let parts: Vec<String> = self.0.iter().map(ToString::to_string).collect();
        s.serialize_str(&parts.join(","))
    }
}
