//! Flat key-value configuration: a TOML file of scalars, overridden by CLI
//! flags, consumed through typed getters. Reading tracks key usage so any
//! unknown key is rejected before work begins, and the canonical rendering
//! feeds the config hash that names run directories.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use sha2::{Digest, Sha256};
use toml::Value;

use crate::{CliError, CliResult};

#[derive(Debug)]
pub struct ConfigMap {
    command: String,
    values: BTreeMap<String, Value>,
    used: BTreeSet<String>,
}

fn scalar_to_string(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        Value::Integer(i) => i.to_string(),
        Value::Float(f) => format!("{f}"),
        Value::Boolean(b) => b.to_string(),
        other => other.to_string(),
    }
}

/// Typed parse of an override string: bool, then integer, then float, then
/// bare string. Matches what the same token would mean in the TOML file.
fn parse_override(raw: &str) -> Value {
    if raw == "true" {
        return Value::Boolean(true);
    }
    if raw == "false" {
        return Value::Boolean(false);
    }
    if let Ok(i) = raw.parse::<i64>() {
        return Value::Integer(i);
    }
    if let Ok(f) = raw.parse::<f64>() {
        return Value::Float(f);
    }
    Value::String(raw.to_string())
}

impl ConfigMap {
    /// Loads the optional TOML file, then applies `overrides` (later wins).
    /// Values must be scalars; lists are comma-separated strings.
    pub fn from_sources(
        command: &str,
        path: Option<&str>,
        overrides: &[(String, Option<String>)],
    ) -> CliResult<Self> {
        let mut values = BTreeMap::new();
        if let Some(path) = path {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::io(format!("reading config {path}"), e))?;
            let table: toml::Table = text
                .parse()
                .map_err(|e| CliError::config(format!("parsing config {path}: {e}")))?;
            for (key, value) in table {
                match value {
                    Value::String(_) | Value::Integer(_) | Value::Float(_) | Value::Boolean(_) => {
                        values.insert(key, value);
                    }
                    other => {
                        return Err(CliError::config(format!(
                            "config {path}: key {key:?} has a non-scalar value ({}); \
                             use comma-separated strings for lists",
                            other.type_str()
                        )))
                    }
                }
            }
        }
        for (key, value) in overrides {
            if let Some(value) = value {
                values.insert(key.clone(), parse_override(value));
            }
        }
        Ok(Self {
            command: command.to_string(),
            values,
            used: BTreeSet::new(),
        })
    }

    /// Applies `--set key=value` pairs.
    pub fn apply_set_pairs(&mut self, pairs: &[String]) -> CliResult<()> {
        for pair in pairs {
            let (key, value) = pair.split_once('=').ok_or_else(|| {
                CliError::config(format!("--set expects key=value, got {pair:?}"))
            })?;
            if key.is_empty() {
                return Err(CliError::config(format!("--set has an empty key: {pair:?}")));
            }
            self.values
                .insert(key.to_string(), parse_override(value));
        }
        Ok(())
    }

    pub fn command(&self) -> &str {
        &self.command
    }

    fn take(&mut self, key: &str) -> Option<&Value> {
        self.used.insert(key.to_string());
        self.values.get(key)
    }

    pub fn get_str(&mut self, key: &str) -> CliResult<Option<String>> {
        match self.take(key) {
            None => Ok(None),
            Some(v) => Ok(Some(scalar_to_string(v))),
        }
    }

    pub fn str_or(&mut self, key: &str, default: &str) -> CliResult<String> {
        Ok(self.get_str(key)?.unwrap_or_else(|| default.to_string()))
    }

    pub fn require_str(&mut self, key: &str) -> CliResult<String> {
        self.get_str(key)?
            .ok_or_else(|| CliError::config(format!("missing required key {key:?}")))
    }

    fn type_err(key: &str, want: &str, got: &Value) -> CliError {
        CliError::config(format!(
            "key {key:?}: expected {want}, got {:?}",
            scalar_to_string(got)
        ))
    }

    pub fn get_u64(&mut self, key: &str) -> CliResult<Option<u64>> {
        match self.take(key) {
            None => Ok(None),
            Some(Value::Integer(i)) if *i >= 0 => Ok(Some(*i as u64)),
            Some(Value::String(s)) => s
                .trim()
                .parse::<u64>()
                .map(Some)
                .map_err(|_| CliError::config(format!("key {key:?}: invalid integer {s:?}"))),
            Some(other) => Err(Self::type_err(key, "a nonnegative integer", other)),
        }
    }

    pub fn u64_or(&mut self, key: &str, default: u64) -> CliResult<u64> {
        Ok(self.get_u64(key)?.unwrap_or(default))
    }

    pub fn get_usize(&mut self, key: &str) -> CliResult<Option<usize>> {
        Ok(self.get_u64(key)?.map(|v| v as usize))
    }

    pub fn usize_or(&mut self, key: &str, default: usize) -> CliResult<usize> {
        Ok(self.get_usize(key)?.unwrap_or(default))
    }

    pub fn require_usize(&mut self, key: &str) -> CliResult<usize> {
        self.get_usize(key)?
            .ok_or_else(|| CliError::config(format!("missing required key {key:?}")))
    }

    pub fn get_f64(&mut self, key: &str) -> CliResult<Option<f64>> {
        match self.take(key) {
            None => Ok(None),
            Some(Value::Float(f)) => Ok(Some(*f)),
            Some(Value::Integer(i)) => Ok(Some(*i as f64)),
            Some(Value::String(s)) => s
                .trim()
                .parse::<f64>()
                .map(Some)
                .map_err(|_| CliError::config(format!("key {key:?}: invalid number {s:?}"))),
            Some(other) => Err(Self::type_err(key, "a number", other)),
        }
    }

    pub fn f64_or(&mut self, key: &str, default: f64) -> CliResult<f64> {
        Ok(self.get_f64(key)?.unwrap_or(default))
    }

    pub fn bool_or(&mut self, key: &str, default: bool) -> CliResult<bool> {
        match self.take(key) {
            None => Ok(default),
            Some(Value::Boolean(b)) => Ok(*b),
            Some(Value::String(s)) if s == "true" => Ok(true),
            Some(Value::String(s)) if s == "false" => Ok(false),
            Some(other) => Err(Self::type_err(key, "a boolean", other)),
        }
    }

    /// Comma-separated unsigned integers; a bare integer also works.
    pub fn u64_list_or(&mut self, key: &str, default: &[u64]) -> CliResult<Vec<u64>> {
        let raw = match self.take(key) {
            None => return Ok(default.to_vec()),
            Some(Value::Integer(i)) if *i >= 0 => return Ok(vec![*i as u64]),
            Some(Value::String(s)) => s.clone(),
            Some(other) => return Err(Self::type_err(key, "comma-separated integers", other)),
        };
        let mut out = Vec::new();
        for tok in raw.split(',') {
            let tok = tok.trim();
            if tok.is_empty() {
                continue;
            }
            out.push(tok.parse::<u64>().map_err(|_| {
                CliError::config(format!("key {key:?}: invalid integer {tok:?} in list"))
            })?);
        }
        if out.is_empty() {
            return Err(CliError::config(format!("key {key:?}: empty list")));
        }
        Ok(out)
    }

    pub fn usize_list_or(&mut self, key: &str, default: &[usize]) -> CliResult<Vec<usize>> {
        let default_u64: Vec<u64> = default.iter().map(|&v| v as u64).collect();
        Ok(self
            .u64_list_or(key, &default_u64)?
            .into_iter()
            .map(|v| v as usize)
            .collect())
    }

    /// Comma-separated strings.
    pub fn str_list_or(&mut self, key: &str, default: &[&str]) -> CliResult<Vec<String>> {
        let raw = match self.get_str(key)? {
            None => return Ok(default.iter().map(|s| s.to_string()).collect()),
            Some(s) => s,
        };
        let out: Vec<String> = raw
            .split(',')
            .map(str::trim)
            .filter(|t| !t.is_empty())
            .map(str::to_string)
            .collect();
        if out.is_empty() {
            return Err(CliError::config(format!("key {key:?}: empty list")));
        }
        Ok(out)
    }

    /// Rejects any key that no getter consumed.
    pub fn finish(&self) -> CliResult<()> {
        let unknown: Vec<&String> = self
            .values
            .keys()
            .filter(|k| !self.used.contains(*k))
            .collect();
        if unknown.is_empty() {
            Ok(())
        } else {
            let list = unknown
                .iter()
                .map(|k| format!("{k:?}"))
                .collect::<Vec<_>>()
                .join(", ");
            Err(CliError::config(format!("unknown config keys: {list}")))
        }
    }

    /// Sorted `key = value` rendering; the hash input and config.json body.
    pub fn canonical(&self) -> BTreeMap<String, String> {
        self.values
            .iter()
            .map(|(k, v)| (k.clone(), scalar_to_string(v)))
            .collect()
    }

    /// SHA-256 over the command name and the canonical rendering. The `out`
    /// key is skipped: where results land does not change what they are, and
    /// reruns into fresh directories must reuse the run id.
    pub fn hash_hex(&self) -> String {
        let mut text = String::new();
        let _ = writeln!(text, "command = {}", self.command);
        for (k, v) in self.canonical() {
            if k == "out" {
                continue;
            }
            let _ = writeln!(text, "{k} = {v}");
        }
        let digest = Sha256::digest(text.as_bytes());
        let mut hex = String::with_capacity(64);
        for byte in digest {
            let _ = write!(hex, "{byte:02x}");
        }
        hex
    }
}

/// Builds the override list shared by all commands: (key, flag value).
pub fn overrides<const N: usize>(pairs: [(&str, Option<String>); N]) -> Vec<(String, Option<String>)> {
    pairs
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect()
}
