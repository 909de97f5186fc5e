//! Flat `key=value` parameter files.
//!
//! Blank lines and `#` comments are ignored. A file whose first line starts
//! with `#@` is read as the metadata header of a CSV written by this tool:
//! only the leading `#@ key=value` lines are parsed, so an output file can be
//! fed back with `--config` to reproduce it.

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use crate::error::CliError;

pub const HEADER_PREFIX: &str = "#@";

/// Resolved parameters for one run, keyed by config name.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Params {
    values: BTreeMap<String, String>,
}

impl Params {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let mut values = BTreeMap::new();
        let from_header = text.starts_with(HEADER_PREFIX);
        for (idx, raw) in text.lines().enumerate() {
            let lineno = idx + 1;
            let line = if from_header {
                match raw.strip_prefix(HEADER_PREFIX) {
                    Some(rest) => rest,
                    None => break,
                }
            } else {
                raw
            };
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                CliError::Validation(format!(
                    "config line {lineno}: expected key=value, got `{line}`"
                ))
            })?;
            let key = key.trim();
            if key.is_empty() || !key.chars().all(|c| c.is_ascii_alphanumeric() || c == '_') {
                return Err(CliError::Validation(format!(
                    "config line {lineno}: bad key `{key}`"
                )));
            }
            values.insert(key.to_string(), value.trim().to_string());
        }
        Ok(Self { values })
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            CliError::Validation(format!("cannot read config {}: {e}", path.display()))
        })?;
        Self::parse(&text)
    }

    pub fn set(&mut self, key: &str, value: impl ToString) {
        self.values.insert(key.to_string(), value.to_string());
    }

    pub fn set_opt<V: ToString>(&mut self, key: &str, value: Option<V>) {
        if let Some(v) = value {
            self.set(key, v);
        }
    }

    pub fn set_default(&mut self, key: &str, value: impl ToString) {
        self.values
            .entry(key.to_string())
            .or_insert_with(|| value.to_string());
    }

    pub fn raw(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    pub fn remove(&mut self, key: &str) -> Option<String> {
        self.values.remove(key)
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<T, CliError> {
        let raw = self
            .raw(key)
            .ok_or_else(|| CliError::Validation(format!("missing required parameter `{key}`")))?;
        raw.parse()
            .map_err(|_| CliError::Validation(format!("invalid value for {key}: `{raw}`")))
    }

    pub fn get_bool(&self, key: &str) -> Result<bool, CliError> {
        match self.raw(key) {
            None => Ok(false),
            Some("true" | "1" | "yes") => Ok(true),
            Some("false" | "0" | "no") => Ok(false),
            Some(other) => Err(CliError::Validation(format!(
                "invalid value for {key}: `{other}`"
            ))),
        }
    }

    /// Comma-separated list; `a:b` expands to the inclusive integer range.
    pub fn get_list<T: FromStr>(&self, key: &str) -> Result<Vec<T>, CliError> {
        let raw = self
            .raw(key)
            .ok_or_else(|| CliError::Validation(format!("missing required parameter `{key}`")))?;
        let bad = || CliError::Validation(format!("invalid value for {key}: `{raw}`"));
        let mut out = Vec::new();
        for item in raw.split(',').map(str::trim).filter(|s| !s.is_empty()) {
            if let Some((a, b)) = item.split_once(':') {
                let (a, b): (i64, i64) = (
                    a.trim().parse().map_err(|_| bad())?,
                    b.trim().parse().map_err(|_| bad())?,
                );
                if a > b {
                    return Err(bad());
                }
                for v in a..=b {
                    out.push(v.to_string().parse().map_err(|_| bad())?);
                }
            } else {
                out.push(item.parse().map_err(|_| bad())?);
            }
        }
        if out.is_empty() {
            return Err(CliError::Validation(format!("{key} must not be empty")));
        }
        Ok(out)
    }

    /// `#@ key=value` lines, sorted by key.
    pub fn header(&self) -> String {
        self.values
            .iter()
            .map(|(k, v)| format!("{HEADER_PREFIX} {k}={v}\n"))
            .collect()
    }
}
