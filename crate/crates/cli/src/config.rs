//! Resolved run parameters: config file entries overridden by flags.
//!
//! The config grammar is one `key = value` per line. Keys are the long flag
//! names (`samples`, `nu`, `grid`, ...), `#` starts a comment and blank lines
//! are skipped. A manifest written by an earlier run is accepted as well, in
//! which case its recorded parameters are replayed.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::Path;
use std::str::FromStr;

use crate::CliError;

pub const SEED_ENV: &str = "GENFRAC_SEED";

#[derive(Debug, Clone, Default)]
pub struct Params {
    map: BTreeMap<String, String>,
}

impl Params {
    pub fn load(path: Option<&Path>, command: &str) -> Result<Self, CliError> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Io(format!("cannot read config {}: {e}", path.display())))?;
        if text.trim_start().starts_with('{') {
            return Self::from_manifest(&text, command, path);
        }
        let mut map = BTreeMap::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return Err(CliError::Usage(format!(
                    "{}:{}: expected `key = value`, got {raw:?}",
                    path.display(),
                    n + 1
                )));
            };
            let key = k.trim().replace('_', "-");
            if key.is_empty() {
                return Err(CliError::Usage(format!(
                    "{}:{}: empty key",
                    path.display(),
                    n + 1
                )));
            }
            map.insert(key, v.trim().to_string());
        }
        Ok(Self { map })
    }

    fn from_manifest(text: &str, command: &str, path: &Path) -> Result<Self, CliError> {
        let doc: serde_json::Value = serde_json::from_str(text)
            .map_err(|e| CliError::Usage(format!("{}: not a manifest: {e}", path.display())))?;
        let recorded = doc
            .get("command")
            .and_then(|c| c.as_str())
            .unwrap_or_default();
        if recorded != command {
            return Err(CliError::Usage(format!(
                "{} was written by `{recorded}`, not `{command}`",
                path.display()
            )));
        }
        let params = doc
            .get("params")
            .and_then(|p| p.as_object())
            .ok_or_else(|| {
                CliError::Usage(format!("{}: manifest has no params", path.display()))
            })?;
        let mut map = BTreeMap::new();
        for (k, v) in params {
            let v = v.as_str().ok_or_else(|| {
                CliError::Usage(format!("{}: parameter {k} is not a string", path.display()))
            })?;
            map.insert(k.clone(), v.to_string());
        }
        Ok(Self { map })
    }

    pub fn set(&mut self, key: &str, value: Option<&String>) {
        if let Some(v) = value {
            self.map.insert(key.to_string(), v.clone());
        }
    }

    pub fn raw(&self, key: &str) -> Option<&str> {
        self.map.get(key).map(String::as_str)
    }

    pub fn require(&self, key: &str) -> Result<&str, CliError> {
        self.raw(key)
            .ok_or_else(|| CliError::Usage(format!("missing required option --{key}")))
    }

    pub fn get<T>(&self, key: &str) -> Result<Option<T>, CliError>
    where
        T: FromStr,
        T::Err: Display,
    {
        self.raw(key)
            .map(|v| {
                v.parse::<T>()
                    .map_err(|e| CliError::Usage(format!("--{key} {v:?}: {e}")))
            })
            .transpose()
    }

    pub fn get_or<T>(&self, key: &str, default: T) -> Result<T, CliError>
    where
        T: FromStr,
        T::Err: Display,
    {
        Ok(self.get(key)?.unwrap_or(default))
    }

    /// `--seed`, else `GENFRAC_SEED`, else 0. The outcome is stored so that
    /// the manifest replays it.
    pub fn resolve_seed(&mut self) -> Result<u64, CliError> {
        if self.raw("seed").is_none() {
            let v = std::env::var(SEED_ENV).unwrap_or_else(|_| "0".into());
            self.map.insert("seed".into(), v);
        }
        let seed = self.raw("seed").unwrap_or("0");
        seed.trim()
            .parse::<u64>()
            .map_err(|e| CliError::Usage(format!("seed {seed:?}: {e}")))
    }

    pub fn entries(&self) -> &BTreeMap<String, String> {
        &self.map
    }
}
