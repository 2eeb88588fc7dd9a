//! Run manifests and config parsing.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::io::{sha256_file, sha256_hex, write_json};
use crate::error::{Error, Result};

pub const MANIFEST_FILE: &str = "manifest.json";

/// What produced a directory of outputs, with enough to reproduce it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub command: String,
    /// The effective config, defaults filled in.
    pub config: serde_json::Value,
    pub config_hash: String,
    pub seed: Option<u64>,
    pub method_grid: Vec<String>,
    /// Seconds per stage.
    pub timings: BTreeMap<String, f64>,
    /// Output file name to sha256.
    pub outputs: BTreeMap<String, String>,
}

impl RunManifest {
    pub fn new<C: Serialize>(command: &str, config: &C, seed: Option<u64>) -> Result<Self> {
        let config = serde_json::to_value(config)?;
        Ok(Self {
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            config_hash: sha256_hex(serde_json::to_string(&config)?.as_bytes()),
            config,
            seed,
            method_grid: Vec::new(),
            timings: BTreeMap::new(),
            outputs: BTreeMap::new(),
        })
    }

    /// Hashes `name` inside `dir` and records it.
    pub fn record_output(&mut self, dir: &Path, name: &str) -> Result<()> {
        let hash = sha256_file(&dir.join(name))?;
        self.outputs.insert(name.to_string(), hash);
        Ok(())
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        write_json(&dir.join(MANIFEST_FILE), self)
    }

    pub fn read(dir: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&fs::read_to_string(
            dir.join(MANIFEST_FILE),
        )?)?)
    }

    /// Names of outputs that are missing or whose hash differs.
    pub fn verify(&self, dir: &Path) -> Vec<String> {
        self.outputs
            .iter()
            .filter(|(name, hash)| {
                sha256_file(&dir.join(name)).ok().as_deref() != Some(hash.as_str())
            })
            .map(|(name, _)| name.clone())
            .collect()
    }
}

/// 1-based line of the first `"key"` in `text`.
fn key_line(text: &str, key: &str) -> Option<usize> {
    let quoted = format!("\"{key}\"");
    text.lines()
        .position(|l| l.contains(&quoted))
        .map(|i| i + 1)
}

/// Parses a JSON config; both syntax and schema errors come back as
/// [`Error::Config`] with the offending line.
pub fn parse_config<C: DeserializeOwned>(text: &str) -> Result<C> {
    serde_json::from_str(text).map_err(|e| Error::Config {
        line: e.line().max(1),
        message: e.to_string(),
    })
}

/// Turns a validation failure into a config error anchored at the first
/// config key the message names.
pub fn anchor(text: &str, err: Error) -> Error {
    match err {
        Error::InvalidArgument(message) => {
            let line = message
                .split(|c: char| !(c.is_ascii_alphanumeric() || c == '_'))
                .filter(|w| !w.is_empty())
                .find_map(|w| key_line(text, w))
                .unwrap_or(1);
            Error::Config { line, message }
        }
        other => other,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[derive(Debug, Deserialize)]
    #[serde(deny_unknown_fields)]
    #[allow(dead_code)]
    struct Cfg {
        a: u32,
        b: f64,
    }

    #[test]
    fn schema_errors_carry_lines() {
        let text = "{\n  \"a\": 1,\n  \"c\": 2\n}";
        match parse_config::<Cfg>(text) {
            Err(Error::Config { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn validation_errors_are_anchored_at_the_key() {
        let text = "{\n  \"n_scans\": 5,\n  \"tr\": 0\n}";
        match anchor(
            text,
            Error::InvalidArgument("tr must be positive, got 0".into()),
        ) {
            Error::Config { line, .. } => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn manifest_hashes_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("x.txt"), "hello").unwrap();
        let mut m = RunManifest::new("test", &serde_json::json!({"seed": 1}), Some(1)).unwrap();
        m.record_output(dir.path(), "x.txt").unwrap();
        m.write(dir.path()).unwrap();
        let back = RunManifest::read(dir.path()).unwrap();
        assert_eq!(back, m);
        assert!(back.verify(dir.path()).is_empty());
        fs::write(dir.path().join("x.txt"), "changed").unwrap();
        assert_eq!(back.verify(dir.path()), ["x.txt"]);
    }
}
