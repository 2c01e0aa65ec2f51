use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{Map, Value};

/// Bad flags or configuration. Maps to exit status 2.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

pub fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

pub fn required<T>(value: Option<T>, flag: &str) -> Result<T> {
    value.ok_or_else(|| usage(format!("missing required option --{flag}")))
}

pub const SECTIONS: &[&str] = &[
    "prepare",
    "train",
    "eval",
    "extract",
    "quantize",
    "diagnose",
    "bound-check",
    "cost",
];

/// A TOML file with an optional top-level `threads` key and one table per subcommand.
#[derive(Debug, Default)]
pub struct ConfigFile {
    threads: Option<usize>,
    sections: Map<String, Value>,
}

impl ConfigFile {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        Self::parse(&text).map_err(|e| usage(format!("config {}: {e}", path.display())))
    }

    pub fn parse(text: &str) -> Result<Self, String> {
        let table: toml::Table = text.parse().map_err(|e: toml::de::Error| e.message().to_string())?;
        let mut cfg = ConfigFile::default();
        for (key, value) in table {
            if key == "threads" {
                let n = value
                    .as_integer()
                    .filter(|&n| n > 0)
                    .ok_or("threads must be a positive integer")?;
                cfg.threads = Some(n as usize);
            } else if SECTIONS.contains(&key.as_str()) {
                let json = serde_json::to_value(&value).map_err(|e| e.to_string())?;
                if !json.is_object() {
                    return Err(format!("[{key}] must be a table"));
                }
                cfg.sections.insert(key, json);
            } else {
                return Err(format!("unknown key '{key}'"));
            }
        }
        Ok(cfg)
    }

    pub fn threads(&self) -> Option<usize> {
        self.threads
    }

    fn section(&self, name: &str) -> Map<String, Value> {
        match self.sections.get(name) {
            Some(Value::Object(m)) => m.clone(),
            _ => Map::new(),
        }
    }
}

/// Overlays the flags given on the command line onto the subcommand's config section.
pub fn merge<T: Serialize + DeserializeOwned>(flags: &T, config: &ConfigFile, section: &str) -> Result<T> {
    let mut merged = config.section(section);
    if let Value::Object(given) = serde_json::to_value(flags)? {
        merged.extend(given.into_iter().filter(|(_, v)| !v.is_null()));
    }
    let effective: T = serde_json::from_value(Value::Object(merged)).map_err(|e| usage(format!("[{section}] {e}")))?;
    log::info!("effective config [{section}] {}", serde_json::to_string(&effective)?);
    Ok(effective)
}

/// Rejects runs that would write over one of their inputs.
pub fn check_outputs(inputs: &[&Path], outputs: &[&Path]) -> Result<()> {
    let key = |p: &Path| -> PathBuf { fs::canonicalize(p).unwrap_or_else(|_| p.to_path_buf()) };
    for out in outputs {
        if inputs.iter().any(|i| key(i) == key(out)) {
            return Err(usage(format!("output {} is also an input", out.display())));
        }
    }
    Ok(())
}
