//! Layering of the TOML config file and command-line flags into one
//! `ExperimentConfig`.

use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use netctrl::experiment::ExperimentConfig;
use toml::{Table, Value};

/// Config table under construction. Flags are applied after the file so
/// they win.
#[derive(Default)]
pub struct Layers {
    table: Table,
}

impl Layers {
    pub fn from_file(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(Layers::default());
        };
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let table: Table = toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        Ok(Layers { table })
    }

    /// Sets a dotted key such as `train.epochs`.
    pub fn set(&mut self, key: &str, value: impl Into<Value>) -> Result<()> {
        let mut parts: Vec<&str> = key.split('.').collect();
        let leaf = parts.pop().filter(|s| !s.is_empty()).with_context(|| format!("empty key {key:?}"))?;
        let mut table = &mut self.table;
        for part in parts {
            let entry = table.entry(part.to_string()).or_insert_with(|| Value::Table(Table::new()));
            table = match entry {
                Value::Table(t) => t,
                _ => bail!("{key:?}: {part:?} is not a table"),
            };
        }
        table.insert(leaf.to_string(), value.into());
        Ok(())
    }

    pub fn set_opt<T: Into<Value>>(&mut self, key: &str, value: Option<T>) -> Result<()> {
        match value {
            Some(v) => self.set(key, v),
            None => Ok(()),
        }
    }

    /// Applies a `key=value` assignment; the value is read as a TOML
    /// literal and falls back to a bare string.
    pub fn assign(&mut self, assignment: &str) -> Result<()> {
        let (key, raw) = assignment
            .split_once('=')
            .with_context(|| format!("expected key=value, got {assignment:?}"))?;
        let value = toml::from_str::<Table>(&format!("v = {raw}"))
            .ok()
            .and_then(|mut t| t.remove("v"))
            .unwrap_or_else(|| Value::String(raw.to_string()));
        self.set(key.trim(), value)
    }

    pub fn build(self) -> Result<ExperimentConfig> {
        let cfg: ExperimentConfig = Value::Table(self.table).try_into().context("invalid configuration")?;
        cfg.validate().context("invalid configuration")?;
        Ok(cfg)
    }
}
