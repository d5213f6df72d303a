use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::CliError;

/// Record written next to every artifact; `argv` replays the run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub version: String,
    /// Every parameter after defaults were applied.
    pub parameters: serde_json::Map<String, serde_json::Value>,
    pub seeds: Vec<u64>,
    pub inputs: Vec<PathBuf>,
    pub outputs: Vec<PathBuf>,
    /// Arguments after the program name that reproduce this run.
    pub argv: Vec<String>,
}

impl RunManifest {
    pub fn new(command: &str) -> Self {
        Self {
            command: command.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            parameters: serde_json::Map::new(),
            seeds: Vec::new(),
            inputs: Vec::new(),
            outputs: Vec::new(),
            argv: vec![command.to_string()],
        }
    }

    /// Records a resolved parameter and the flag that sets it.
    pub fn param(&mut self, name: &str, value: impl Into<serde_json::Value> + ToString + Clone) -> &mut Self {
        self.argv.push(format!("--{}", name.replace('_', "-")));
        self.argv.push(value.to_string());
        self.parameters.insert(name.to_string(), value.into());
        self
    }

    pub fn write(&self, path: &Path) -> Result<(), CliError> {
        let text = serde_json::to_string_pretty(self).map_err(|e| CliError::Invalid(e.to_string()))?;
        fs::write(path, text + "\n").map_err(|e| CliError::io(path, e))
    }

    #[cfg(test)]
    pub fn read(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| CliError::Invalid(format!("{}: {e}", path.display())))
    }
}
