//! Run manifests: every command records what produced the contents of its
//! output directory. Multiple commands may share one directory, so the
//! manifest keeps one entry per command name.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use flowcast_core::{Error, Result};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub argv: Vec<String>,
    pub config_path: Option<String>,
    pub seed: Option<u64>,
    pub inputs: Vec<String>,
    pub outputs: Vec<String>,
    pub tool_version: String,
    pub started: String,
    pub finished: String,
}

impl RunManifest {
    pub fn begin(command: &str) -> Self {
        RunManifest {
            command: command.to_string(),
            argv: std::env::args().collect(),
            config_path: None,
            seed: None,
            inputs: Vec::new(),
            outputs: Vec::new(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            started: chrono::Utc::now().to_rfc3339(),
            finished: String::new(),
        }
    }

    pub fn input(mut self, path: &Path) -> Self {
        self.inputs.push(path.display().to_string());
        self
    }

    pub fn output(mut self, name: &str) -> Self {
        self.outputs.push(name.to_string());
        self
    }

    pub fn config(mut self, path: Option<&Path>) -> Self {
        self.config_path = path.map(|p| p.display().to_string());
        self
    }

    pub fn seed(mut self, seed: u64) -> Self {
        self.seed = Some(seed);
        self
    }

    /// Stamps the finish time and upserts this entry in
    /// `<dir>/manifest.json`.
    pub fn write(mut self, dir: &Path) -> Result<()> {
        self.finished = chrono::Utc::now().to_rfc3339();
        fs::create_dir_all(dir).map_err(|e| Error::io(dir.display().to_string(), e))?;
        let path = dir.join("manifest.json");
        let mut entries: BTreeMap<String, RunManifest> = match fs::read_to_string(&path) {
            Ok(json) => serde_json::from_str(&json).unwrap_or_default(),
            Err(_) => BTreeMap::new(),
        };
        entries.insert(self.command.clone(), self);
        let json = serde_json::to_string_pretty(&entries).map_err(|e| Error::Json {
            path: path.display().to_string(),
            source: e,
        })?;
        fs::write(&path, json).map_err(|e| Error::io(path.display().to_string(), e))?;
        Ok(())
    }
}
