use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{Context, Result};
use serde::Serialize;
use serde_json::Value;

/// Sidecar record written next to every command's outputs.
#[derive(Serialize)]
pub struct RunManifest {
    pub command: String,
    pub config: Value,
    /// Root `--seed` plus every derived sub-seed, by purpose.
    pub seeds: Value,
    pub inputs: Vec<PathBuf>,
    pub outputs: Vec<PathBuf>,
    pub tool_version: &'static str,
    pub duration_secs: f64,
}

pub struct Run {
    command: &'static str,
    started: Instant,
    config: Value,
    seeds: Value,
    inputs: Vec<PathBuf>,
    outputs: Vec<PathBuf>,
}

impl Run {
    pub fn start(command: &'static str, config: impl Serialize) -> Result<Self> {
        Ok(Run {
            command,
            started: Instant::now(),
            config: serde_json::to_value(config)?,
            seeds: Value::Null,
            inputs: Vec::new(),
            outputs: Vec::new(),
        })
    }

    pub fn seeds(&mut self, seeds: Value) {
        self.seeds = seeds;
    }

    pub fn input(&mut self, path: &Path) {
        self.inputs.push(path.to_path_buf());
    }

    pub fn output(&mut self, path: &Path) {
        self.outputs.push(path.to_path_buf());
    }

    /// Writes `<anchor>.manifest.json`, or `<anchor>/run_manifest.json` for
    /// a directory.
    pub fn finish(self, anchor: &Path) -> Result<PathBuf> {
        let path = if anchor.is_dir() {
            anchor.join("run_manifest.json")
        } else {
            let mut name = anchor.as_os_str().to_owned();
            name.push(".manifest.json");
            PathBuf::from(name)
        };
        let manifest = RunManifest {
            command: self.command.to_string(),
            config: self.config,
            seeds: self.seeds,
            inputs: self.inputs,
            outputs: self.outputs,
            tool_version: env!("CARGO_PKG_VERSION"),
            duration_secs: self.started.elapsed().as_secs_f64(),
        };
        std::fs::write(&path, serde_json::to_string_pretty(&manifest)? + "\n")
            .with_context(|| format!("writing {}", path.display()))?;
        Ok(path)
    }
}
