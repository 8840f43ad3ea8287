use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::Result;
use serde::Serialize;

/// Record of one command run, written next to its output.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub settings: serde_json::Value,
    pub seed: u64,
    pub threads: Option<usize>,
    pub tool_version: &'static str,
    pub inputs: Vec<PathBuf>,
    pub output: Option<PathBuf>,
    pub wall_time_s: f64,
}

pub struct ManifestBuilder {
    command: String,
    settings: serde_json::Value,
    seed: u64,
    threads: Option<usize>,
    inputs: Vec<PathBuf>,
    start: Instant,
}

impl ManifestBuilder {
    pub fn new(command: &str, settings: serde_json::Value, global: &crate::Global) -> Self {
        Self {
            command: command.to_string(),
            settings,
            seed: global.seed,
            threads: global.threads,
            inputs: Vec::new(),
            start: Instant::now(),
        }
    }

    pub fn input(mut self, p: &Path) -> Self {
        self.inputs.push(p.to_path_buf());
        self
    }

    /// Writes `<out>.manifest.json` when there is an output file.
    pub fn finish(self, out: Option<&Path>) -> Result<()> {
        let Some(out) = out else {
            return Ok(());
        };
        let m = RunManifest {
            command: self.command,
            settings: self.settings,
            seed: self.seed,
            threads: self.threads,
            tool_version: env!("CARGO_PKG_VERSION"),
            inputs: self.inputs,
            output: Some(out.to_path_buf()),
            wall_time_s: self.start.elapsed().as_secs_f64(),
        };
        let path = manifest_path(out);
        std::fs::write(&path, serde_json::to_string_pretty(&m)? + "\n")?;
        Ok(())
    }
}

pub fn manifest_path(out: &Path) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(".manifest.json");
    PathBuf::from(s)
}
