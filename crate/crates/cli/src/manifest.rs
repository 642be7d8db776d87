use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use psim_core::io::{sha256_hex, write_json};
use serde::Serialize;

use crate::error::{io_err, CliResult};

#[derive(Debug, Serialize)]
pub struct Stage {
    pub name: String,
    pub seconds: f64,
}

/// Record of one command invocation, written atomically when it finishes.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub tool_version: String,
    pub config_hash: Option<String>,
    pub seeds: BTreeMap<String, u64>,
    pub inputs: Vec<PathBuf>,
    pub outputs: BTreeMap<String, String>,
    pub wall_clock_seconds: f64,
    pub stages: Vec<Stage>,
    #[serde(skip)]
    started: Option<Instant>,
    #[serde(skip)]
    stage_start: Option<Instant>,
}

impl RunManifest {
    pub fn start(command: &str) -> Self {
        let now = Instant::now();
        Self {
            command: command.to_string(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            config_hash: None,
            seeds: BTreeMap::new(),
            inputs: Vec::new(),
            outputs: BTreeMap::new(),
            wall_clock_seconds: 0.0,
            stages: Vec::new(),
            started: Some(now),
            stage_start: Some(now),
        }
    }

    /// Closes the current stage.
    pub fn stage(&mut self, name: &str) {
        let now = Instant::now();
        let start = self.stage_start.replace(now).unwrap_or(now);
        self.stages.push(Stage {
            name: name.to_string(),
            seconds: (now - start).as_secs_f64(),
        });
    }

    /// Hashes every regular file below `out` (except the manifest) into `outputs`.
    pub fn finish(mut self, out: &Path) -> CliResult<()> {
        let mut files = Vec::new();
        collect_files(out, &mut files)?;
        for f in files {
            let rel = f.strip_prefix(out).unwrap_or(&f).to_string_lossy().replace('\\', "/");
            if rel == "manifest.json" {
                continue;
            }
            let bytes = std::fs::read(&f).map_err(|e| io_err(&f, e))?;
            self.outputs.insert(rel, sha256_hex(&bytes));
        }
        self.wall_clock_seconds = self.started.map_or(0.0, |s| s.elapsed().as_secs_f64());
        Ok(write_json(&out.join("manifest.json"), &self)?)
    }
}

fn collect_files(dir: &Path, out: &mut Vec<PathBuf>) -> CliResult<()> {
    let mut entries: Vec<_> = std::fs::read_dir(dir)
        .map_err(|e| io_err(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .collect();
    entries.sort();
    for p in entries {
        if p.is_dir() {
            collect_files(&p, out)?;
        } else if !p.file_name().is_some_and(|n| n.to_string_lossy().starts_with('.')) {
            out.push(p);
        }
    }
    Ok(())
}
