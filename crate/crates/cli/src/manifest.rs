use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::{CliResult, Config};

#[derive(Debug, Serialize)]
pub struct Artifact {
    /// Relative to the output directory, `/`-separated.
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Serialize)]
pub struct Seeds {
    pub master_seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub data_seed: Option<u64>,
}

#[derive(Debug, Serialize)]
pub struct RunManifest<'a> {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: &'a str,
    pub config: &'a Config,
    pub seeds: Seeds,
    pub threads: usize,
    pub artifacts: Vec<Artifact>,
    /// Seconds per stage, in execution order.
    pub timings: Vec<(String, f64)>,
    pub wall_clock_seconds: f64,
}

/// Wall-clock timings of named stages.
pub struct Stopwatch {
    start: Instant,
    stages: Vec<(String, f64)>,
}

impl Stopwatch {
    pub fn new() -> Self {
        Self {
            start: Instant::now(),
            stages: Vec::new(),
        }
    }

    pub fn time<T>(&mut self, stage: &str, f: impl FnOnce() -> T) -> T {
        let t = Instant::now();
        let out = f();
        self.stages.push((stage.to_string(), t.elapsed().as_secs_f64()));
        out
    }

    pub fn elapsed(&self) -> f64 {
        self.start.elapsed().as_secs_f64()
    }
}

pub fn artifact(dir: &Path, path: &Path) -> CliResult<Artifact> {
    let bytes = std::fs::read(path)?;
    let rel = path.strip_prefix(dir).unwrap_or(path);
    Ok(Artifact {
        path: rel.components().map(|c| c.as_os_str().to_string_lossy()).collect::<Vec<_>>().join("/"),
        sha256: hex::encode(Sha256::digest(&bytes)),
        bytes: bytes.len() as u64,
    })
}

/// Writes `manifest.json` into `dir`; called after every other output.
pub fn write_manifest(
    dir: &Path,
    command: &str,
    config: &Config,
    files: &[PathBuf],
    watch: &Stopwatch,
    threads: usize,
) -> CliResult<PathBuf> {
    let data_seed = match &config.data {
        crate::config::DataConfig::Synthetic { seed, .. } => Some(*seed),
        crate::config::DataConfig::Csv { .. } => None,
    };
    let manifest = RunManifest {
        tool: "samplan",
        version: env!("CARGO_PKG_VERSION"),
        command,
        config,
        seeds: Seeds {
            master_seed: config.scenario.master_seed,
            data_seed,
        },
        threads,
        artifacts: files.iter().map(|f| artifact(dir, f)).collect::<CliResult<_>>()?,
        timings: watch.stages.clone(),
        wall_clock_seconds: watch.elapsed(),
    };
    let path = dir.join("manifest.json");
    samplan::engine::write_report_json(&path, &manifest)?;
    Ok(path)
}
