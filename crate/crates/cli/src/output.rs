//! Output directories: artifacts with digests and a manifest that suffices to
//! re-run the command. Nothing time-dependent is written.

use std::fs;
use std::path::{Path, PathBuf};

use phkin::{Error, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::RunConfig;

/// Overrides the directory that relative output paths resolve against.
pub const OUTPUT_ROOT_ENV: &str = "PHKIN_OUTPUT_ROOT";
pub const MANIFEST: &str = "manifest.json";

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ArtifactDigest {
    pub file: String,
    pub sha256: String,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub config_hash: String,
    pub phkin_version: String,
    pub cli_version: String,
    pub workers: usize,
    pub config: RunConfig,
    /// Digests of files the run read, such as a series passed to `fit`.
    pub inputs: Vec<ArtifactDigest>,
    pub artifacts: Vec<ArtifactDigest>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Digest of the configuration with the output and cache locations removed.
pub fn config_hash(cfg: &RunConfig) -> String {
    let mut c = cfg.clone();
    c.output = None;
    c.cache_dir = None;
    sha256_hex(&serde_json::to_vec(&c).expect("config serializes"))
}

pub fn resolve_output(cfg: &RunConfig, command: &str, hash: &str) -> PathBuf {
    let root = std::env::var_os(OUTPUT_ROOT_ENV).map(PathBuf::from).unwrap_or_else(|| PathBuf::from("."));
    match &cfg.output {
        Some(p) => root.join(p),
        None => root.join("phkin-runs").join(format!("{command}-{}", &hash[..12])),
    }
}

pub struct RunDir {
    dir: PathBuf,
    artifacts: Vec<ArtifactDigest>,
    inputs: Vec<ArtifactDigest>,
}

impl RunDir {
    pub fn create(dir: PathBuf) -> Result<Self> {
        fs::create_dir_all(&dir)?;
        Ok(Self { dir, artifacts: Vec::new(), inputs: Vec::new() })
    }

    pub fn write(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        fs::write(self.dir.join(name), bytes)?;
        self.artifacts.push(ArtifactDigest { file: name.into(), sha256: sha256_hex(bytes) });
        Ok(())
    }

    pub fn write_json(&mut self, name: &str, value: &impl Serialize) -> Result<()> {
        let mut s = serde_json::to_string_pretty(value).map_err(|e| Error::Inconsistent(e.to_string()))?;
        s.push('\n');
        self.write(name, s.as_bytes())
    }

    pub fn record_input(&mut self, path: &Path, bytes: &[u8]) {
        self.inputs.push(ArtifactDigest { file: path.display().to_string(), sha256: sha256_hex(bytes) });
    }

    pub fn finish(mut self, command: &str, cfg: &RunConfig, workers: usize) -> Result<PathBuf> {
        self.artifacts.sort_by(|a, b| a.file.cmp(&b.file));
        let manifest = Manifest {
            command: command.into(),
            config_hash: config_hash(cfg),
            phkin_version: phkin::VERSION.into(),
            cli_version: env!("CARGO_PKG_VERSION").into(),
            workers,
            config: cfg.clone(),
            inputs: self.inputs.clone(),
            artifacts: self.artifacts.clone(),
        };
        let mut s = serde_json::to_string_pretty(&manifest).map_err(|e| Error::Inconsistent(e.to_string()))?;
        s.push('\n');
        fs::write(self.dir.join(MANIFEST), s)?;
        Ok(self.dir)
    }
}

pub fn read_manifest(dir: &Path) -> Result<Manifest> {
    let p = dir.join(MANIFEST);
    let text = fs::read_to_string(&p)?;
    serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", p.display())))
}
