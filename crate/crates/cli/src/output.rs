use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::Resolved;

/// Version tag carried by every JSON file.
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Serialize)]
struct FileEntry {
    name: String,
    sha256: String,
}

#[derive(Serialize)]
struct Manifest<'a> {
    schema_version: u32,
    tool: &'static str,
    version: &'static str,
    command: &'a str,
    seed: u64,
    config_sha256: String,
    config: &'a Resolved,
    files: Vec<FileEntry>,
}

/// Writes each output file once and records its hash for the manifest.
pub struct Output {
    dir: PathBuf,
    files: Vec<FileEntry>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

impl Output {
    pub fn create(dir: &Path) -> Result<Self> {
        std::fs::create_dir_all(dir)
            .with_context(|| format!("creating output directory {}", dir.display()))?;
        Ok(Output {
            dir: dir.to_path_buf(),
            files: Vec::new(),
        })
    }

    pub fn write(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        let path = self.dir.join(name);
        std::fs::write(&path, bytes).with_context(|| format!("writing {}", path.display()))?;
        self.files.push(FileEntry {
            name: name.into(),
            sha256: sha256_hex(bytes),
        });
        Ok(())
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let mut s = serde_json::to_string_pretty(value)?;
        s.push('\n');
        self.write(name, s.as_bytes())
    }

    /// Writes `config.toml` (the resolved parameters) and `manifest.json`.
    pub fn finish(mut self, cfg: &Resolved) -> Result<()> {
        let text = cfg.to_toml()?;
        self.write("config.toml", text.as_bytes())?;
        let m = Manifest {
            schema_version: SCHEMA_VERSION,
            tool: "lrdspde",
            version: env!("CARGO_PKG_VERSION"),
            command: &cfg.command,
            seed: cfg.run.seed,
            config_sha256: sha256_hex(text.as_bytes()),
            config: cfg,
            files: std::mem::take(&mut self.files),
        };
        let mut s = serde_json::to_string_pretty(&m)?;
        s.push('\n');
        let path = self.dir.join("manifest.json");
        std::fs::write(&path, s).with_context(|| format!("writing {}", path.display()))?;
        Ok(())
    }
}
