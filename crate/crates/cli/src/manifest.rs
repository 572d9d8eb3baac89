use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use vpdr::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileRecord {
    /// Path relative to the output directory for outputs, as given for inputs.
    pub path: String,
    pub sha256: String,
}

/// Record of one command invocation, written as `manifest.json` next to the
/// outputs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    /// Parsed configuration file (empty when none was given).
    pub config: serde_json::Value,
    /// Command-line options that affect the outputs.
    pub options: serde_json::Value,
    pub seed: Option<u64>,
    pub version: String,
    pub wall_time_s: f64,
    pub inputs: Vec<FileRecord>,
    pub outputs: Vec<FileRecord>,
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path)?;
    Ok(format!("{:x}", Sha256::digest(&bytes)))
}

/// Collects the files a command writes so the manifest lists all of them.
pub struct OutputDir {
    root: PathBuf,
    written: Vec<String>,
    inputs: Vec<FileRecord>,
    started: Instant,
}

impl OutputDir {
    pub fn create(root: &Path) -> Result<Self> {
        std::fs::create_dir_all(root)?;
        Ok(OutputDir { root: root.to_path_buf(), written: Vec::new(), inputs: Vec::new(), started: Instant::now() })
    }

    /// Opens `name` for writing and records it as an output.
    pub fn file(&mut self, name: &str) -> Result<BufWriter<File>> {
        let f = File::create(self.root.join(name))
            .map_err(|e| Error::InvalidInput(format!("cannot write {}: {e}", self.root.join(name).display())))?;
        if !self.written.iter().any(|w| w == name) {
            self.written.push(name.to_string());
        }
        Ok(BufWriter::new(f))
    }

    /// Runs `write` on a fresh output file and flushes it.
    pub fn write_with(&mut self, name: &str, write: impl FnOnce(&mut BufWriter<File>) -> Result<()>) -> Result<()> {
        let mut w = self.file(name)?;
        write(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn record_input(&mut self, path: &Path) -> Result<()> {
        self.inputs.push(FileRecord { path: path.display().to_string(), sha256: sha256_file(path)? });
        Ok(())
    }

    pub fn finish(
        self,
        command: &str,
        config: serde_json::Value,
        options: serde_json::Value,
        seed: Option<u64>,
    ) -> Result<RunManifest> {
        let outputs = self
            .written
            .iter()
            .map(|name| Ok(FileRecord { path: name.clone(), sha256: sha256_file(&self.root.join(name))? }))
            .collect::<Result<Vec<_>>>()?;
        let manifest = RunManifest {
            command: command.to_string(),
            config,
            options,
            seed,
            version: env!("CARGO_PKG_VERSION").to_string(),
            wall_time_s: self.started.elapsed().as_secs_f64(),
            inputs: self.inputs,
            outputs,
        };
        let mut w = BufWriter::new(File::create(self.root.join("manifest.json"))?);
        serde_json::to_writer_pretty(&mut w, &manifest)?;
        w.flush()?;
        Ok(manifest)
    }
}
