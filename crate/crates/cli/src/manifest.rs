use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::Value;

use crate::error::CliError;

/// Record of one run, written as `manifest.json` next to the outputs.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub config_hash: String,
    pub artifact_version: String,
    pub command: String,
    pub started: String,
    pub finished: String,
    pub seed: u64,
    pub threads: usize,
    pub outputs: Vec<String>,
    pub key_results: Value,
}

/// Output directory that remembers every file written through it.
pub struct OutputDir {
    root: PathBuf,
    written: Vec<String>,
}

impl OutputDir {
    pub fn create(root: &Path) -> Result<Self, CliError> {
        fs::create_dir_all(root).map_err(|e| CliError::Io(root.display().to_string(), e))?;
        Ok(OutputDir { root: root.to_path_buf(), written: Vec::new() })
    }

    pub fn path(&self) -> &Path {
        &self.root
    }

    /// Write a file with `body` and record it.
    pub fn write_with(
        &mut self,
        name: &str,
        body: impl FnOnce(&mut dyn Write) -> std::io::Result<()>,
    ) -> Result<(), CliError> {
        let path = self.root.join(name);
        let io = |e| CliError::Io(path.display().to_string(), e);
        let mut w = BufWriter::new(fs::File::create(&path).map_err(io)?);
        body(&mut w).map_err(io)?;
        w.flush().map_err(io)?;
        log::info!("wrote {}", path.display());
        self.written.push(name.to_string());
        Ok(())
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), CliError> {
        self.write_with(name, |w| {
            serde_json::to_writer_pretty(&mut *w, value).map_err(std::io::Error::other)?;
            writeln!(w)
        })
    }

    pub fn written(&self) -> &[String] {
        &self.written
    }

    /// Write the manifest; it lists every other output.
    pub fn finish(mut self, mut manifest: RunManifest) -> Result<(), CliError> {
        manifest.outputs = self.written.clone();
        self.write_json("manifest.json", &manifest)
    }
}
