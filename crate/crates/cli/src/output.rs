use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::json;
use sha2::{Digest, Sha256};

use crate::config::RunConfig;
use crate::error::CliError;

/// Writes outputs into one directory, each with a `.meta.json` sidecar.
pub struct OutputDir {
    dir: PathBuf,
    command: &'static str,
    config_sha256: String,
    seeds: serde_json::Value,
    inputs: Vec<serde_json::Value>,
}

impl OutputDir {
    pub fn new(dir: &Path, command: &'static str, cfg: &RunConfig) -> Result<Self, CliError> {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        Ok(OutputDir {
            dir: dir.to_path_buf(),
            command,
            config_sha256: cfg.digest(),
            seeds: json!({ "train": cfg.train.seed, "synthetic": cfg.synthetic.seed }),
            inputs: Vec::new(),
        })
    }

    /// Records an input file and its hash in every later sidecar.
    pub fn add_input(&mut self, path: &Path) -> Result<(), CliError> {
        let bytes = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
        self.inputs.push(json!({
            "path": path.display().to_string(),
            "sha256": hex::encode(Sha256::digest(&bytes)),
        }));
        Ok(())
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    /// Creates `name`, lets `fill` write it, then writes the sidecar.
    pub fn write<F>(&self, name: &str, fill: F) -> Result<PathBuf, CliError>
    where
        F: FnOnce(&mut BufWriter<File>) -> Result<(), CliError>,
    {
        let path = self.path(name);
        let file = File::create(&path).map_err(|e| CliError::io(&path, e))?;
        let mut out = BufWriter::new(file);
        fill(&mut out)?;
        out.flush().map_err(|e| CliError::io(&path, e))?;
        self.write_meta(name)?;
        Ok(path)
    }

    pub fn write_json<T: Serialize>(&self, name: &str, value: &T) -> Result<PathBuf, CliError> {
        self.write(name, |out| {
            serde_json::to_writer_pretty(&mut *out, value).expect("output serializes");
            writeln!(out).map_err(|e| CliError::io(Path::new(name), e))
        })
    }

    fn write_meta(&self, name: &str) -> Result<(), CliError> {
        let meta = json!({
            "command": self.command,
            "output": name,
            "config_sha256": self.config_sha256,
            "seed": self.seeds,
            "inputs": self.inputs,
            "version": env!("CARGO_PKG_VERSION"),
        });
        let path = self.path(&format!("{name}.meta.json"));
        let text = serde_json::to_string_pretty(&meta).expect("metadata serializes") + "\n";
        std::fs::write(&path, text).map_err(|e| CliError::io(&path, e))
    }
}
