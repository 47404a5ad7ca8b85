//! Run manifests: what was run, with which settings, on which inputs, and
//! what it wrote.

use std::fs;
use std::path::{Path, PathBuf};

use chrono::{SecondsFormat, Utc};
use marbubble::Error;
use serde::Serialize;
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, Serialize)]
pub struct FileDigest {
    pub path: PathBuf,
    pub sha256: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub tool_version: String,
    pub config: serde_json::Value,
    pub seeds: Vec<u64>,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
    pub started: String,
    pub finished: String,
}

pub fn sha256_file(path: &Path) -> Result<String, Error> {
    let bytes = fs::read(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(format!("{:x}", Sha256::digest(&bytes)))
}

fn now() -> String {
    Utc::now().to_rfc3339_opts(SecondsFormat::Millis, true)
}

/// Collects inputs and outputs while a command runs.
pub struct Recorder {
    command: String,
    config: serde_json::Value,
    seeds: Vec<u64>,
    inputs: Vec<FileDigest>,
    outputs: Vec<PathBuf>,
    started: String,
    out_dir: PathBuf,
}

impl Recorder {
    pub fn new(command: &str, config: serde_json::Value, seeds: Vec<u64>, out_dir: &Path) -> Self {
        Self {
            command: command.to_string(),
            config,
            seeds,
            inputs: Vec::new(),
            outputs: Vec::new(),
            started: now(),
            out_dir: out_dir.to_path_buf(),
        }
    }

    pub fn manifest_name(&self) -> String {
        format!("{}.manifest.json", self.command)
    }

    pub fn input(&mut self, path: &Path) -> Result<(), Error> {
        let sha256 = sha256_file(path)?;
        self.inputs.push(FileDigest {
            path: path.to_path_buf(),
            sha256,
        });
        Ok(())
    }

    /// Path inside the output directory, remembered as an output.
    pub fn output(&mut self, name: &str) -> PathBuf {
        let p = self.out_dir.join(name);
        self.outputs.push(p.clone());
        p
    }

    /// Writes the manifest and returns its path.
    pub fn finish(self) -> Result<PathBuf, Error> {
        let outputs = self
            .outputs
            .iter()
            .map(|p| {
                Ok(FileDigest {
                    path: p.clone(),
                    sha256: sha256_file(p)?,
                })
            })
            .collect::<Result<Vec<_>, Error>>()?;
        let path = self.out_dir.join(self.manifest_name());
        let m = RunManifest {
            command: self.command,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            config: self.config,
            seeds: self.seeds,
            inputs: self.inputs,
            outputs,
            started: self.started,
            finished: now(),
        };
        let text = serde_json::to_string_pretty(&m).map_err(|e| Error::Validation(e.to_string()))?;
        fs::write(&path, text + "\n").map_err(|source| Error::Io {
            path: path.clone(),
            source,
        })?;
        Ok(path)
    }
}
