//! CSV and text outputs, each with a JSON manifest sidecar.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::CliError;

pub fn num(v: f64) -> String {
    format!("{v:.12e}")
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Serialize)]
struct Manifest<'a> {
    output: &'a str,
    output_sha256: String,
    command: &'a str,
    args: &'a [String],
    version: &'a str,
    config_sha256: Option<&'a str>,
    seed: Option<u64>,
}

pub struct Outputs {
    dir: PathBuf,
    command: String,
    args: Vec<String>,
    config_sha256: Option<String>,
    pub seed: Option<u64>,
    written: Vec<PathBuf>,
}

impl Outputs {
    pub fn new(dir: &Path, command: &str, args: Vec<String>, config_sha256: Option<String>) -> Result<Self, CliError> {
        fs::create_dir_all(dir)?;
        Ok(Self {
            dir: dir.to_path_buf(),
            command: command.to_string(),
            args,
            config_sha256,
            seed: None,
            written: Vec::new(),
        })
    }

    pub fn written(&self) -> &[PathBuf] {
        &self.written
    }

    /// Writes `name` and `name.manifest.json`.
    pub fn bytes(&mut self, name: &str, bytes: &[u8]) -> Result<(), CliError> {
        let path = self.dir.join(name);
        fs::write(&path, bytes)?;
        let manifest = Manifest {
            output: name,
            output_sha256: sha256_hex(bytes),
            command: &self.command,
            args: &self.args,
            version: env!("CARGO_PKG_VERSION"),
            config_sha256: self.config_sha256.as_deref(),
            seed: self.seed,
        };
        let mut json = serde_json::to_vec_pretty(&manifest)?;
        json.push(b'\n');
        fs::write(self.dir.join(format!("{name}.manifest.json")), json)?;
        self.written.push(path);
        Ok(())
    }

    pub fn csv<I>(&mut self, name: &str, header: &[&str], rows: I) -> Result<(), CliError>
    where
        I: IntoIterator<Item = Vec<String>>,
    {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(header)?;
        for row in rows {
            w.write_record(&row)?;
        }
        let bytes = w.into_inner().map_err(|e| CliError::Io(e.into_error()))?;
        self.bytes(name, &bytes)
    }
}
