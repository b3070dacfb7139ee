//! Output directory: CSV tables, JSON documents, binary dumps and the manifest.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::json;
use sha2::{Digest, Sha256};

/// One written file and the SHA-256 of its bytes.
#[derive(Debug, Clone, Serialize)]
pub struct WrittenFile {
    pub name: String,
    pub sha256: String,
}

/// Collects the files of one run under `dir`.
#[derive(Debug)]
pub struct OutputDir {
    dir: PathBuf,
    config_hash: String,
    files: Vec<WrittenFile>,
}

/// Shortest round-trip representation, so equal numbers give equal bytes.
pub fn num(v: f64) -> String {
    if v.is_finite() {
        format!("{v:?}")
    } else if v.is_nan() {
        "nan".into()
    } else if v > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}

impl OutputDir {
    pub fn create(dir: &Path, config_hash: &str) -> io::Result<Self> {
        fs::create_dir_all(dir)?;
        Ok(Self { dir: dir.to_path_buf(), config_hash: config_hash.to_string(), files: Vec::new() })
    }

    pub fn path(&self) -> &Path {
        &self.dir
    }

    fn record(&mut self, name: &str, bytes: &[u8]) -> io::Result<()> {
        fs::write(self.dir.join(name), bytes)?;
        self.files.push(WrittenFile { name: name.to_string(), sha256: hex::encode(Sha256::digest(bytes)) });
        Ok(())
    }

    /// Comma-separated table with a mandatory header row.
    pub fn csv(&mut self, name: &str, header: &[&str], rows: &[Vec<String>]) -> io::Result<()> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(header)?;
        for r in rows {
            w.write_record(r)?;
        }
        let bytes = w.into_inner().map_err(|e| io::Error::other(e.to_string()))?;
        self.record(name, &bytes)
    }

    /// Pretty JSON with the config hash added at the top level.
    pub fn json(&mut self, name: &str, value: &impl Serialize) -> io::Result<()> {
        let mut v = serde_json::to_value(value).map_err(io::Error::from)?;
        if let Some(m) = v.as_object_mut() {
            m.insert("config_hash".into(), json!(self.config_hash));
        }
        let mut bytes = serde_json::to_vec_pretty(&v).map_err(io::Error::from)?;
        bytes.push(b'\n');
        self.record(name, &bytes)
    }

    /// Row-major little-endian `f64` array with a JSON sidecar header.
    pub fn binary(&mut self, name: &str, dims: &[usize], data: &[f64], seed: u64) -> io::Result<()> {
        let expected: usize = dims.iter().product();
        if expected != data.len() {
            return Err(io::Error::new(io::ErrorKind::InvalidInput, format!("dump of {} values does not match dims {dims:?}", data.len())));
        }
        let mut bytes = Vec::with_capacity(8 * data.len());
        for v in data {
            bytes.write_all(&v.to_le_bytes())?;
        }
        self.record(name, &bytes)?;
        let sidecar = json!({
            "file": name,
            "dtype": "f64",
            "byte_order": "little",
            "layout": "row-major",
            "dims": dims,
            "seed": seed,
        });
        self.json(&format!("{name}.json"), &sidecar)
    }

    /// Writes `manifest.json` listing every file of the run.
    pub fn finish(
        mut self,
        subcommand: &str,
        seed: u64,
        workers: usize,
        wall_seconds: f64,
        extra: serde_json::Value,
    ) -> io::Result<PathBuf> {
        let manifest = json!({
            "subcommand": subcommand,
            "seed": seed,
            "workers": workers,
            "wall_seconds": wall_seconds,
            "versions": {
                "roughshe": env!("CARGO_PKG_VERSION"),
                "format": 1,
            },
            "files": self.files,
            "details": extra,
        });
        self.json("manifest.json", &manifest)?;
        Ok(self.dir.join("manifest.json"))
    }
}
