//! Output directory bookkeeping: provenance stamps, metrics records and the
//! run.json manifest that covers files which cannot carry a header (CSV).

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Clone, Debug, Serialize)]
pub struct Provenance {
    pub command: String,
    pub seed: Option<u64>,
    /// SHA-256 of the effective configuration serialized as JSON.
    pub config_hash: String,
    pub versions: Value,
}

impl Provenance {
    pub fn new(command: &str, seed: Option<u64>, config: &Value) -> Self {
        let bytes = serde_json::to_vec(config).expect("JSON values always serialize");
        Self {
            command: command.into(),
            seed,
            config_hash: sha256_hex(&bytes),
            versions: json!({
                "equihop": equihop::VERSION,
                "equihop-cli": env!("CARGO_PKG_VERSION"),
            }),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

/// Collects what a command writes, then emits run.json listing every file
/// with its hash next to the provenance and effective configuration.
pub struct RunDir {
    dir: PathBuf,
    provenance: Provenance,
    config: Value,
    inputs: Vec<Value>,
    artifacts: Vec<Value>,
}

impl RunDir {
    pub fn create(dir: &Path, provenance: Provenance, config: Value) -> Result<Self> {
        fs::create_dir_all(dir).with_context(|| format!("creating output directory {}", dir.display()))?;
        Ok(Self { dir: dir.to_path_buf(), provenance, config, inputs: Vec::new(), artifacts: Vec::new() })
    }

    /// Records the hash of an input file so reruns can be checked against it.
    pub fn input(&mut self, role: &str, path: &Path) -> Result<()> {
        let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
        self.inputs.push(json!({ "role": role, "path": path.display().to_string(), "sha256": sha256_hex(&bytes) }));
        Ok(())
    }

    pub fn write(&mut self, name: &str, contents: &[u8]) -> Result<()> {
        let path = self.dir.join(name);
        fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))?;
        self.artifacts.push(json!({ "file": name, "sha256": sha256_hex(contents) }));
        Ok(())
    }

    /// JSON artifact with the provenance embedded under "provenance".
    pub fn write_json(&mut self, name: &str, body: Value) -> Result<()> {
        let mut body = body;
        if let Value::Object(map) = &mut body {
            map.insert("provenance".into(), serde_json::to_value(&self.provenance)?);
        }
        let mut text = serde_json::to_vec_pretty(&body)?;
        text.push(b'\n');
        self.write(name, &text)
    }

    /// A table as `<stem>.csv` or `<stem>.json` depending on the format.
    pub fn write_table<T: Serialize>(&mut self, stem: &str, format: Format, csv: String, rows: &T) -> Result<()> {
        match format {
            Format::Csv => self.write(&format!("{stem}.csv"), csv.as_bytes()),
            Format::Json => self.write_json(&format!("{stem}.json"), json!({ "rows": rows })),
        }
    }

    pub fn write_metrics(&mut self, metrics: &Metrics) -> Result<()> {
        self.write_json("metrics.json", json!({ "metrics": metrics.records }))
    }

    pub fn finish(self) -> Result<()> {
        let manifest = json!({
            "provenance": self.provenance,
            "config": self.config,
            "inputs": self.inputs,
            "artifacts": self.artifacts,
        });
        let mut text = serde_json::to_vec_pretty(&manifest)?;
        text.push(b'\n');
        let path = self.dir.join("run.json");
        fs::write(&path, text).with_context(|| format!("writing {}", path.display()))
    }
}

/// Named scalar results, emitted as `{name, value}` records.
#[derive(Default)]
pub struct Metrics {
    records: Vec<Value>,
}

impl Metrics {
    pub fn push(&mut self, name: &str, value: impl Serialize) {
        self.records.push(json!({ "name": name, "value": value }));
    }
}
