//! Data emission and reproducibility records: CSV files with round-trip
//! float formatting, SHA-256 content digests, and a JSON manifest tying each
//! output to the command and seed that produced it.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const ARTIFACT_VERSION: &str = "1";

/// An in-memory CSV table: fixed header, preformatted rows.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Csv {
    header: &'static str,
    rows: Vec<String>,
}

impl Csv {
    pub fn new(header: &'static str) -> Self {
        Self {
            header,
            rows: Vec::new(),
        }
    }

    pub fn header(&self) -> &'static str {
        self.header
    }

    pub fn rows(&self) -> &[String] {
        &self.rows
    }

    /// Append one row from already-formatted fields.
    pub fn push(&mut self, fields: &[String]) {
        debug_assert_eq!(fields.len(), self.header.split(',').count());
        self.rows.push(fields.join(","));
    }

    /// Full file content, one trailing newline.
    pub fn content(&self) -> String {
        let mut s = String::with_capacity(self.header.len() + 1 + 16 * self.rows.len());
        s.push_str(self.header);
        s.push('\n');
        for row in &self.rows {
            s.push_str(row);
            s.push('\n');
        }
        s
    }
}

/// Shortest decimal that round-trips to the same f64.
pub fn fmt_f64(x: f64) -> String {
    format!("{x}")
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    let digest = hasher.finalize();
    let mut out = String::with_capacity(64);
    for b in digest {
        out.push_str(&format!("{b:02x}"));
    }
    out
}

pub fn sha256_file(path: &Path) -> Result<(String, u64)> {
    let bytes = fs::read(path)?;
    Ok((sha256_hex(&bytes), bytes.len() as u64))
}

/// Write the table and return its content digest.
pub fn emit_csv(csv: &Csv, path: &Path) -> Result<String> {
    let content = csv.content();
    let mut file = fs::File::create(path)?;
    file.write_all(content.as_bytes())?;
    file.flush()?;
    Ok(sha256_hex(content.as_bytes()))
}

/// Digest record for one output file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutputRecord {
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

/// Reproducibility record written beside every data file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub artifact_version: String,
    pub command_line: Vec<String>,
    pub subcommand: String,
    pub resolved_config: serde_json::Value,
    pub master_seed: u64,
    pub duration_seconds: f64,
    pub outputs: Vec<OutputRecord>,
    #[serde(default, skip_serializing_if = "serde_json::Map::is_empty")]
    pub extra: serde_json::Map<String, serde_json::Value>,
}

impl RunManifest {
    pub fn write(&self, path: &Path) -> Result<()> {
        let mut content = serde_json::to_string_pretty(self)?;
        content.push('\n');
        fs::write(path, content)?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let content = fs::read_to_string(path)?;
        Ok(serde_json::from_str(&content)?)
    }

    /// Resolve a recorded output path: relative paths count from the
    /// manifest's directory.
    pub fn resolve_output(&self, manifest_path: &Path, record: &OutputRecord) -> PathBuf {
        let p = Path::new(&record.path);
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            manifest_path
                .parent()
                .unwrap_or_else(|| Path::new("."))
                .join(p)
        }
    }

    /// Recompute every output digest; first mismatch or missing file is the
    /// error.
    pub fn check_digests(&self, manifest_path: &Path) -> Result<()> {
        for record in &self.outputs {
            let path = self.resolve_output(manifest_path, record);
            let (digest, bytes) = sha256_file(&path)?;
            if digest != record.sha256 || bytes != record.bytes {
                return Err(Error::DigestMismatch {
                    path: path.display().to_string(),
                    expected: record.sha256.clone(),
                    found: digest,
                });
            }
        }
        Ok(())
    }
}
