//! Run artifacts: manifest-tracked file emission and the summary
//! document every command writes.

use crate::{Error, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

fn io_context(e: std::io::Error, what: &str, path: &Path) -> Error {
    Error::Io(std::io::Error::new(
        e.kind(),
        format!("{what} {}: {e}", path.display()),
    ))
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(bytes);
    let digest = h.finalize();
    let mut out = String::with_capacity(64);
    for b in digest {
        out.push_str(&format!("{b:02x}"));
    }
    out
}

/// Collects emitted files under one output directory and records a
/// content hash per file for the summary manifest.
pub struct ArtifactWriter {
    out_dir: PathBuf,
    manifest: BTreeMap<String, String>,
}

impl ArtifactWriter {
    pub fn create(out_dir: &Path) -> Result<ArtifactWriter> {
        std::fs::create_dir_all(out_dir)
            .map_err(|e| io_context(e, "cannot create", out_dir))?;
        Ok(ArtifactWriter {
            out_dir: out_dir.to_path_buf(),
            manifest: BTreeMap::new(),
        })
    }

    pub fn out_dir(&self) -> &Path {
        &self.out_dir
    }

    pub fn write_bytes(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        let path = self.out_dir.join(name);
        std::fs::write(&path, bytes)
            .map_err(|e| io_context(e, "cannot write", &path))?;
        self.manifest.insert(name.to_string(), sha256_hex(bytes));
        Ok(())
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.write_bytes(name, text.as_bytes())
    }

    /// Writes the summary last so the manifest covers every other
    /// artifact. The summary itself is not listed (it cannot contain
    /// its own hash).
    pub fn finish(self, mut summary: RunSummary) -> Result<()> {
        summary.manifest = self.manifest.clone();
        let path = self.out_dir.join("summary.json");
        let mut text = serde_json::to_string_pretty(&summary)?;
        text.push('\n');
        std::fs::write(&path, text)
            .map_err(|e| io_context(e, "cannot write", &path))?;
        Ok(())
    }
}

#[derive(Serialize)]
pub struct RunSummary {
    pub command: String,
    pub version: String,
    pub wall_time_secs: f64,
    /// Config echo with all defaults resolved.
    pub config: serde_json::Value,
    /// Command-specific results (final metrics, bound report, check
    /// outcomes, sweep tallies).
    pub outputs: serde_json::Value,
    pub manifest: BTreeMap<String, String>,
}

impl RunSummary {
    pub fn new(command: &str, config: serde_json::Value) -> RunSummary {
        RunSummary {
            command: command.to_string(),
            version: format!(
                "marginlab {} ({})",
                env!("CARGO_PKG_VERSION"),
                env!("MARGINLAB_GIT_HASH")
            ),
            wall_time_secs: 0.0,
            config,
            outputs: serde_json::Value::Null,
            manifest: BTreeMap::new(),
        }
    }
}

/// Formats one CSV cell: shortest-round-trip floats, bare integers and
/// strings without quoting (all our fields are quote-free).
pub fn csv_cell(v: &serde_json::Value) -> String {
    match v {
        serde_json::Value::String(s) => s.clone(),
        serde_json::Value::Number(n) => {
            if let Some(f) = n.as_f64() {
                if n.is_f64() {
                    format!("{f}")
                } else {
                    n.to_string()
                }
            } else {
                n.to_string()
            }
        }
        serde_json::Value::Bool(b) => b.to_string(),
        serde_json::Value::Null => String::new(),
        other => other.to_string(),
    }
}
