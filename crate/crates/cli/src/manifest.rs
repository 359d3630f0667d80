use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::args::Command;

pub const CSV_PREFIX: &str = "# manifest=";

/// Everything needed to reproduce an output file. Output paths and thread
/// counts are deliberately absent so that reruns hash identically.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub command: Command,
    /// sha256 of every input file, keyed by path as given.
    #[serde(default)]
    pub inputs: BTreeMap<String, String>,
}

impl RunManifest {
    pub fn new(command: &Command) -> Result<Self> {
        let mut inputs = BTreeMap::new();
        for p in command.input_files() {
            let bytes = fs::read(p).with_context(|| format!("reading input file {}", p.display()))?;
            inputs.insert(p.display().to_string(), sha256_hex(&bytes));
        }
        Ok(Self { tool: format!("pulsekit {}", env!("CARGO_PKG_VERSION")), command: command.clone(), inputs })
    }

    /// Fails if any recorded input file has changed since the run.
    pub fn check_inputs(&self) -> Result<()> {
        for (path, hash) in &self.inputs {
            let bytes = fs::read(path).with_context(|| format!("reading input file {path}"))?;
            if sha256_hex(&bytes) != *hash {
                bail!("input {path} differs from the recorded hash");
            }
        }
        Ok(())
    }

    /// Recovers the manifest from a JSON output or the header of a CSV output.
    pub fn extract(text: &str) -> Result<Self> {
        if let Some(line) = text.lines().find_map(|l| l.strip_prefix(CSV_PREFIX)) {
            return Ok(serde_json::from_str(line)?);
        }
        let v: serde_json::Value = serde_json::from_str(text).context("output is neither CSV nor JSON")?;
        let m = v.get("manifest").context("no manifest in output")?;
        Ok(serde_json::from_value(m.clone())?)
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Wraps a JSON payload together with its manifest.
pub fn json_document<T: Serialize>(manifest: &RunManifest, result: &T) -> Result<String> {
    #[derive(Serialize)]
    struct Doc<'a, T> {
        manifest: &'a RunManifest,
        result: &'a T,
    }
    let mut s = serde_json::to_string_pretty(&Doc { manifest, result })?;
    s.push('\n');
    Ok(s)
}

pub fn csv_document(manifest: &RunManifest, csv: &str) -> Result<String> {
    Ok(format!("{CSV_PREFIX}{}\n{csv}", serde_json::to_string(manifest)?))
}

pub fn write_output(path: &Path, text: &str) -> Result<String> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))?;
    let hash = sha256_hex(text.as_bytes());
    println!("wrote {} sha256={hash}", path.display());
    Ok(hash)
}
