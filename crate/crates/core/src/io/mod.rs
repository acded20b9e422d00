//! File formats, configuration and run manifests.

pub mod config;
pub mod tables;

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub use config::KeyValues;
pub use tables::{epidemic_csv, network_csv, observed_bundle, parse_epidemic_csv, parse_network_csv};

pub const FORMAT_VERSION: u32 = 1;

/// Writes through a temporary file in the same directory, then renames.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let name = path
        .file_name()
        .ok_or_else(|| Error::Config(format!("{} is not a file path", path.display())))?;
    let tmp: PathBuf = dir.join(format!(".{}.tmp{}", name.to_string_lossy(), std::process::id()));
    let result = (|| {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    })();
    if result.is_err() {
        let _ = fs::remove_file(&tmp);
    }
    Ok(result?)
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Debug, Serialize, Deserialize)]
struct JsonlHeader {
    format_version: u32,
    kind: String,
}

/// JSON-lines: a header line naming the record kind, then one record per line.
pub fn to_jsonl<T: Serialize>(kind: &str, records: &[T]) -> Result<String> {
    let mut out = serde_json::to_string(&JsonlHeader { format_version: FORMAT_VERSION, kind: kind.into() })?;
    out.push('\n');
    for r in records {
        out.push_str(&serde_json::to_string(r)?);
        out.push('\n');
    }
    Ok(out)
}

pub fn from_jsonl<T: DeserializeOwned>(kind: &str, text: &str) -> Result<Vec<T>> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, first) = lines.next().ok_or_else(|| Error::Parse { line: 1, message: "empty file".into() })?;
    let header: JsonlHeader =
        serde_json::from_str(first).map_err(|e| Error::Parse { line: 1, message: format!("bad header: {e}") })?;
    if header.format_version != FORMAT_VERSION {
        return Err(Error::Parse { line: 1, message: format!("unsupported format_version {}", header.format_version) });
    }
    if header.kind != kind {
        return Err(Error::Parse { line: 1, message: format!("expected {kind:?} records, found {:?}", header.kind) });
    }
    lines
        .map(|(k, l)| serde_json::from_str(l).map_err(|e| Error::Parse { line: k + 1, message: e.to_string() }))
        .collect()
}

/// Pretty JSON with a `format_version` field alongside the payload.
pub fn to_versioned_json<T: Serialize>(value: &T) -> Result<String> {
    #[derive(Serialize)]
    struct Versioned<'a, T> {
        format_version: u32,
        #[serde(flatten)]
        value: &'a T,
    }
    let mut s = serde_json::to_string_pretty(&Versioned { format_version: FORMAT_VERSION, value })?;
    s.push('\n');
    Ok(s)
}

/// Input file recorded in a manifest.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputFile {
    pub path: String,
    pub sha256: String,
}

/// Everything needed to rerun a command. Wall-clock time is kept in a
/// separate file so reruns reproduce the manifest byte for byte.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u32,
    pub tool_version: String,
    pub command: String,
    pub seed: u64,
    pub config_hash: String,
    pub config: Vec<(String, String)>,
    pub inputs: Vec<InputFile>,
    pub outputs: Vec<String>,
}

impl Manifest {
    pub fn new(command: &str, seed: u64, config: &KeyValues) -> Self {
        Manifest {
            format_version: FORMAT_VERSION,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            seed,
            config_hash: sha256_hex(config.canonical().as_bytes()),
            config: config.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect(),
            inputs: Vec::new(),
            outputs: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Timing {
    pub started_unix_ms: u128,
    pub wall_clock_seconds: f64,
}
