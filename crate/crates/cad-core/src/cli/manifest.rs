//! Append-only run manifest. One block per command invocation: a header
//! line with command name, seed, code version and timestamp, then one line
//! per output file with its SHA-256 digest, then a blank line.
//!
//! Artifact digests are deterministic under a fixed seed; the timestamp is
//! the only non-reproducible field and lives on the header line only.

use crate::error::{CadError, Result};
use sha2::{Digest, Sha256};
use std::fmt::Write as _;
use std::fs::OpenOptions;
use std::io::Write as _;
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

pub const MANIFEST_FILE: &str = "manifest.txt";

pub fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    let mut out = String::with_capacity(64);
    for b in digest {
        write!(out, "{b:02x}").unwrap();
    }
    out
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| CadError::io(path, e))?;
    Ok(sha256_hex(&bytes))
}

/// Append one command block. `files` are paths relative to `run_dir`;
/// every listed file must exist. `extra` lands on the header line as
/// `key=value` pairs (e.g. recorded training-set sizes).
pub fn append_entry(
    run_dir: &Path,
    command: &str,
    seed: u64,
    extra: &[(&str, String)],
    files: &[String],
) -> Result<()> {
    let mut block = String::new();
    let time = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    write!(
        block,
        "[{command}] seed={seed} version={} time={time}",
        env!("CARGO_PKG_VERSION")
    )
    .unwrap();
    for (k, v) in extra {
        write!(block, " {k}={v}").unwrap();
    }
    block.push('\n');
    for rel in files {
        let digest = sha256_file(&run_dir.join(rel))?;
        writeln!(block, "{rel} sha256={digest}").unwrap();
    }
    block.push('\n');

    let path = run_dir.join(MANIFEST_FILE);
    let mut f = OpenOptions::new()
        .create(true)
        .append(true)
        .open(&path)
        .map_err(|e| CadError::io(&path, e))?;
    f.write_all(block.as_bytes()).map_err(|e| CadError::io(&path, e))?;
    Ok(())
}

/// Digest recorded in the manifest for `rel`, taking the latest entry.
pub fn recorded_digest(run_dir: &Path, rel: &str) -> Result<Option<String>> {
    let path = run_dir.join(MANIFEST_FILE);
    if !path.exists() {
        return Ok(None);
    }
    let text = std::fs::read_to_string(&path).map_err(|e| CadError::io(&path, e))?;
    let mut found = None;
    for line in text.lines() {
        if let Some(rest) = line.strip_prefix(rel) {
            if let Some(d) = rest.trim().strip_prefix("sha256=") {
                found = Some(d.to_string());
            }
        }
    }
    Ok(found)
}
