//! Small shared helpers: seed derivation and JSON-lines I/O.

use crate::error::SwrmError;
use sha2::{Digest, Sha256};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

/// Derive a component seed from the root seed so that every consumer of
/// randomness gets an independent, reproducible stream.
pub fn derive_seed(root: u64, component: &str) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(root.to_le_bytes());
    hasher.update(component.as_bytes());
    let digest = hasher.finalize();
    u64::from_le_bytes(digest[..8].try_into().unwrap())
}

/// Hex SHA-256 of a string, used for config fingerprints.
pub fn sha256_hex(data: &str) -> String {
    let mut hasher = Sha256::new();
    hasher.update(data.as_bytes());
    let digest = hasher.finalize();
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

/// Read a JSON-lines file, passing each non-empty line with its 1-based
/// line number to `parse`.
pub fn read_jsonl<T>(
    path: &Path,
    mut parse: impl FnMut(usize, &str) -> Result<T, SwrmError>,
) -> Result<Vec<T>, SwrmError> {
    let file = File::open(path).map_err(|e| SwrmError::io(path, e))?;
    let reader = BufReader::new(file);
    let mut out = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| SwrmError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(parse(idx + 1, &line)?);
    }
    Ok(out)
}

/// Write serializable records as JSON lines.
pub fn write_jsonl<T: serde::Serialize>(path: &Path, records: &[T]) -> Result<(), SwrmError> {
    let file = File::create(path).map_err(|e| SwrmError::io(path, e))?;
    let mut writer = BufWriter::new(file);
    for record in records {
        let line = serde_json::to_string(record)
            .map_err(|e| SwrmError::Config(format!("serialization failed: {e}")))?;
        writeln!(writer, "{line}").map_err(|e| SwrmError::io(path, e))?;
    }
    writer
        .flush()
        .map_err(|e| SwrmError::io(path, e))
}
