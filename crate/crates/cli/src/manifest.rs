use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

#[derive(Debug, Serialize)]
struct Manifest<'a> {
    command: &'a str,
    argv: Vec<String>,
    seed: u64,
    config_sha256: String,
    versions: Versions,
    config: &'a Value,
    outputs: &'a [String],
}

#[derive(Debug, Serialize)]
struct Versions {
    distmarch: &'static str,
    distmarch_cli: &'static str,
    config_schema: u64,
}

/// Hex SHA-256 of the compact JSON form (keys are sorted).
pub fn config_hash(config: &Value) -> String {
    let bytes = serde_json::to_vec(config).expect("value serializes");
    let digest = Sha256::digest(&bytes);
    let mut hex = String::with_capacity(64);
    for b in digest.iter() {
        write!(hex, "{b:02x}").expect("string write");
    }
    hex
}

/// Write `manifest_<command>.json` into `out`.
pub fn write_manifest(out: &Path, command: &str, seed: u64, config: &Value, outputs: &[String]) -> CliResult<PathBuf> {
    let manifest = Manifest {
        command,
        argv: std::env::args().collect(),
        seed,
        config_sha256: config_hash(config),
        versions: Versions {
            distmarch: distmarch::VERSION,
            distmarch_cli: env!("CARGO_PKG_VERSION"),
            config_schema: crate::config::SCHEMA_VERSION,
        },
        config,
        outputs,
    };
    let path = out.join(format!("manifest_{command}.json"));
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    std::fs::write(&path, text + "\n").map_err(|e| CliError::io(&path, e))?;
    Ok(path)
}

pub fn ensure_dir(out: &Path) -> CliResult<()> {
    std::fs::create_dir_all(out).map_err(|e| CliError::io(out, e))
}

/// Write `contents` to `out/name` and return the name for the manifest.
pub fn write_output(out: &Path, name: &str, contents: &[u8]) -> CliResult<String> {
    let path = out.join(name);
    std::fs::write(&path, contents).map_err(|e| CliError::io(&path, e))?;
    Ok(name.to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hash_ignores_key_order() {
        let a: Value = serde_json::from_str(r#"{"a": 1, "b": [1, 2]}"#).unwrap();
        let b: Value = serde_json::from_str(r#"{"b": [1, 2], "a": 1}"#).unwrap();
        assert_eq!(config_hash(&a), config_hash(&b));
        assert_eq!(config_hash(&a).len(), 64);
        let c: Value = serde_json::from_str(r#"{"a": 2, "b": [1, 2]}"#).unwrap();
        assert_ne!(config_hash(&a), config_hash(&c));
    }
}
