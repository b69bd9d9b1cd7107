//! Artifact envelope: every file the CLI writes carries the tool version
//! and a hash of the effective config, so results stay traceable to the
//! exact invocation. Nothing time- or host-dependent goes in, which keeps
//! reruns byte-identical.

use std::path::Path;

use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::CliError;

pub const TOOL_NAME: &str = "sid";
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

/// sha256 over the compact serialization of the effective config.
pub fn config_hash(config: &Value) -> String {
    let bytes = serde_json::to_vec(config).expect("config serializes");
    format!("sha256:{:x}", Sha256::digest(&bytes))
}

#[derive(Serialize)]
struct Envelope<'a, P: Serialize> {
    tool: &'static str,
    tool_version: &'static str,
    kind: &'a str,
    config_hash: String,
    config: &'a Value,
    payload: &'a P,
}

/// Serialize a payload inside the provenance envelope.
pub fn artifact_bytes<P: Serialize>(
    kind: &str,
    config: &Value,
    payload: &P,
) -> Result<Vec<u8>, CliError> {
    let envelope = Envelope {
        tool: TOOL_NAME,
        tool_version: TOOL_VERSION,
        kind,
        config_hash: config_hash(config),
        config,
        payload,
    };
    let mut bytes = serde_json::to_vec_pretty(&envelope)
        .map_err(|e| CliError::internal(format!("serializing {kind} artifact: {e}")))?;
    bytes.push(b'\n');
    Ok(bytes)
}

pub fn write_artifact<P: Serialize>(
    path: &Path,
    kind: &str,
    config: &Value,
    payload: &P,
) -> Result<(), CliError> {
    let bytes = artifact_bytes(kind, config, payload)?;
    std::fs::write(path, bytes)
        .map_err(|e| CliError::config(format!("writing {}: {e}", path.display())))?;
    Ok(())
}

/// CSV export with the provenance carried in leading comment lines.
pub fn write_csv(path: &Path, config: &Value, body: &str) -> Result<(), CliError> {
    let text = format!(
        "# {TOOL_NAME} {TOOL_VERSION}\n# config {}\n{body}",
        config_hash(config)
    );
    std::fs::write(path, text)
        .map_err(|e| CliError::config(format!("writing {}: {e}", path.display())))?;
    Ok(())
}
