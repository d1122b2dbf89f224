//! Run manifests: machine-readable per-file status written next to each
//! batch command's outputs. Timestamps are omitted under --reproducible
//! so identical runs produce byte-identical manifests.

use std::path::Path;

use anyhow::{Context, Result};
use serde::Serialize;

#[derive(Debug, Clone, Serialize)]
pub struct FileEntry {
    pub input: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mask: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub method: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output: Option<String>,
    pub status: Status,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Ok,
    Failed,
}

#[derive(Debug, Serialize)]
pub struct RunManifest<P: Serialize> {
    pub command: &'static str,
    pub params: P,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub generated_at_unix: Option<u64>,
    pub files: Vec<FileEntry>,
}

impl<P: Serialize> RunManifest<P> {
    pub fn new(command: &'static str, params: P, reproducible: bool) -> Self {
        let generated_at_unix = if reproducible {
            None
        } else {
            std::time::SystemTime::now()
                .duration_since(std::time::UNIX_EPOCH)
                .ok()
                .map(|d| d.as_secs())
        };
        RunManifest {
            command,
            params,
            generated_at_unix,
            files: Vec::new(),
        }
    }

    pub fn failures(&self) -> usize {
        self.files
            .iter()
            .filter(|f| f.status == Status::Failed)
            .count()
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut json = serde_json::to_string_pretty(self)?;
        json.push('\n');
        std::fs::write(path, json)
            .with_context(|| format!("writing manifest {}", path.display()))?;
        Ok(())
    }

    /// Batch exit code: 0 when clean, 2 when some files failed.
    pub fn exit_code(&self) -> i32 {
        if self.failures() == 0 {
            0
        } else {
            2
        }
    }
}
