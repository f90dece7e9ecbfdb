//! Run manifests: one JSON file per command run, recording the resolved
//! configuration, a content hash for every artifact written, wall-clock
//! timing, and oracle call counters.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::RunConfig;
use crate::error::CliError;
use crate::oracle::OracleCounts;

#[derive(Debug, Clone, Serialize)]
pub struct ArtifactEntry {
    pub path: PathBuf,
    pub sha256: String,
}

#[derive(Serialize)]
pub struct RunManifest<'a> {
    pub command: &'static str,
    /// Seconds since the Unix epoch when the manifest was written.
    pub created_at: u64,
    pub duration_seconds: f64,
    pub config: &'a RunConfig,
    pub artifacts: BTreeMap<&'static str, ArtifactEntry>,
    pub oracle: OracleCounts,
    /// Question ids whose completion requests failed, with the error text.
    pub failures: BTreeMap<String, String>,
}

impl<'a> RunManifest<'a> {
    pub fn new(command: &'static str, config: &'a RunConfig) -> Self {
        RunManifest {
            command,
            created_at: 0,
            duration_seconds: 0.0,
            config,
            artifacts: BTreeMap::new(),
            oracle: OracleCounts { requests: 0, backend_calls: 0, cache_hits: 0, cache_misses: 0 },
            failures: BTreeMap::new(),
        }
    }

    /// Hashes an already-written artifact file and records it.
    pub fn add_artifact(&mut self, name: &'static str, path: &Path) -> Result<(), CliError> {
        let bytes = fs::read(path).map_err(|err| {
            CliError::internal(format!("cannot hash artifact {}: {err}", path.display()))
        })?;
        self.artifacts.insert(
            name,
            ArtifactEntry {
                path: path.to_path_buf(),
                sha256: hex::encode(Sha256::digest(&bytes)),
            },
        );
        Ok(())
    }

    /// Writes the manifest next to the other outputs as
    /// `<out_dir>/<command>-manifest.json`.
    pub fn write(mut self, elapsed: Duration, counts: OracleCounts) -> Result<PathBuf, CliError> {
        self.created_at = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|since| since.as_secs())
            .unwrap_or(0);
        self.duration_seconds = elapsed.as_secs_f64();
        self.oracle = counts;

        let path = self.config.out_dir.join(format!("{}-manifest.json", self.command));
        let json = serde_json::to_string_pretty(&self).expect("manifest serializes");
        fs::write(&path, json + "\n").map_err(|err| {
            CliError::internal(format!("cannot write manifest {}: {err}", path.display()))
        })?;
        Ok(path)
    }
}
