//! Content-addressed disk cache for completion responses.
//!
//! Records live at `<dir>/<first-2-hex>/<hash>.json`, where the hash covers
//! the request's canonical JSON plus a call ordinal. Greedy requests
//! (temperature 0) always use ordinal 0, so repeats hit the same record;
//! stochastic requests bump a per-request in-process counter, so each call in
//! a run gets its own slot and a later run replays the same sequence.
//!
//! Every response served through the cache — fresh or replayed — is tagged
//! [`BackendTag::Cache`], which keeps a cold run and a warm run byte-identical.

use std::collections::HashMap;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Mutex;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::OracleError;
use crate::oracle::{Backend, BackendTag, CompletionRequest, CompletionResponse};

/// One cached response together with the request that produced it.
#[derive(Debug, Serialize, Deserialize)]
struct CacheRecord {
    request: CompletionRequest,
    response: CompletionResponse,
    /// Seconds since the Unix epoch at write time.
    created_at: u64,
}

/// Hit/miss counters for one cache instance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct CacheStats {
    pub hits: u64,
    pub misses: u64,
}

/// Wraps a backend with the disk cache.
pub struct CacheBackend<B> {
    inner: B,
    dir: PathBuf,
    ordinals: Mutex<HashMap<String, u64>>,
    tmp_counter: AtomicU64,
    hits: AtomicU64,
    misses: AtomicU64,
}

impl<B: Backend> CacheBackend<B> {
    pub fn new(inner: B, dir: impl Into<PathBuf>) -> Self {
        CacheBackend {
            inner,
            dir: dir.into(),
            ordinals: Mutex::new(HashMap::new()),
            tmp_counter: AtomicU64::new(0),
            hits: AtomicU64::new(0),
            misses: AtomicU64::new(0),
        }
    }

    pub fn stats(&self) -> CacheStats {
        CacheStats {
            hits: self.hits.load(Ordering::Relaxed),
            misses: self.misses.load(Ordering::Relaxed),
        }
    }

    fn record_path(&self, request: &CompletionRequest) -> PathBuf {
        let canonical = request.canonical_json();
        let ordinal = if request.temperature > 0.0 {
            let mut ordinals = self.ordinals.lock().expect("ordinal map poisoned");
            let slot = ordinals.entry(canonical.clone()).or_insert(0);
            let current = *slot;
            *slot += 1;
            current
        } else {
            0
        };
        let hash = hex::encode(Sha256::digest(format!("{canonical}\n#{ordinal}").as_bytes()));
        self.dir.join(&hash[..2]).join(format!("{hash}.json"))
    }

    fn read_record(path: &Path) -> Result<Option<CacheRecord>, OracleError> {
        let bytes = match fs::read(path) {
            Ok(bytes) => bytes,
            Err(err) if err.kind() == io::ErrorKind::NotFound => return Ok(None),
            Err(err) => return Err(OracleError::CacheIo { path: path.to_path_buf(), source: err }),
        };
        let record = serde_json::from_slice(&bytes).map_err(|err| OracleError::CacheIo {
            path: path.to_path_buf(),
            source: io::Error::new(io::ErrorKind::InvalidData, err),
        })?;
        Ok(Some(record))
    }

    fn write_record(&self, path: &Path, record: &CacheRecord) -> Result<(), OracleError> {
        let io_err = |source| OracleError::CacheIo { path: path.to_path_buf(), source };
        let parent = path.parent().expect("record path has a shard directory");
        fs::create_dir_all(parent).map_err(io_err)?;

        let json = serde_json::to_vec_pretty(record).expect("record serializes");
        let tmp = parent.join(format!(
            ".{}.{}.tmp",
            std::process::id(),
            self.tmp_counter.fetch_add(1, Ordering::Relaxed)
        ));
        fs::write(&tmp, json).map_err(io_err)?;
        fs::rename(&tmp, path).map_err(io_err)
    }
}

impl<B: Backend> Backend for CacheBackend<B> {
    fn complete(&self, request: &CompletionRequest) -> Result<CompletionResponse, OracleError> {
        let path = self.record_path(request);

        if let Some(record) = Self::read_record(&path)? {
            self.hits.fetch_add(1, Ordering::Relaxed);
            let mut response = record.response;
            response.backend_tag = BackendTag::Cache;
            return Ok(response);
        }

        let fresh = self.inner.complete(request)?;
        self.misses.fetch_add(1, Ordering::Relaxed);
        let created_at = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        self.write_record(
            &path,
            &CacheRecord { request: request.clone(), response: fresh.clone(), created_at },
        )?;

        let mut response = fresh;
        response.backend_tag = BackendTag::Cache;
        Ok(response)
    }
}
