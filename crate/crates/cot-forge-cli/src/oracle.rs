//! Backend assembly: http or mock, optionally wrapped in the disk cache,
//! always wrapped in call counters for the manifest.

use std::fs;

use cot_forge::oracle::{
    Backend, CacheBackend, CountingBackend, HttpBackend, MockBackend, MockTaskSpec, RetryPolicy,
};
use serde::Serialize;

use crate::config::{BackendKind, RunConfig};
use crate::error::CliError;

/// Completion-request counters reported in the manifest. A warm cache shows
/// up as `backend_calls == 0` with every request counted as a hit.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct OracleCounts {
    pub requests: u64,
    pub backend_calls: u64,
    pub cache_hits: u64,
    pub cache_misses: u64,
}

pub enum Oracle {
    Direct(CountingBackend<Box<dyn Backend>>),
    Cached(CacheBackend<Box<dyn Backend>>),
}

impl Oracle {
    pub fn backend(&self) -> &dyn Backend {
        match self {
            Oracle::Direct(counter) => counter,
            Oracle::Cached(cache) => cache,
        }
    }

    pub fn counts(&self) -> OracleCounts {
        match self {
            Oracle::Direct(counter) => OracleCounts {
                requests: counter.calls(),
                backend_calls: counter.calls(),
                cache_hits: 0,
                cache_misses: 0,
            },
            Oracle::Cached(cache) => {
                let stats = cache.stats();
                OracleCounts {
                    requests: stats.hits + stats.misses,
                    backend_calls: stats.misses,
                    cache_hits: stats.hits,
                    cache_misses: stats.misses,
                }
            }
        }
    }
}

pub fn build_oracle(config: &RunConfig) -> Result<Oracle, CliError> {
    let base: Box<dyn Backend> = match config.backend {
        BackendKind::Mock => {
            let path = config.mock_spec_path.as_ref().ok_or_else(|| {
                CliError::config(
                    "CONFIG_INVALID",
                    "mock backend needs mock_spec_path (or --mock-spec)",
                )
            })?;
            let text = fs::read_to_string(path).map_err(|err| {
                CliError::config(
                    "MOCK_SPEC_NOT_FOUND",
                    format!("cannot read mock spec {}: {err}", path.display()),
                )
            })?;
            let spec: MockTaskSpec = serde_json::from_str(&text).map_err(|err| {
                CliError::config(
                    "MOCK_SPEC_INVALID",
                    format!("mock spec {}: {err}", path.display()),
                )
            })?;
            Box::new(MockBackend::new(spec).map_err(|err| {
                CliError::config("MOCK_SPEC_INVALID", err.to_string())
            })?)
        }
        BackendKind::Http => {
            if config.model_id.is_empty() {
                return Err(CliError::config(
                    "CONFIG_INVALID",
                    "http backend needs model_id (or --model-id)",
                ));
            }
            Box::new(HttpBackend::from_env(config.base_url.clone(), RetryPolicy::default())?)
        }
    };

    Ok(match &config.cache_dir {
        Some(dir) => Oracle::Cached(CacheBackend::new(base, dir.clone())),
        None => Oracle::Direct(CountingBackend::new(base)),
    })
}
