//! Completion oracle: request/response types, the [`Backend`] trait, bounded
//! parallel fan-out, and token-level answer losses.
//!
//! Requests hash to a stable key (canonical JSON, sorted keys, shortest-round-
//! trip floats) so identical requests are byte-identical across processes;
//! the disk cache and the run manifests both key on that hash.

mod cache;
mod http;
mod mock;

pub use cache::{CacheBackend, CacheStats};
pub use http::{HttpBackend, RetryPolicy, API_KEY_ENV, BASE_URL_ENV};
pub use mock::{CannedChain, MockBackend, MockTaskSpec};

use std::sync::atomic::{AtomicU64, AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::OracleError;

/// Hard floor on any per-token probability used in a loss: a gold token the
/// model never surfaced still contributes a finite `-ln(1e-6)`.
pub const TOKEN_PROB_FLOOR: f64 = 1e-6;

/// One completion request. Field invariants are checked by [`Backend`]
/// implementations before any work happens.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionRequest {
    pub model_id: String,
    pub prompt: String,
    /// Completion budget in tokens; must be at least 1.
    pub max_tokens: u32,
    /// Sampling temperature in `[0, 2]`; `0.0` means greedy decoding.
    pub temperature: f64,
    /// Number of completions to draw; must be at least 1.
    pub n_samples: u32,
    /// Stop sequences, applied verbatim by the backend.
    pub stop: Vec<String>,
    /// How many alternatives to report per emitted token, `0..=5`.
    pub logprobs_k: u8,
}

impl Default for CompletionRequest {
    fn default() -> Self {
        CompletionRequest {
            model_id: String::new(),
            prompt: String::new(),
            max_tokens: 256,
            temperature: 0.0,
            n_samples: 1,
            stop: Vec::new(),
            logprobs_k: 0,
        }
    }
}

impl CompletionRequest {
    /// Checks the field invariants, returning the first violation.
    pub fn validate(&self) -> Result<(), OracleError> {
        if self.max_tokens == 0 {
            return Err(OracleError::InvalidRequest("max_tokens must be >= 1".into()));
        }
        if !(0.0..=2.0).contains(&self.temperature) {
            return Err(OracleError::InvalidRequest(format!(
                "temperature {} outside [0, 2]",
                self.temperature
            )));
        }
        if self.n_samples == 0 {
            return Err(OracleError::InvalidRequest("n_samples must be >= 1".into()));
        }
        if self.logprobs_k > 5 {
            return Err(OracleError::InvalidRequest(format!(
                "logprobs_k {} exceeds 5",
                self.logprobs_k
            )));
        }
        Ok(())
    }

    /// Canonical JSON for hashing: object keys sorted, floats in shortest
    /// round-trip form, no insignificant whitespace.
    pub fn canonical_json(&self) -> String {
        let value = serde_json::to_value(self).expect("request serializes");
        serde_json::to_string(&value).expect("value serializes")
    }

    /// SHA-256 of [`canonical_json`](Self::canonical_json), lowercase hex.
    pub fn request_hash(&self) -> String {
        hex::encode(Sha256::digest(self.canonical_json().as_bytes()))
    }
}

/// Which implementation produced a response.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendTag {
    Http,
    Mock,
    Cache,
}

/// One alternative token at a position, with its log probability.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenLogprob {
    pub token: String,
    pub logprob: f64,
}

/// One emitted token with its log probability and the top alternatives at
/// that position, sorted by descending log probability.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChoiceToken {
    pub token: String,
    pub logprob: f64,
    pub top_alternatives: Vec<TokenLogprob>,
}

/// One sampled completion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionChoice {
    pub text: String,
    /// Per-token detail; empty when the request asked for no logprobs and the
    /// backend reports none.
    pub tokens: Vec<ChoiceToken>,
}

/// A backend's answer to one request: exactly `n_samples` choices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionResponse {
    pub choices: Vec<CompletionChoice>,
    pub backend_tag: BackendTag,
}

/// A completion oracle. Implementations must be safe to share across the
/// fan-out threads used by [`complete_many`].
pub trait Backend: Send + Sync {
    /// Completes one request. On success the response holds exactly
    /// `request.n_samples` choices.
    fn complete(&self, request: &CompletionRequest) -> Result<CompletionResponse, OracleError>;
}

impl<B: Backend + ?Sized> Backend for &B {
    fn complete(&self, request: &CompletionRequest) -> Result<CompletionResponse, OracleError> {
        (**self).complete(request)
    }
}

impl<B: Backend + ?Sized> Backend for Box<B> {
    fn complete(&self, request: &CompletionRequest) -> Result<CompletionResponse, OracleError> {
        (**self).complete(request)
    }
}

/// Completes a batch of requests with at most `parallelism` worker threads,
/// returning results in input order regardless of completion order.
pub fn complete_many(
    backend: &dyn Backend,
    requests: &[CompletionRequest],
    parallelism: usize,
) -> Vec<Result<CompletionResponse, OracleError>> {
    let workers = parallelism.max(1).min(requests.len());
    if workers <= 1 {
        return requests.iter().map(|r| backend.complete(r)).collect();
    }

    let next = AtomicUsize::new(0);
    let slots: Vec<Mutex<Option<Result<CompletionResponse, OracleError>>>> =
        requests.iter().map(|_| Mutex::new(None)).collect();

    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= requests.len() {
                    break;
                }
                let result = backend.complete(&requests[i]);
                *slots[i].lock().expect("result slot poisoned") = Some(result);
            });
        }
    });

    slots
        .into_iter()
        .map(|slot| {
            slot.into_inner()
                .expect("result slot poisoned")
                .expect("worker filled every slot")
        })
        .collect()
}

/// Wraps any backend and counts how many requests reach it.
pub struct CountingBackend<B> {
    inner: B,
    calls: AtomicU64,
}

impl<B: Backend> CountingBackend<B> {
    pub fn new(inner: B) -> Self {
        CountingBackend { inner, calls: AtomicU64::new(0) }
    }

    pub fn calls(&self) -> u64 {
        self.calls.load(Ordering::Relaxed)
    }

    pub fn into_inner(self) -> B {
        self.inner
    }
}

impl<B: Backend> Backend for CountingBackend<B> {
    fn complete(&self, request: &CompletionRequest) -> Result<CompletionResponse, OracleError> {
        self.calls.fetch_add(1, Ordering::Relaxed);
        self.inner.complete(request)
    }
}

/// Negative log likelihood of the gold answer under one choice's token
/// logprobs.
///
/// The gold answer is whitespace-split into tokens and aligned against the
/// tail of the emitted tokens: alignment starts at the last emitted token
/// whose trimmed text equals the first gold token, falling back to the final
/// `|gold|` positions. At each aligned position the gold token's probability
/// is read from the emitted token if it matches, otherwise from that
/// position's `top_alternatives`, otherwise it is [`TOKEN_PROB_FLOOR`]; every
/// probability is floored there, so the result is finite and non-negative.
///
/// With `first_token_only` set, only the first gold token is scored.
pub fn answer_loss(
    choice: &CompletionChoice,
    gold_answer: &str,
    first_token_only: bool,
) -> Result<f64, OracleError> {
    let gold: Vec<&str> = gold_answer.split_whitespace().collect();
    if gold.is_empty() {
        return Err(OracleError::EmptyGold);
    }
    let gold = if first_token_only { &gold[..1] } else { &gold[..] };

    let tokens = &choice.tokens;
    let start = tokens
        .iter()
        .rposition(|t| t.token.trim() == gold[0])
        .unwrap_or_else(|| tokens.len().saturating_sub(gold.len()));

    let floor = TOKEN_PROB_FLOOR.ln();
    let mut loss = 0.0;
    for (offset, &gold_token) in gold.iter().enumerate() {
        let logprob = tokens
            .get(start + offset)
            .and_then(|t| {
                if t.token.trim() == gold_token {
                    Some(t.logprob)
                } else {
                    t.top_alternatives
                        .iter()
                        .find(|alt| alt.token.trim() == gold_token)
                        .map(|alt| alt.logprob)
                }
            })
            .unwrap_or(floor);
        loss -= logprob.max(floor).min(0.0);
    }
    Ok(loss)
}
