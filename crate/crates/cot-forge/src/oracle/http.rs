//! HTTP completion backend speaking the `POST {base}/v1/completions` wire
//! format with bearer authentication.
//!
//! Transient failures (429, 5xx, transport errors) are retried with
//! exponential backoff and full jitter; other statuses fail fast. Wire
//! payloads that do not match the completion schema surface as
//! [`OracleError::MalformedResponse`].

use std::collections::BTreeMap;
use std::time::Duration;

use rand::Rng;
use serde::{Deserialize, Serialize};
use ureq::Agent;

use crate::error::OracleError;
use crate::oracle::{
    Backend, BackendTag, ChoiceToken, CompletionChoice, CompletionRequest, CompletionResponse,
    TokenLogprob,
};

/// Environment variable holding the bearer credential.
pub const API_KEY_ENV: &str = "COT_FORGE_API_KEY";
/// Environment variable holding the default base URL.
pub const BASE_URL_ENV: &str = "COT_FORGE_BASE_URL";

/// Retry schedule for transient failures: `max_attempts` tries total, with
/// sleeps drawn uniformly from `[0, base_delay * 2^(attempt-1))`.
#[derive(Debug, Clone)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub base_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy { max_attempts: 5, base_delay: Duration::from_secs(1) }
    }
}

/// Completion backend for an OpenAI-style `/v1/completions` endpoint.
pub struct HttpBackend {
    base_url: String,
    api_key: String,
    retry: RetryPolicy,
    agent: Agent,
}

#[derive(Serialize)]
struct WireRequest<'a> {
    model: &'a str,
    prompt: &'a str,
    max_tokens: u32,
    temperature: f64,
    n: u32,
    stop: Option<&'a [String]>,
    logprobs: Option<u8>,
}

#[derive(Deserialize)]
struct WireResponse {
    choices: Vec<WireChoice>,
}

#[derive(Deserialize)]
struct WireChoice {
    text: String,
    #[serde(default)]
    logprobs: Option<WireLogprobs>,
}

#[derive(Deserialize)]
struct WireLogprobs {
    #[serde(default)]
    tokens: Vec<String>,
    #[serde(default)]
    token_logprobs: Vec<Option<f64>>,
    #[serde(default)]
    top_logprobs: Vec<Option<BTreeMap<String, f64>>>,
}

enum AttemptError {
    Retryable(OracleError),
    RateLimited,
    Fatal(OracleError),
}

impl HttpBackend {
    pub fn new(
        base_url: impl Into<String>,
        api_key: impl Into<String>,
        retry: RetryPolicy,
    ) -> Self {
        let config = Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(Duration::from_secs(120)))
            .build();
        HttpBackend {
            base_url: base_url.into().trim_end_matches('/').to_string(),
            api_key: api_key.into(),
            retry,
            agent: Agent::new_with_config(config),
        }
    }

    /// Builds a backend from the environment: the credential must be in
    /// [`API_KEY_ENV`], and the base URL comes from `base_url` when given,
    /// else [`BASE_URL_ENV`].
    pub fn from_env(base_url: Option<String>, retry: RetryPolicy) -> Result<Self, OracleError> {
        let api_key = std::env::var(API_KEY_ENV)
            .ok()
            .filter(|k| !k.is_empty())
            .ok_or(OracleError::AuthMissing { var: API_KEY_ENV.to_string() })?;
        let base_url = base_url
            .or_else(|| std::env::var(BASE_URL_ENV).ok().filter(|u| !u.is_empty()))
            .ok_or_else(|| {
                OracleError::InvalidRequest(format!(
                    "no base URL: pass --base-url or set {BASE_URL_ENV}"
                ))
            })?;
        Ok(HttpBackend::new(base_url, api_key, retry))
    }

    pub fn base_url(&self) -> &str {
        &self.base_url
    }

    fn attempt(&self, request: &CompletionRequest) -> Result<CompletionResponse, AttemptError> {
        let wire = WireRequest {
            model: &request.model_id,
            prompt: &request.prompt,
            max_tokens: request.max_tokens,
            temperature: request.temperature,
            n: request.n_samples,
            stop: (!request.stop.is_empty()).then_some(request.stop.as_slice()),
            logprobs: (request.logprobs_k > 0).then_some(request.logprobs_k),
        };
        let url = format!("{}/v1/completions", self.base_url);

        let mut response = self
            .agent
            .post(&url)
            .header("authorization", format!("Bearer {}", self.api_key))
            .send_json(&wire)
            .map_err(|err| {
                AttemptError::Retryable(OracleError::BackendUnavailable(err.to_string()))
            })?;

        let status = response.status().as_u16();
        match status {
            200..=299 => {}
            429 => return Err(AttemptError::RateLimited),
            500..=599 => {
                return Err(AttemptError::Retryable(OracleError::BackendUnavailable(format!(
                    "HTTP {status}"
                ))))
            }
            _ => {
                return Err(AttemptError::Fatal(OracleError::BackendUnavailable(format!(
                    "HTTP {status}"
                ))))
            }
        }

        let wire: WireResponse = response.body_mut().read_json().map_err(|err| {
            AttemptError::Fatal(OracleError::MalformedResponse(err.to_string()))
        })?;
        convert_response(wire, request).map_err(AttemptError::Fatal)
    }
}

fn convert_response(
    wire: WireResponse,
    request: &CompletionRequest,
) -> Result<CompletionResponse, OracleError> {
    if wire.choices.len() != request.n_samples as usize {
        return Err(OracleError::MalformedResponse(format!(
            "expected {} choices, got {}",
            request.n_samples,
            wire.choices.len()
        )));
    }

    let choices = wire
        .choices
        .into_iter()
        .map(|choice| {
            let tokens = choice
                .logprobs
                .map(|lp| convert_tokens(lp, request.logprobs_k))
                .unwrap_or_default();
            CompletionChoice { text: choice.text, tokens }
        })
        .collect();
    Ok(CompletionResponse { choices, backend_tag: BackendTag::Http })
}

fn convert_tokens(logprobs: WireLogprobs, logprobs_k: u8) -> Vec<ChoiceToken> {
    logprobs
        .tokens
        .into_iter()
        .enumerate()
        .map(|(i, token)| {
            let logprob = logprobs
                .token_logprobs
                .get(i)
                .copied()
                .flatten()
                .unwrap_or(0.0)
                .min(0.0);
            let mut top_alternatives: Vec<TokenLogprob> = logprobs
                .top_logprobs
                .get(i)
                .and_then(|entry| entry.as_ref())
                .map(|alts| {
                    alts.iter()
                        .map(|(token, lp)| TokenLogprob {
                            token: token.clone(),
                            logprob: lp.min(0.0),
                        })
                        .collect()
                })
                .unwrap_or_default();
            // BTreeMap iteration is token-ordered; report by descending
            // probability with token text as the tiebreak.
            top_alternatives.sort_by(|a, b| {
                b.logprob
                    .partial_cmp(&a.logprob)
                    .expect("finite logprobs")
                    .then_with(|| a.token.cmp(&b.token))
            });
            top_alternatives.truncate(logprobs_k as usize);
            ChoiceToken { token, logprob, top_alternatives }
        })
        .collect()
}

impl Backend for HttpBackend {
    fn complete(&self, request: &CompletionRequest) -> Result<CompletionResponse, OracleError> {
        request.validate()?;

        let mut last_error = OracleError::BackendUnavailable("no attempt made".into());
        for attempt in 1..=self.retry.max_attempts.max(1) {
            match self.attempt(request) {
                Ok(response) => return Ok(response),
                Err(AttemptError::Fatal(err)) => return Err(err),
                Err(AttemptError::RateLimited) => {
                    last_error = OracleError::RateLimited { attempts: attempt };
                }
                Err(AttemptError::Retryable(err)) => last_error = err,
            }
            if attempt < self.retry.max_attempts {
                let cap = self.retry.base_delay.as_secs_f64() * (1u64 << (attempt - 1)) as f64;
                let jittered = rand::rng().random::<f64>() * cap;
                std::thread::sleep(Duration::from_secs_f64(jittered));
            }
        }
        Err(last_error)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn base_url_loses_trailing_slashes() {
        let backend = HttpBackend::new("http://localhost:9/v1/../", "k", RetryPolicy::default());
        assert_eq!(backend.base_url(), "http://localhost:9/v1/..");
    }

    #[test]
    fn wire_request_serializes_the_documented_body() {
        let wire = WireRequest {
            model: "m",
            prompt: "Q: hi\nA:",
            max_tokens: 256,
            temperature: 0.7,
            n: 4,
            stop: Some(&["\n\n".to_string()]),
            logprobs: Some(5),
        };
        assert_eq!(
            serde_json::to_string(&wire).unwrap(),
            "{\"model\":\"m\",\"prompt\":\"Q: hi\\nA:\",\"max_tokens\":256,\
             \"temperature\":0.7,\"n\":4,\"stop\":[\"\\n\\n\"],\"logprobs\":5}"
        );
    }

    #[test]
    fn convert_rejects_choice_count_mismatch() {
        let request = CompletionRequest { n_samples: 2, ..Default::default() };
        let wire = WireResponse {
            choices: vec![WireChoice { text: "only one".into(), logprobs: None }],
        };
        assert!(matches!(
            convert_response(wire, &request),
            Err(OracleError::MalformedResponse(_))
        ));
    }

    #[test]
    fn convert_orders_and_truncates_alternatives() {
        let logprobs = WireLogprobs {
            tokens: vec![" 5".into()],
            token_logprobs: vec![Some(-0.1)],
            top_logprobs: vec![Some(BTreeMap::from([
                (" 4".to_string(), -3.0),
                (" 5".to_string(), -0.1),
                (" 6".to_string(), -1.5),
            ]))],
        };
        let tokens = convert_tokens(logprobs, 2);
        assert_eq!(tokens.len(), 1);
        let alts: Vec<(&str, f64)> = tokens[0]
            .top_alternatives
            .iter()
            .map(|alt| (alt.token.as_str(), alt.logprob))
            .collect();
        assert_eq!(alts, vec![(" 5", -0.1), (" 6", -1.5)]);
    }

    #[test]
    fn convert_treats_null_logprobs_as_certain_tokens() {
        let logprobs = WireLogprobs {
            tokens: vec!["The".into(), " answer".into()],
            token_logprobs: vec![None, Some(-0.2)],
            top_logprobs: vec![None, None],
        };
        let tokens = convert_tokens(logprobs, 5);
        assert_eq!(tokens[0].logprob, 0.0);
        assert_eq!(tokens[1].logprob, -0.2);
        assert!(tokens[0].top_alternatives.is_empty());
    }
}
