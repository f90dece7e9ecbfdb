//! Deterministic mock backend driven by a task spec.
//!
//! Prompts address the mock through inline markers: every `[EX:<id>]`
//! occurrence names an exemplar (duplicates count twice — the mean is over
//! the multiset), and the last `[Q:<question-id>]` names the question being
//! asked — worked examples rendered earlier in the prompt keep their source
//! questions' markers, and the query block always comes last. The marked
//! exemplars' utilities decide a correctness
//! probability through a sigmoid, and a counter-mode hash of
//! `(noise_seed, question id, sorted marker ids, sample index)` decides each
//! sample's outcome, so identical requests always produce identical
//! responses — temperature is treated as request metadata and never touches
//! the noise.

use std::collections::BTreeMap;
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::OracleError;
use crate::oracle::{
    Backend, BackendTag, ChoiceToken, CompletionChoice, CompletionRequest, CompletionResponse,
    TokenLogprob, TOKEN_PROB_FLOOR,
};

static EX_MARKER: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"\[EX:([^\]]+)\]").expect("valid marker pattern"));
static Q_MARKER: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"\[Q:([^\]]+)\]").expect("valid marker pattern"));

/// One pre-written chain the mock can emit for a question.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CannedChain {
    pub rationale: String,
    pub answer: String,
    pub is_correct: bool,
}

/// Ground truth for a mock task: per-exemplar utilities, the sigmoid mapping
/// mean utility to correctness probability, the noise seed, and the canned
/// chains emitted per question.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MockTaskSpec {
    /// Utility in `[0, 1]` per exemplar marker id.
    pub utilities: BTreeMap<String, f64>,
    /// Sigmoid steepness; must be positive.
    pub steepness: f64,
    /// Mean utility at which correctness probability crosses one half.
    pub threshold: f64,
    /// Seed for the counter-mode noise hash.
    pub noise_seed: u64,
    /// Chains per question id; every list must be non-empty.
    pub canned_chains: BTreeMap<String, Vec<CannedChain>>,
}

impl MockTaskSpec {
    pub fn validate(&self) -> Result<(), OracleError> {
        if !self.steepness.is_finite() || self.steepness <= 0.0 {
            return Err(OracleError::InvalidRequest(format!(
                "mock task spec: steepness {} must be positive",
                self.steepness
            )));
        }
        for (id, utility) in &self.utilities {
            if !(0.0..=1.0).contains(utility) {
                return Err(OracleError::InvalidRequest(format!(
                    "mock task spec: utility {utility} for {id:?} outside [0, 1]"
                )));
            }
        }
        for (question_id, chains) in &self.canned_chains {
            if chains.is_empty() {
                return Err(OracleError::InvalidRequest(format!(
                    "mock task spec: question {question_id:?} has no canned chains"
                )));
            }
        }
        Ok(())
    }

    /// Correctness probability for a prompt carrying the given exemplar
    /// marker ids (multiset). Unknown ids contribute utility 0; an empty
    /// marker list has mean utility 0.
    pub fn correctness_probability(&self, exemplar_ids: &[String]) -> f64 {
        let mean = if exemplar_ids.is_empty() {
            0.0
        } else {
            let sum: f64 = exemplar_ids
                .iter()
                .map(|id| self.utilities.get(id).copied().unwrap_or(0.0))
                .sum();
            sum / exemplar_ids.len() as f64
        };
        sigmoid(self.steepness * (mean - self.threshold))
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Uniform draw in `[0, 1)` from a counter-mode SHA-256 over the noise seed,
/// question id, sorted marker ids (duplicates kept), and sample index.
pub(crate) fn noise_draw(
    noise_seed: u64,
    question_id: &str,
    sorted_ids: &[String],
    sample_index: u32,
) -> f64 {
    let mut hasher = Sha256::new();
    hasher.update(noise_seed.to_le_bytes());
    hasher.update([0x1f]);
    hasher.update(question_id.as_bytes());
    hasher.update([0x1f]);
    for id in sorted_ids {
        hasher.update(id.as_bytes());
        hasher.update([0x1e]);
    }
    hasher.update(sample_index.to_le_bytes());
    let digest = hasher.finalize();
    let word = u64::from_le_bytes(digest[..8].try_into().expect("digest has 8 bytes"));
    (word >> 11) as f64 / (1u64 << 53) as f64
}

/// Deterministic completion backend described by a [`MockTaskSpec`].
pub struct MockBackend {
    spec: MockTaskSpec,
}

impl MockBackend {
    pub fn new(spec: MockTaskSpec) -> Result<Self, OracleError> {
        spec.validate()?;
        Ok(MockBackend { spec })
    }

    pub fn spec(&self) -> &MockTaskSpec {
        &self.spec
    }
}

impl Backend for MockBackend {
    fn complete(&self, request: &CompletionRequest) -> Result<CompletionResponse, OracleError> {
        request.validate()?;

        let exemplar_ids: Vec<String> = EX_MARKER
            .captures_iter(&request.prompt)
            .map(|c| c[1].to_string())
            .collect();
        let question_id = Q_MARKER
            .captures_iter(&request.prompt)
            .map(|c| c[1].to_string())
            .last()
            .ok_or_else(|| {
                OracleError::InvalidRequest("mock prompt carries no [Q:...] marker".to_string())
            })?;
        let chains = self
            .spec
            .canned_chains
            .get(&question_id)
            .ok_or_else(|| OracleError::UnknownQuestion(question_id.clone()))?;

        let c = self.spec.correctness_probability(&exemplar_ids);
        let mut sorted_ids = exemplar_ids;
        sorted_ids.sort();

        let correct: Vec<&CannedChain> = chains.iter().filter(|ch| ch.is_correct).collect();
        let incorrect: Vec<&CannedChain> = chains.iter().filter(|ch| !ch.is_correct).collect();

        let choices = (0..request.n_samples)
            .map(|sample_index| {
                let r = noise_draw(self.spec.noise_seed, &question_id, &sorted_ids, sample_index);
                let emit_correct = r < c;
                // A kind with no chains falls back to whatever the question has.
                let (pool, other) = if emit_correct {
                    (&correct, &incorrect)
                } else {
                    (&incorrect, &correct)
                };
                let pool = if pool.is_empty() { other } else { pool };
                let chain = pool[sample_index as usize % pool.len()];

                let p_emitted = if emit_correct { c } else { 1.0 - c };
                let emitted = TokenLogprob {
                    token: chain.answer.clone(),
                    logprob: p_emitted.max(TOKEN_PROB_FLOOR).ln().min(0.0),
                };
                let complement = (!other.is_empty()).then(|| {
                    let chain = other[sample_index as usize % other.len()];
                    TokenLogprob {
                        token: chain.answer.clone(),
                        logprob: (1.0 - p_emitted).max(TOKEN_PROB_FLOOR).ln().min(0.0),
                    }
                });

                let mut alternatives = vec![emitted.clone()];
                alternatives.extend(complement);
                alternatives
                    .sort_by(|a, b| b.logprob.partial_cmp(&a.logprob).expect("finite logprobs"));
                alternatives.truncate(request.logprobs_k as usize);

                CompletionChoice {
                    text: format!("{} The answer is {}.", chain.rationale, chain.answer),
                    tokens: vec![ChoiceToken {
                        token: emitted.token,
                        logprob: emitted.logprob,
                        top_alternatives: alternatives,
                    }],
                }
            })
            .collect();

        Ok(CompletionResponse { choices, backend_tag: BackendTag::Mock })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec_with(utilities: &[(&str, f64)], threshold: f64) -> MockTaskSpec {
        MockTaskSpec {
            utilities: utilities.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
            steepness: 8.0,
            threshold,
            noise_seed: 7,
            canned_chains: BTreeMap::from([(
                "q1".to_string(),
                vec![
                    CannedChain {
                        rationale: "2 + 3 = 5.".into(),
                        answer: "5".into(),
                        is_correct: true,
                    },
                    CannedChain {
                        rationale: "2 + 3 = 6.".into(),
                        answer: "6".into(),
                        is_correct: false,
                    },
                ],
            )]),
        }
    }

    fn ask(backend: &MockBackend, prompt: &str, n: u32, k: u8) -> CompletionResponse {
        backend
            .complete(&CompletionRequest {
                prompt: prompt.into(),
                n_samples: n,
                logprobs_k: k,
                ..Default::default()
            })
            .unwrap()
    }

    #[test]
    fn sigmoid_at_zero_mean_utility_matches_frozen_value() {
        let spec = spec_with(&[], 0.5);
        let c = spec.correctness_probability(&[]);
        assert!((c - 0.017986209962091555).abs() < 1e-15);
    }

    #[test]
    fn marker_mean_uses_multiset_semantics() {
        let spec = spec_with(&[("a", 0.2), ("b", 0.8)], 0.0);
        let once = spec.correctness_probability(&["a".into(), "b".into()]);
        let doubled =
            spec.correctness_probability(&["a".into(), "a".into(), "b".into()]);
        assert!((once - sigmoid(8.0 * 0.5)).abs() < 1e-15);
        assert!((doubled - sigmoid(8.0 * 0.4)).abs() < 1e-15);
    }

    #[test]
    fn unknown_utility_ids_count_as_zero() {
        let spec = spec_with(&[("a", 0.6)], 0.0);
        let c = spec.correctness_probability(&["a".into(), "ghost".into()]);
        assert!((c - sigmoid(8.0 * 0.3)).abs() < 1e-15);
    }

    #[test]
    fn identical_requests_yield_identical_responses() {
        let backend = MockBackend::new(spec_with(&[("a", 0.6)], 0.5)).unwrap();
        let prompt = "[EX:a] something [Q:q1] what is 2 + 3?";
        let first = ask(&backend, prompt, 4, 5);
        let second = ask(&backend, prompt, 4, 5);
        assert_eq!(first, second);
    }

    #[test]
    fn sample_index_drives_independent_outcomes() {
        let backend = MockBackend::new(spec_with(&[("a", 0.5)], 0.5)).unwrap();
        let response = ask(&backend, "[EX:a] [Q:q1] sum?", 64, 0);
        let texts: std::collections::BTreeSet<&str> =
            response.choices.iter().map(|c| c.text.as_str()).collect();
        assert_eq!(texts.len(), 2, "c = 0.5 should produce both canned chains across samples");
    }

    #[test]
    fn answer_token_carries_complementary_alternative() {
        let spec = spec_with(&[("hi", 1.0)], 0.5);
        let c = spec.correctness_probability(&["hi".into()]);
        let backend = MockBackend::new(spec).unwrap();
        let response = ask(&backend, "[EX:hi] [Q:q1] sum?", 1, 5);
        let token = &response.choices[0].tokens[0];
        assert_eq!(token.token, "5");
        assert!((token.logprob - c.ln()).abs() < 1e-15);
        let alt = token
            .top_alternatives
            .iter()
            .find(|alt| alt.token == "6")
            .expect("complementary answer listed");
        assert!((alt.logprob - (1.0 - c).ln()).abs() < 1e-15);
        assert!(token.top_alternatives.windows(2).all(|w| w[0].logprob >= w[1].logprob));
    }

    #[test]
    fn logprobs_k_zero_reports_no_alternatives() {
        let backend = MockBackend::new(spec_with(&[("hi", 1.0)], 0.5)).unwrap();
        let response = ask(&backend, "[EX:hi] [Q:q1] sum?", 1, 0);
        assert!(response.choices[0].tokens[0].top_alternatives.is_empty());
    }

    #[test]
    fn missing_question_and_malformed_prompts_are_rejected() {
        let backend = MockBackend::new(spec_with(&[], 0.5)).unwrap();
        let missing = backend.complete(&CompletionRequest {
            prompt: "[Q:q999] ?".into(),
            ..Default::default()
        });
        assert!(matches!(missing, Err(OracleError::UnknownQuestion(id)) if id == "q999"));

        let unmarked = backend
            .complete(&CompletionRequest { prompt: "no markers at all".into(), ..Default::default() });
        assert!(matches!(unmarked, Err(OracleError::InvalidRequest(_))));
    }

    #[test]
    fn last_question_marker_wins_in_few_shot_prompts() {
        let backend = MockBackend::new(spec_with(&[("hi", 1.0)], 0.5)).unwrap();
        let few_shot = ask(&backend, "Q: [Q:q7] old one\nA: done.\n\n[EX:hi] [Q:q1] sum?", 1, 0);
        let lone = ask(&backend, "[EX:hi] [Q:q1] sum?", 1, 0);
        assert_eq!(few_shot, lone);
    }

    #[test]
    fn spec_validation_catches_bad_fields() {
        let mut bad = spec_with(&[("a", 0.5)], 0.5);
        bad.steepness = 0.0;
        assert!(MockBackend::new(bad).is_err());

        let mut bad = spec_with(&[("a", 1.5)], 0.5);
        bad.threshold = 0.5;
        assert!(MockBackend::new(bad).is_err());

        let mut bad = spec_with(&[], 0.5);
        bad.canned_chains.insert("empty".into(), vec![]);
        assert!(MockBackend::new(bad).is_err());
    }

    #[test]
    fn noise_draw_is_uniform_enough() {
        let ids = vec!["a".to_string()];
        let draws: Vec<f64> =
            (0..10_000).map(|i| noise_draw(99, "q1", &ids, i)).collect();
        assert!(draws.iter().all(|r| (0.0..1.0).contains(r)));

        let mean = draws.iter().sum::<f64>() / draws.len() as f64;
        let var = draws.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / draws.len() as f64;
        assert!((mean - 0.5).abs() < 0.02, "mean {mean}");
        assert!((var - 1.0 / 12.0).abs() < 0.01, "variance {var}");

        let with_other_seed = noise_draw(100, "q1", &ids, 0);
        assert_ne!(draws[0], with_other_seed);
    }
}
