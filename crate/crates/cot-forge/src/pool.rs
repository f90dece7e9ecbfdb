//! Exemplar pool construction: prompt templates, candidate chain generation
//! through the oracle, and answer-checked pruning.
//!
//! A chain is kept only when its extracted final answer normalizes to the
//! question's gold answer, so downstream selection never sees a chain that
//! reasons its way to a wrong result.

use std::collections::BTreeMap;
use std::collections::HashSet;
use std::fs;
use std::path::Path;
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::dataset::LabeledExample;
use crate::error::{OracleError, PoolError};
use crate::eval::normalize_answer;
use crate::oracle::{complete_many, Backend, CompletionRequest};

/// Step trigger used whenever a prompt must coax out a reasoning chain and no
/// seed chains are available.
pub const DEFAULT_STEP_TRIGGER: &str = "Let's think step by step.";

static ANSWER_MARKER: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?i)the answer is").expect("valid marker pattern"));
static LAST_NUMBER: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"[-+]?\d+(?:\.\d+)?").expect("valid number pattern"));

/// Surface conventions shared by every prompt this crate renders.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptStyle {
    /// Prefix before each question line, `"Q:"` unless overridden.
    #[serde(default = "default_question_prefix")]
    pub question_prefix: String,
    /// Optional trigger inserted after each `A:`, before the rationale.
    #[serde(default)]
    pub step_trigger: Option<String>,
}

fn default_question_prefix() -> String {
    "Q:".to_string()
}

impl Default for PromptStyle {
    fn default() -> Self {
        PromptStyle { question_prefix: default_question_prefix(), step_trigger: None }
    }
}

/// One worked example used to seed chain generation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedChain {
    pub question: String,
    pub rationale: String,
    pub answer: String,
}

/// The few-shot (or zero-shot, when `seed_chains` is empty) prompt used to
/// generate candidate chains.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SeedPrompt {
    #[serde(default)]
    pub seed_chains: Vec<SeedChain>,
    #[serde(flatten)]
    pub style: PromptStyle,
}

/// Renders one worked-example block:
/// `"{prefix} {question}\nA: {rationale} The answer is {answer}.\n\n"`,
/// with the step trigger (when set) spliced in after `A:`.
pub(crate) fn exemplar_block(
    style: &PromptStyle,
    question: &str,
    rationale: &str,
    answer: &str,
) -> String {
    let lead = match &style.step_trigger {
        Some(trigger) => format!("A: {trigger} "),
        None => "A: ".to_string(),
    };
    format!(
        "{} {}\n{}{} The answer is {}.\n\n",
        style.question_prefix, question, lead, rationale, answer
    )
}

/// Renders the final question block the model must continue:
/// `"{prefix} {question}\nA:"`, plus the step trigger when set.
pub(crate) fn query_block(style: &PromptStyle, question: &str) -> String {
    match &style.step_trigger {
        Some(trigger) => format!("{} {}\nA: {}", style.question_prefix, question, trigger),
        None => format!("{} {}\nA:", style.question_prefix, question),
    }
}

/// Renders the chain-generation prompt for one question. With no seed chains
/// this degrades to the zero-shot form, which always carries a step trigger
/// ([`DEFAULT_STEP_TRIGGER`] unless the style sets its own).
pub fn render_generation_prompt(seed: &SeedPrompt, question: &str) -> String {
    if seed.seed_chains.is_empty() {
        let style = PromptStyle {
            question_prefix: seed.style.question_prefix.clone(),
            step_trigger: Some(
                seed.style.step_trigger.clone().unwrap_or_else(|| DEFAULT_STEP_TRIGGER.into()),
            ),
        };
        return query_block(&style, question);
    }

    let mut prompt = String::new();
    for chain in &seed.seed_chains {
        prompt.push_str(&exemplar_block(&seed.style, &chain.question, &chain.rationale, &chain.answer));
    }
    prompt.push_str(&query_block(&seed.style, question));
    prompt
}

/// Extracts the final answer from a completion: the text after the last
/// occurrence of `the answer is` (case-insensitive), trimmed of trailing
/// punctuation. Without that marker, falls back to the last number in the
/// text, and failing that returns the empty string.
pub fn extract_answer(completion: &str) -> String {
    if let Some(found) = ANSWER_MARKER.find_iter(completion).last() {
        return completion[found.end()..]
            .trim()
            .trim_end_matches(['.', '!', '?', ',', ';', ':'])
            .trim()
            .to_string();
    }
    LAST_NUMBER
        .find_iter(completion)
        .last()
        .map(|m| m.as_str().to_string())
        .unwrap_or_default()
}

/// Extracts the reasoning text: everything before the last answer marker,
/// or the whole completion when no marker is present. The answer sentence is
/// re-added by the prompt templates, so it is never stored twice.
pub fn extract_rationale(completion: &str) -> String {
    match ANSWER_MARKER.find_iter(completion).last() {
        Some(found) => completion[..found.start()].trim().to_string(),
        None => completion.trim().to_string(),
    }
}

/// Counts reasoning hops: the number of `=` signs before the last answer
/// marker (or in the whole text without one), floored at 1.
pub fn count_hops(text: &str) -> u32 {
    let body = match ANSWER_MARKER.find_iter(text).last() {
        Some(found) => &text[..found.start()],
        None => text,
    };
    (body.matches('=').count() as u32).max(1)
}

/// Where a candidate chain came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChainSource {
    FewShotSeeded,
    ZeroShot,
}

/// One machine-generated chain, before answer checking.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateChain {
    pub question_id: String,
    pub rationale: String,
    pub extracted_answer: String,
    pub raw_completion: String,
    pub source: ChainSource,
    pub sample_index: u32,
}

/// A question whose generation request failed.
#[derive(Debug)]
pub struct AugmentFailure {
    pub question_id: String,
    pub error: OracleError,
}

/// Request knobs for chain generation.
#[derive(Debug, Clone)]
pub struct AugmentOptions {
    pub model_id: String,
    pub temperature: f64,
    pub max_tokens: u32,
    pub stop: Vec<String>,
    pub parallelism: usize,
}

impl Default for AugmentOptions {
    fn default() -> Self {
        AugmentOptions {
            model_id: String::new(),
            temperature: 0.7,
            max_tokens: 256,
            stop: Vec::new(),
            parallelism: 4,
        }
    }
}

/// Draws `samples_per_question` chains for every example and returns the
/// candidates in (example order, sample index) order, alongside the questions
/// whose requests failed. A failed question costs its candidates, never the
/// whole run.
pub fn augment(
    examples: &[LabeledExample],
    seed: &SeedPrompt,
    samples_per_question: u32,
    backend: &dyn Backend,
    options: &AugmentOptions,
) -> (Vec<CandidateChain>, Vec<AugmentFailure>) {
    let source = if seed.seed_chains.is_empty() {
        ChainSource::ZeroShot
    } else {
        ChainSource::FewShotSeeded
    };
    let requests: Vec<CompletionRequest> = examples
        .iter()
        .map(|example| CompletionRequest {
            model_id: options.model_id.clone(),
            prompt: render_generation_prompt(seed, &example.question),
            max_tokens: options.max_tokens,
            temperature: options.temperature,
            n_samples: samples_per_question,
            stop: options.stop.clone(),
            logprobs_k: 0,
        })
        .collect();

    let mut candidates = Vec::new();
    let mut failures = Vec::new();
    for (example, result) in
        examples.iter().zip(complete_many(backend, &requests, options.parallelism))
    {
        match result {
            Ok(response) => {
                for (sample_index, choice) in response.choices.iter().enumerate() {
                    candidates.push(CandidateChain {
                        question_id: example.question_id.clone(),
                        rationale: extract_rationale(&choice.text),
                        extracted_answer: extract_answer(&choice.text),
                        raw_completion: choice.text.clone(),
                        source,
                        sample_index: sample_index as u32,
                    });
                }
            }
            Err(error) => {
                failures.push(AugmentFailure { question_id: example.question_id.clone(), error })
            }
        }
    }
    (candidates, failures)
}

/// One answer-checked exemplar.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Exemplar {
    pub exemplar_id: String,
    pub question: String,
    pub rationale: String,
    pub answer: String,
    pub hops: u32,
}

/// The pruned exemplar pool.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExemplarPool {
    pub target_size: usize,
    pub exemplars: Vec<Exemplar>,
}

impl ExemplarPool {
    pub fn len(&self) -> usize {
        self.exemplars.len()
    }

    pub fn is_empty(&self) -> bool {
        self.exemplars.is_empty()
    }

    pub fn save(&self, path: &Path) -> Result<(), PoolError> {
        let json = serde_json::to_string_pretty(self).expect("pool serializes");
        fs::write(path, json + "\n")
            .map_err(|source| PoolError::Io { path: path.to_path_buf(), source })
    }

    pub fn load(path: &Path) -> Result<Self, PoolError> {
        let bytes = fs::read(path)
            .map_err(|source| PoolError::Io { path: path.to_path_buf(), source })?;
        serde_json::from_slice(&bytes)
            .map_err(|source| PoolError::Parse { path: path.to_path_buf(), source })
    }
}

/// Keeps the candidates whose extracted answer normalizes to the gold answer,
/// drops duplicate `(question, rationale)` pairs, and truncates to
/// `target_size` in candidate order.
pub fn prune(
    candidates: &[CandidateChain],
    examples: &[LabeledExample],
    target_size: usize,
) -> Result<ExemplarPool, PoolError> {
    let gold: BTreeMap<&str, &LabeledExample> =
        examples.iter().map(|e| (e.question_id.as_str(), e)).collect();

    let mut exemplars = Vec::new();
    let mut seen: HashSet<(&str, &str)> = HashSet::new();
    for candidate in candidates {
        let example = gold
            .get(candidate.question_id.as_str())
            .ok_or_else(|| PoolError::MissingGold(candidate.question_id.clone()))?;

        let normalized = normalize_answer(&candidate.extracted_answer);
        if normalized.is_empty() || normalized != normalize_answer(&example.answer) {
            continue;
        }
        if !seen.insert((candidate.question_id.as_str(), candidate.rationale.as_str())) {
            continue;
        }
        if exemplars.len() < target_size {
            exemplars.push(Exemplar {
                exemplar_id: format!("{}#{}", candidate.question_id, candidate.sample_index),
                question: example.question.clone(),
                rationale: candidate.rationale.clone(),
                answer: candidate.extracted_answer.trim().to_string(),
                hops: count_hops(&candidate.rationale),
            });
        }
    }
    Ok(ExemplarPool { target_size, exemplars })
}
