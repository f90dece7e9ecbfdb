//! Accuracy evaluation: answer normalization, exact match, self-consistency
//! voting, per-hop breakdowns, and the predictions file format.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::LabeledExample;
use crate::error::EvalError;
use crate::oracle::{complete_many, Backend, CompletionRequest};
use crate::pool::{extract_answer, ExemplarPool, PromptStyle};
use crate::selector::render_selection_prompt;

/// Canonical answer form used for every comparison: lowercase, with currency
/// symbols, thousands separators, and percent signs removed, enclosing
/// parentheses and trailing periods stripped to a fixed point, and runs of
/// whitespace collapsed.
pub fn normalize_answer(answer: &str) -> String {
    let mut current: String = answer
        .to_lowercase()
        .chars()
        .filter(|c| !matches!(c, '$' | ',' | '%'))
        .collect();
    loop {
        let mut next = current.trim().to_string();
        if next.len() >= 2 && next.starts_with('(') && next.ends_with(')') {
            next = next[1..next.len() - 1].to_string();
        }
        while next.ends_with('.') {
            next.pop();
        }
        if next == current {
            break;
        }
        current = next;
    }
    current.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Whether a prediction normalizes to the gold answer. An empty gold answer
/// matches nothing.
pub fn exact_match(prediction: &str, gold: &str) -> bool {
    let gold = normalize_answer(gold);
    !gold.is_empty() && normalize_answer(prediction) == gold
}

/// Majority vote over normalized answers; ties break toward the answer that
/// appeared first in the ballot.
pub fn majority_vote(answers: &[String]) -> Result<String, EvalError> {
    if answers.is_empty() {
        return Err(EvalError::EmptyBallot);
    }
    let mut tally: BTreeMap<String, (usize, usize)> = BTreeMap::new();
    for (position, answer) in answers.iter().enumerate() {
        let entry = tally.entry(normalize_answer(answer)).or_insert((0, position));
        entry.0 += 1;
    }
    let winner = tally
        .into_iter()
        .max_by(|a, b| (a.1 .0, std::cmp::Reverse(a.1 .1)).cmp(&(b.1 .0, std::cmp::Reverse(b.1 .1))))
        .expect("ballot is non-empty");
    Ok(winner.0)
}

/// Decoding strategy for evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalMode {
    /// One greedy completion per question.
    Greedy,
    /// `sc_samples` stochastic completions per question, answered by
    /// majority vote.
    SelfConsistency,
}

/// Evaluation settings, including the request plumbing.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalConfig {
    pub mode: EvalMode,
    /// Ballot size in self-consistency mode.
    pub sc_samples: u32,
    /// Sampling temperature in self-consistency mode; greedy mode always
    /// decodes at temperature 0.
    pub sc_temperature: f64,
    pub model_id: String,
    pub max_tokens: u32,
    pub stop: Vec<String>,
    pub parallelism: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            mode: EvalMode::Greedy,
            sc_samples: 40,
            sc_temperature: 0.7,
            model_id: String::new(),
            max_tokens: 256,
            stop: Vec::new(),
            parallelism: 4,
        }
    }
}

/// One scored question.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub question_id: String,
    pub prediction: String,
    pub gold: String,
    pub is_correct: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hops: Option<u32>,
}

/// A question whose completion request failed; it scores as incorrect.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalFailure {
    pub question_id: String,
    pub error: String,
}

/// Totals for one hop-count bucket.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct HopBucket {
    pub total: usize,
    pub correct: usize,
}

/// The outcome of one evaluation pass, in dataset order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub total: usize,
    pub correct: usize,
    pub accuracy: f64,
    pub per_hop: BTreeMap<u32, HopBucket>,
    pub records: Vec<EvalRecord>,
    pub failures: Vec<EvalFailure>,
}

impl EvalReport {
    fn from_records(records: Vec<EvalRecord>, failures: Vec<EvalFailure>) -> Self {
        let total = records.len();
        let correct = records.iter().filter(|r| r.is_correct).count();
        let mut per_hop: BTreeMap<u32, HopBucket> = BTreeMap::new();
        for record in &records {
            if let Some(hops) = record.hops {
                let bucket = per_hop.entry(hops).or_default();
                bucket.total += 1;
                bucket.correct += record.is_correct as usize;
            }
        }
        let accuracy = if total == 0 { 0.0 } else { correct as f64 / total as f64 };
        EvalReport { total, correct, accuracy, per_hop, records, failures }
    }

    /// Plain-text summary: overall accuracy plus the hop table when hop
    /// annotations exist.
    pub fn summary(&self) -> String {
        let mut out = format!(
            "{} / {} correct ({:.2}%)\n",
            self.correct,
            self.total,
            self.accuracy * 100.0
        );
        if !self.failures.is_empty() {
            let _ = writeln!(out, "{} question(s) failed at the oracle", self.failures.len());
        }
        if let Ok(table) = hop_report(self) {
            out.push('\n');
            out.push_str(&table);
        }
        out
    }
}

/// Scores a fixed exemplar combination against a labeled dataset.
///
/// Oracle failures never abort the pass: the affected question is recorded
/// with an empty prediction, counted incorrect, and listed in `failures`.
pub fn evaluate(
    combination: &[usize],
    pool: &ExemplarPool,
    dataset: &[LabeledExample],
    backend: &dyn Backend,
    config: &EvalConfig,
    style: &PromptStyle,
) -> Result<EvalReport, EvalError> {
    let (temperature, n_samples) = match config.mode {
        EvalMode::Greedy => (0.0, 1),
        EvalMode::SelfConsistency => (config.sc_temperature, config.sc_samples.max(1)),
    };
    let requests = dataset
        .iter()
        .map(|example| {
            Ok(CompletionRequest {
                model_id: config.model_id.clone(),
                prompt: render_selection_prompt(pool, combination, &example.question, style)?,
                max_tokens: config.max_tokens,
                temperature,
                n_samples,
                stop: config.stop.clone(),
                logprobs_k: 0,
            })
        })
        .collect::<Result<Vec<_>, EvalError>>()?;

    let mut records = Vec::with_capacity(dataset.len());
    let mut failures = Vec::new();
    for (example, result) in
        dataset.iter().zip(complete_many(backend, &requests, config.parallelism))
    {
        let prediction = match result {
            Ok(response) => match config.mode {
                EvalMode::Greedy => extract_answer(&response.choices[0].text),
                EvalMode::SelfConsistency => {
                    let ballot: Vec<String> =
                        response.choices.iter().map(|c| extract_answer(&c.text)).collect();
                    majority_vote(&ballot)?
                }
            },
            Err(error) => {
                failures.push(EvalFailure {
                    question_id: example.question_id.clone(),
                    error: error.to_string(),
                });
                String::new()
            }
        };
        records.push(EvalRecord {
            question_id: example.question_id.clone(),
            is_correct: exact_match(&prediction, &example.answer),
            prediction,
            gold: example.answer.clone(),
            hops: example.hops,
        });
    }
    Ok(EvalReport::from_records(records, failures))
}

/// Renders the per-hop accuracy table, ending with an overall row.
pub fn hop_report(report: &EvalReport) -> Result<String, EvalError> {
    if report.per_hop.is_empty() {
        return Err(EvalError::NoHopAnnotations);
    }
    let mut out = String::from("hops  total  correct  accuracy\n");
    let mut row = |label: &str, bucket: HopBucket| {
        let accuracy = if bucket.total == 0 {
            0.0
        } else {
            bucket.correct as f64 / bucket.total as f64
        };
        let _ = writeln!(
            out,
            "{label:>4}  {total:>5}  {correct:>7}  {percent:>7.2}%",
            total = bucket.total,
            correct = bucket.correct,
            percent = accuracy * 100.0
        );
    };
    for (hops, bucket) in &report.per_hop {
        row(&hops.to_string(), *bucket);
    }
    row("all", HopBucket { total: report.total, correct: report.correct });
    Ok(out)
}

/// One line of a predictions file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub question_id: String,
    pub prediction: String,
    pub gold: String,
    pub correct: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hops: Option<u32>,
}

/// Writes one JSON object per scored question, in report order.
pub fn write_predictions(report: &EvalReport, path: &Path) -> Result<(), EvalError> {
    let mut out = String::new();
    for record in &report.records {
        let line = PredictionRecord {
            question_id: record.question_id.clone(),
            prediction: record.prediction.clone(),
            gold: record.gold.clone(),
            correct: record.is_correct,
            hops: record.hops,
        };
        out.push_str(&serde_json::to_string(&line).expect("record serializes"));
        out.push('\n');
    }
    fs::write(path, out).map_err(|source| EvalError::Io { path: path.to_path_buf(), source })
}

/// Reads a predictions file back into a report (no failures are recorded in
/// the file, so the roundtripped report has none).
pub fn read_predictions(path: &Path) -> Result<EvalReport, EvalError> {
    let file = fs::File::open(path)
        .map_err(|source| EvalError::Io { path: path.to_path_buf(), source })?;
    let mut records = Vec::new();
    for (index, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|source| EvalError::Io { path: path.to_path_buf(), source })?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: PredictionRecord = serde_json::from_str(&line).map_err(|source| {
            EvalError::Parse { path: path.to_path_buf(), line: index + 1, source }
        })?;
        records.push(EvalRecord {
            question_id: parsed.question_id,
            prediction: parsed.prediction,
            gold: parsed.gold,
            is_correct: parsed.correct,
            hops: parsed.hops,
        });
    }
    Ok(EvalReport::from_records(records, Vec::new()))
}
