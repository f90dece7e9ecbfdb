//! Exemplar selection as policy-gradient optimization: one categorical
//! distribution per prompt slot, sampled combinations scored through the
//! oracle, and a variance-reduced gradient estimate applied under simplex
//! projection.

mod optim;
mod simplex;

pub use optim::{Optimizer, OptimizerConfig, OptimizerKind};
pub use simplex::project_simplex;

use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::LabeledExample;
use crate::error::{OracleError, SelectorError};
use crate::eval::{evaluate, exact_match, EvalConfig, EvalMode};
use crate::oracle::{answer_loss, complete_many, Backend, CompletionRequest};
use crate::pool::{exemplar_block, extract_answer, query_block, ExemplarPool, PromptStyle};

/// One categorical distribution over pool indices per prompt slot. Every row
/// has non-negative entries summing to one within 1e-9.
#[derive(Debug, Clone, PartialEq)]
pub struct SelectionDistribution {
    rows: Vec<Vec<f64>>,
}

impl SelectionDistribution {
    /// Uniform initialization: every slot starts at `1/pool_size`.
    pub fn uniform(slots: usize, pool_size: usize) -> Result<Self, SelectorError> {
        if slots == 0 {
            return Err(SelectorError::InvalidConfig("slot count must be >= 1".into()));
        }
        if slots > pool_size {
            return Err(SelectorError::SlotsExceedPool { slots, pool_size });
        }
        let p = 1.0 / pool_size as f64;
        Ok(SelectionDistribution { rows: vec![vec![p; pool_size]; slots] })
    }

    /// Builds a distribution from explicit rows, enforcing the invariants.
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self, SelectorError> {
        if rows.is_empty() || rows[0].is_empty() {
            return Err(SelectorError::InvalidConfig("distribution must be non-empty".into()));
        }
        let width = rows[0].len();
        for row in &rows {
            if row.len() != width {
                return Err(SelectorError::InvalidConfig("ragged distribution rows".into()));
            }
            if row.iter().any(|p| !p.is_finite()) {
                return Err(SelectorError::NonFiniteInput);
            }
            if row.iter().any(|&p| !(0.0..=1.0).contains(&p)) {
                return Err(SelectorError::InvalidConfig("row entry outside [0, 1]".into()));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > 1e-9 {
                return Err(SelectorError::InvalidConfig(format!(
                    "row sums to {sum}, expected 1"
                )));
            }
        }
        Ok(SelectionDistribution { rows })
    }

    pub fn slots(&self) -> usize {
        self.rows.len()
    }

    pub fn pool_size(&self) -> usize {
        self.rows[0].len()
    }

    pub fn row(&self, slot: usize) -> &[f64] {
        &self.rows[slot]
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    pub(crate) fn set_row(&mut self, slot: usize, row: Vec<f64>) {
        debug_assert_eq!(row.len(), self.rows[slot].len());
        self.rows[slot] = row;
    }
}

/// One sampled exemplar combination (slots may repeat an index).
#[derive(Debug, Clone, PartialEq)]
pub struct SampledCombination {
    pub indices: Vec<usize>,
    pub joint_log_prob: f64,
}

/// Draws one index per slot by inverse-CDF sampling; zero-probability
/// entries are never drawn.
pub fn sample_combination<R: Rng>(
    distribution: &SelectionDistribution,
    rng: &mut R,
) -> SampledCombination {
    let mut indices = Vec::with_capacity(distribution.slots());
    let mut joint_log_prob = 0.0;
    for row in distribution.rows() {
        let u: f64 = rng.random();
        let mut cumulative = 0.0;
        let mut chosen = None;
        let mut last_positive = None;
        for (j, &p) in row.iter().enumerate() {
            if p <= 0.0 {
                continue;
            }
            last_positive = Some(j);
            cumulative += p;
            if u < cumulative {
                chosen = Some(j);
                break;
            }
        }
        // Floating-point residue can leave the final cumulative sum a hair
        // below u; the draw then falls to the last viable index.
        let j = chosen.or(last_positive).expect("row has a positive entry");
        indices.push(j);
        joint_log_prob += row[j].ln();
    }
    SampledCombination { indices, joint_log_prob }
}

/// The most probable distinct combination: per-slot argmax, with an index
/// already taken by an earlier slot falling to the next-most-probable one.
/// Probability ties break toward the lower index.
pub fn argmax_combination(distribution: &SelectionDistribution) -> Vec<usize> {
    let mut taken = vec![false; distribution.pool_size()];
    let mut indices = Vec::with_capacity(distribution.slots());
    for row in distribution.rows() {
        let mut order: Vec<usize> = (0..row.len()).collect();
        order.sort_by(|&a, &b| {
            row[b].partial_cmp(&row[a]).expect("finite probabilities").then(a.cmp(&b))
        });
        let j = order
            .into_iter()
            .find(|&j| !taken[j])
            .expect("slots never exceed pool size");
        taken[j] = true;
        indices.push(j);
    }
    indices
}

/// Score function of one slot's categorical draw under the sum-to-one
/// constraint: `+1/p` at the sampled index and `-1/p` elsewhere.
pub fn score_gradient(row: &[f64], sampled: usize) -> Result<Vec<f64>, SelectorError> {
    let p = row[sampled];
    if p <= 0.0 {
        return Err(SelectorError::ZeroProbabilitySample { index: sampled });
    }
    let inverse = 1.0 / p;
    Ok((0..row.len()).map(|j| if j == sampled { inverse } else { -inverse }).collect())
}

/// Variance-reduced policy-gradient estimate from `I` sampled combinations:
/// each sample's score matrix is weighted by its loss minus the batch mean
/// loss, summed, and scaled by `1/(I-1)`.
pub fn vr_pge_gradient(
    losses: &[f64],
    scores: &[Vec<Vec<f64>>],
) -> Result<Vec<Vec<f64>>, SelectorError> {
    let samples = losses.len();
    if samples < 2 {
        return Err(SelectorError::SampleSizeTooSmall(samples));
    }
    assert_eq!(scores.len(), samples, "one score matrix per loss");

    // Mean computed relative to the first loss so that equal losses yield an
    // exactly zero advantage (and therefore an exactly zero gradient).
    let mean_loss: f64 =
        losses[0] + losses.iter().map(|l| l - losses[0]).sum::<f64>() / samples as f64;
    let slots = scores[0].len();
    let width = scores[0][0].len();
    let mut grad = vec![vec![0.0; width]; slots];
    for (loss, matrix) in losses.iter().zip(scores) {
        let advantage = (loss - mean_loss) / (samples - 1) as f64;
        for (grad_row, score_row) in grad.iter_mut().zip(matrix) {
            for (g, s) in grad_row.iter_mut().zip(score_row) {
                *g += advantage * s;
            }
        }
    }
    Ok(grad)
}

fn check_combination(pool: &ExemplarPool, combination: &[usize]) -> Result<(), SelectorError> {
    for &index in combination {
        if index >= pool.len() {
            return Err(SelectorError::IndexOutOfRange { index, pool_size: pool.len() });
        }
    }
    Ok(())
}

/// Renders the few-shot prompt for `question` using the pool exemplars at
/// `combination`, in order.
pub fn render_selection_prompt(
    pool: &ExemplarPool,
    combination: &[usize],
    question: &str,
    style: &PromptStyle,
) -> Result<String, SelectorError> {
    let mut prompt = render_prompt_prefix(pool, combination, style)?;
    prompt.push_str(&query_block(style, question));
    Ok(prompt)
}

/// Renders just the exemplar blocks for `combination` — the reusable prompt
/// prefix a downstream caller can staple any question onto.
pub fn render_prompt_prefix(
    pool: &ExemplarPool,
    combination: &[usize],
    style: &PromptStyle,
) -> Result<String, SelectorError> {
    check_combination(pool, combination)?;
    let mut prefix = String::new();
    for &index in combination {
        let exemplar = &pool.exemplars[index];
        prefix.push_str(&exemplar_block(
            style,
            &exemplar.question,
            &exemplar.rationale,
            &exemplar.answer,
        ));
    }
    Ok(prefix)
}

/// How a combination's fit on a batch is measured.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossMode {
    /// Negative log likelihood of every gold answer token.
    LogProb,
    /// Negative log likelihood of the first gold answer token only.
    LogProbFirstToken,
    /// `1 - exact_match` on the extracted answer.
    ZeroOne,
}

/// Request plumbing for combination scoring and training.
#[derive(Debug, Clone)]
pub struct ScoreOptions {
    pub style: PromptStyle,
    pub model_id: String,
    pub max_tokens: u32,
    /// Alternatives requested per token; the log-prob loss modes read gold
    /// tokens out of these.
    pub logprobs_k: u8,
    pub stop: Vec<String>,
    pub parallelism: usize,
    pub loss_mode: LossMode,
}

impl Default for ScoreOptions {
    fn default() -> Self {
        ScoreOptions {
            style: PromptStyle::default(),
            model_id: String::new(),
            max_tokens: 256,
            logprobs_k: 5,
            stop: Vec::new(),
            parallelism: 4,
            loss_mode: LossMode::LogProb,
        }
    }
}

/// Mean loss of one combination over a batch of examples, scored greedily.
pub fn batch_loss(
    combination: &[usize],
    batch: &[LabeledExample],
    pool: &ExemplarPool,
    backend: &dyn Backend,
    options: &ScoreOptions,
) -> Result<f64, SelectorError> {
    if batch.is_empty() {
        return Ok(0.0);
    }
    let requests = batch
        .iter()
        .map(|example| {
            Ok(CompletionRequest {
                model_id: options.model_id.clone(),
                prompt: render_selection_prompt(
                    pool,
                    combination,
                    &example.question,
                    &options.style,
                )?,
                max_tokens: options.max_tokens,
                temperature: 0.0,
                n_samples: 1,
                stop: options.stop.clone(),
                logprobs_k: options.logprobs_k,
            })
        })
        .collect::<Result<Vec<_>, SelectorError>>()?;

    let mut total = 0.0;
    for (example, result) in batch.iter().zip(complete_many(backend, &requests, options.parallelism))
    {
        let response = result?;
        let choice = &response.choices[0];
        total += match options.loss_mode {
            LossMode::LogProb => answer_loss(choice, &example.answer, false)?,
            LossMode::LogProbFirstToken => answer_loss(choice, &example.answer, true)?,
            LossMode::ZeroOne => {
                1.0 - exact_match(&extract_answer(&choice.text), &example.answer) as u8 as f64
            }
        };
    }
    Ok(total / batch.len() as f64)
}

/// Training hyperparameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainConfig {
    /// Combinations sampled per batch (`I`); at least 2.
    pub sample_size: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub optimizer: OptimizerKind,
    pub adam_betas: (f64, f64),
    pub adam_eps: f64,
    pub weight_decay: f64,
    pub rng_seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            sample_size: 5,
            learning_rate: 1e-3,
            epochs: 5,
            batch_size: 10,
            optimizer: OptimizerKind::AdamW,
            adam_betas: (0.9, 0.999),
            adam_eps: 1e-8,
            weight_decay: 0.0,
            rng_seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), SelectorError> {
        if self.sample_size < 2 {
            return Err(SelectorError::SampleSizeTooSmall(self.sample_size));
        }
        if self.epochs == 0 {
            return Err(SelectorError::InvalidConfig("epochs must be >= 1".into()));
        }
        if self.batch_size == 0 {
            return Err(SelectorError::InvalidConfig("batch_size must be >= 1".into()));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(SelectorError::InvalidConfig("learning_rate must be positive".into()));
        }
        Ok(())
    }

    fn optimizer_config(&self) -> OptimizerConfig {
        OptimizerConfig {
            kind: self.optimizer,
            learning_rate: self.learning_rate,
            betas: self.adam_betas,
            eps: self.adam_eps,
            weight_decay: self.weight_decay,
        }
    }
}

/// Loss and validation accuracy for one epoch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub mean_train_loss: f64,
    pub val_accuracy: f64,
}

/// The outcome of training: the distribution snapshot and argmax combination
/// from the best validation epoch.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainedSelection {
    pub distribution: SelectionDistribution,
    /// 1-based epoch whose snapshot was kept (earliest on ties).
    pub best_epoch: usize,
    pub argmax_indices: Vec<usize>,
    pub val_accuracy: f64,
    pub rng_seed: u64,
    pub history: Vec<EpochStats>,
}

/// Trains per-slot distributions over the pool.
///
/// Each epoch shuffles the training set with the seeded RNG, walks it in
/// `batch_size` chunks, samples `sample_size` combinations per chunk, scores
/// them greedily through the oracle, and applies one variance-reduced
/// gradient step. After every epoch the argmax combination is scored on the
/// validation set by greedy exact match; the snapshot with the highest
/// validation accuracy wins, earliest epoch on ties. The whole procedure is
/// deterministic given `config.rng_seed` and a deterministic backend.
pub fn train(
    pool: &ExemplarPool,
    train_set: &[LabeledExample],
    val_set: &[LabeledExample],
    slots: usize,
    config: &TrainConfig,
    options: &ScoreOptions,
    backend: &dyn Backend,
) -> Result<TrainedSelection, SelectorError> {
    config.validate()?;
    if train_set.is_empty() {
        return Err(SelectorError::InvalidConfig("training set is empty".into()));
    }
    let mut distribution = SelectionDistribution::uniform(slots, pool.len())?;
    let mut optimizer = Optimizer::new(config.optimizer_config(), slots, pool.len());
    let mut rng = ChaCha8Rng::seed_from_u64(config.rng_seed);

    let val_config = EvalConfig {
        mode: EvalMode::Greedy,
        model_id: options.model_id.clone(),
        max_tokens: options.max_tokens,
        stop: options.stop.clone(),
        parallelism: options.parallelism,
        ..EvalConfig::default()
    };

    let mut history = Vec::with_capacity(config.epochs);
    let mut best: Option<(usize, SelectionDistribution, Vec<usize>, f64)> = None;
    for epoch in 1..=config.epochs {
        let mut order: Vec<usize> = (0..train_set.len()).collect();
        order.shuffle(&mut rng);

        let mut batch_mean_losses = Vec::new();
        for chunk in order.chunks(config.batch_size) {
            let batch: Vec<LabeledExample> =
                chunk.iter().map(|&i| train_set[i].clone()).collect();

            let combinations: Vec<SampledCombination> = (0..config.sample_size)
                .map(|_| sample_combination(&distribution, &mut rng))
                .collect();
            let mut losses = Vec::with_capacity(config.sample_size);
            let mut scores = Vec::with_capacity(config.sample_size);
            for combination in &combinations {
                losses.push(batch_loss(&combination.indices, &batch, pool, backend, options)?);
                let matrix = combination
                    .indices
                    .iter()
                    .enumerate()
                    .map(|(slot, &j)| score_gradient(distribution.row(slot), j))
                    .collect::<Result<Vec<_>, _>>()?;
                scores.push(matrix);
            }

            let grad = vr_pge_gradient(&losses, &scores)?;
            optimizer.step(&mut distribution, &grad)?;
            batch_mean_losses
                .push(losses.iter().sum::<f64>() / losses.len() as f64);
        }

        let argmax = argmax_combination(&distribution);
        let report = evaluate(&argmax, pool, val_set, backend, &val_config, &options.style)
            .map_err(|err| {
                SelectorError::Oracle(OracleError::BackendUnavailable(err.to_string()))
            })?;
        if let Some(failure) = report.failures.first() {
            return Err(SelectorError::Oracle(OracleError::BackendUnavailable(format!(
                "validation scoring failed for {}: {}",
                failure.question_id, failure.error
            ))));
        }

        let mean_train_loss =
            batch_mean_losses.iter().sum::<f64>() / batch_mean_losses.len() as f64;
        history.push(EpochStats { epoch, mean_train_loss, val_accuracy: report.accuracy });

        let improved = best.as_ref().is_none_or(|(_, _, _, acc)| report.accuracy > *acc);
        if improved {
            best = Some((epoch, distribution.clone(), argmax, report.accuracy));
        }
    }

    let (best_epoch, distribution, argmax_indices, val_accuracy) =
        best.expect("at least one epoch ran");
    Ok(TrainedSelection {
        distribution,
        best_epoch,
        argmax_indices,
        val_accuracy,
        rng_seed: config.rng_seed,
        history,
    })
}

#[derive(Serialize, Deserialize)]
struct CheckpointFile {
    n: usize,
    #[serde(rename = "N")]
    pool_size: usize,
    rows: Vec<Vec<f64>>,
    best_epoch: usize,
    argmax_indices: Vec<usize>,
    val_accuracy: f64,
    rng_seed: u64,
    history: Vec<EpochStats>,
}

/// Serializes a trained selection to the checkpoint JSON schema.
pub fn save_checkpoint(selection: &TrainedSelection, path: &Path) -> Result<(), SelectorError> {
    let file = CheckpointFile {
        n: selection.distribution.slots(),
        pool_size: selection.distribution.pool_size(),
        rows: selection.distribution.rows().to_vec(),
        best_epoch: selection.best_epoch,
        argmax_indices: selection.argmax_indices.clone(),
        val_accuracy: selection.val_accuracy,
        rng_seed: selection.rng_seed,
        history: selection.history.clone(),
    };
    let json = serde_json::to_string_pretty(&file).expect("checkpoint serializes");
    fs::write(path, json + "\n")
        .map_err(|source| SelectorError::Io { path: path.to_path_buf(), source })
}

/// Loads and validates a checkpoint.
pub fn load_checkpoint(path: &Path) -> Result<TrainedSelection, SelectorError> {
    let invalid = |reason: String| SelectorError::CheckpointInvalid {
        path: path.to_path_buf(),
        reason,
    };

    let bytes =
        fs::read(path).map_err(|source| SelectorError::Io { path: path.to_path_buf(), source })?;
    let file: CheckpointFile =
        serde_json::from_slice(&bytes).map_err(|err| invalid(err.to_string()))?;

    let distribution =
        SelectionDistribution::from_rows(file.rows).map_err(|err| invalid(err.to_string()))?;
    if distribution.slots() != file.n || distribution.pool_size() != file.pool_size {
        return Err(invalid(format!(
            "rows are {}x{} but the header says {}x{}",
            distribution.slots(),
            distribution.pool_size(),
            file.n,
            file.pool_size
        )));
    }
    if file.argmax_indices.len() != file.n {
        return Err(invalid(format!(
            "{} argmax indices for {} slots",
            file.argmax_indices.len(),
            file.n
        )));
    }
    let mut seen = vec![false; file.pool_size];
    for &index in &file.argmax_indices {
        if index >= file.pool_size {
            return Err(invalid(format!("argmax index {index} out of range")));
        }
        if std::mem::replace(&mut seen[index], true) {
            return Err(invalid(format!("argmax index {index} repeats")));
        }
    }
    if file.history.is_empty() {
        return Err(invalid("history is empty".into()));
    }
    if file.best_epoch == 0 || file.best_epoch > file.history.len() {
        return Err(invalid(format!("best_epoch {} outside history", file.best_epoch)));
    }
    if !(0.0..=1.0).contains(&file.val_accuracy) {
        return Err(invalid(format!("val_accuracy {} outside [0, 1]", file.val_accuracy)));
    }

    Ok(TrainedSelection {
        distribution,
        best_epoch: file.best_epoch,
        argmax_indices: file.argmax_indices,
        val_accuracy: file.val_accuracy,
        rng_seed: file.rng_seed,
        history: file.history,
    })
}
