//! Run configuration: a TOML file merged with command-line flags, resolved
//! against built-in defaults (flags > file > defaults).

use std::fs;
use std::path::{Path, PathBuf};

use clap::ValueEnum;
use cot_forge::eval::{EvalConfig, EvalMode};
use cot_forge::pool::{AugmentOptions, SeedChain, SeedPrompt};
use cot_forge::selector::{LossMode, OptimizerKind, ScoreOptions, TrainConfig};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    Http,
    Mock,
}

/// The configuration file as written: every key optional, unknown keys
/// rejected. Loading and re-serializing preserves exactly the keys that were
/// set.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub backend: Option<BackendKind>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub base_url: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub model_id: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cache_dir: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out_dir: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pool_path: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub checkpoint_path: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub prompt_path: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub report_path: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub predictions_path: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mock_spec_path: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_slots: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pool_target: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rng_seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub parallelism: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub datasets: Option<DatasetSection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub augment: Option<AugmentSection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub select: Option<SelectSection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eval: Option<EvalSection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub prompt: Option<PromptSection>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub train: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub val: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub test: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AugmentSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub samples_per_question: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub temperature: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_tokens: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stop: Option<Vec<String>>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SelectSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sample_size: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub learning_rate: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub epochs: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub batch_size: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub optimizer: Option<OptimizerKind>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub adam_betas: Option<(f64, f64)>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub adam_eps: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub weight_decay: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_tokens: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub logprobs_k: Option<u8>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stop: Option<Vec<String>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub loss_mode: Option<LossMode>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mode: Option<EvalMode>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sc_samples: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sc_temperature: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_tokens: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stop: Option<Vec<String>>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PromptSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub question_prefix: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub step_trigger: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed_chains: Option<Vec<SeedChain>>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<FileConfig, CliError> {
        let text = fs::read_to_string(path).map_err(|err| {
            CliError::config("CONFIG_INVALID", format!("cannot read config {}: {err}", path.display()))
        })?;
        toml::from_str(&text).map_err(|err| {
            CliError::config("CONFIG_INVALID", format!("config {}: {err}", path.display()))
        })
    }
}

/// Global command-line flags that override file values.
#[derive(Debug, Clone, Default)]
pub struct GlobalOverrides {
    pub seed: Option<u64>,
    pub backend: Option<BackendKind>,
    pub base_url: Option<String>,
    pub model_id: Option<String>,
    pub cache_dir: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
    pub parallelism: Option<usize>,
    pub mock_spec: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct DatasetPaths {
    pub train: Option<PathBuf>,
    pub val: Option<PathBuf>,
    pub test: Option<PathBuf>,
}

#[derive(Debug, Clone, Serialize)]
pub struct AugmentSettings {
    pub samples_per_question: u32,
    pub temperature: f64,
    pub max_tokens: u32,
    pub stop: Vec<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SelectSettings {
    pub train: TrainConfig,
    pub max_tokens: u32,
    pub logprobs_k: u8,
    pub stop: Vec<String>,
    pub loss_mode: LossMode,
}

#[derive(Debug, Clone, Serialize)]
pub struct EvalSettings {
    pub mode: EvalMode,
    pub sc_samples: u32,
    pub sc_temperature: f64,
    pub max_tokens: u32,
    pub stop: Vec<String>,
}

/// Fully resolved run configuration; this exact struct is snapshotted into
/// the manifest.
#[derive(Debug, Clone, Serialize)]
pub struct RunConfig {
    pub backend: BackendKind,
    pub base_url: Option<String>,
    pub model_id: String,
    pub cache_dir: Option<PathBuf>,
    pub out_dir: PathBuf,
    pub pool_path: PathBuf,
    pub checkpoint_path: PathBuf,
    pub prompt_path: PathBuf,
    pub report_path: PathBuf,
    pub predictions_path: PathBuf,
    pub mock_spec_path: Option<PathBuf>,
    pub n_slots: usize,
    pub pool_target: usize,
    pub rng_seed: u64,
    pub parallelism: usize,
    pub datasets: DatasetPaths,
    pub augment: AugmentSettings,
    pub select: SelectSettings,
    pub eval: EvalSettings,
    pub prompt: SeedPrompt,
}

impl RunConfig {
    pub fn resolve(file: FileConfig, flags: &GlobalOverrides) -> Result<RunConfig, CliError> {
        let out_dir = flags
            .out_dir
            .clone()
            .or(file.out_dir)
            .unwrap_or_else(|| PathBuf::from("."));
        let rng_seed = flags.seed.or(file.rng_seed).unwrap_or(17);
        let parallelism = flags.parallelism.or(file.parallelism).unwrap_or(4);

        let datasets = file.datasets.unwrap_or_default();
        let augment_section = file.augment.unwrap_or_default();
        let select_section = file.select.unwrap_or_default();
        let eval_section = file.eval.unwrap_or_default();
        let prompt_section = file.prompt.unwrap_or_default();

        let train_defaults = TrainConfig::default();
        let select = SelectSettings {
            train: TrainConfig {
                sample_size: select_section.sample_size.unwrap_or(train_defaults.sample_size),
                learning_rate: select_section
                    .learning_rate
                    .unwrap_or(train_defaults.learning_rate),
                epochs: select_section.epochs.unwrap_or(train_defaults.epochs),
                batch_size: select_section.batch_size.unwrap_or(train_defaults.batch_size),
                optimizer: select_section.optimizer.unwrap_or(train_defaults.optimizer),
                adam_betas: select_section.adam_betas.unwrap_or(train_defaults.adam_betas),
                adam_eps: select_section.adam_eps.unwrap_or(train_defaults.adam_eps),
                weight_decay: select_section.weight_decay.unwrap_or(train_defaults.weight_decay),
                rng_seed,
            },
            max_tokens: select_section.max_tokens.unwrap_or(256),
            logprobs_k: select_section.logprobs_k.unwrap_or(5),
            stop: select_section.stop.unwrap_or_default(),
            loss_mode: select_section.loss_mode.unwrap_or(LossMode::LogProb),
        };

        let config = RunConfig {
            backend: flags.backend.or(file.backend).unwrap_or(BackendKind::Mock),
            base_url: flags.base_url.clone().or(file.base_url),
            model_id: flags.model_id.clone().or(file.model_id).unwrap_or_default(),
            cache_dir: flags.cache_dir.clone().or(file.cache_dir),
            pool_path: file.pool_path.unwrap_or_else(|| out_dir.join("pool.json")),
            checkpoint_path: file
                .checkpoint_path
                .unwrap_or_else(|| out_dir.join("checkpoint.json")),
            prompt_path: file.prompt_path.unwrap_or_else(|| out_dir.join("frozen-prompt.txt")),
            report_path: file.report_path.unwrap_or_else(|| out_dir.join("report.json")),
            predictions_path: file
                .predictions_path
                .unwrap_or_else(|| out_dir.join("predictions.jsonl")),
            mock_spec_path: flags.mock_spec.clone().or(file.mock_spec_path),
            n_slots: file.n_slots.unwrap_or(4),
            pool_target: file.pool_target.unwrap_or(100),
            rng_seed,
            parallelism,
            datasets: DatasetPaths {
                train: datasets.train,
                val: datasets.val,
                test: datasets.test,
            },
            augment: AugmentSettings {
                samples_per_question: augment_section.samples_per_question.unwrap_or(5),
                temperature: augment_section.temperature.unwrap_or(0.7),
                max_tokens: augment_section.max_tokens.unwrap_or(256),
                stop: augment_section.stop.unwrap_or_default(),
            },
            select,
            eval: EvalSettings {
                mode: eval_section.mode.unwrap_or(EvalMode::Greedy),
                sc_samples: eval_section.sc_samples.unwrap_or(40),
                sc_temperature: eval_section.sc_temperature.unwrap_or(0.7),
                max_tokens: eval_section.max_tokens.unwrap_or(256),
                stop: eval_section.stop.unwrap_or_default(),
            },
            prompt: SeedPrompt {
                seed_chains: prompt_section.seed_chains.unwrap_or_default(),
                style: cot_forge::pool::PromptStyle {
                    question_prefix: prompt_section.question_prefix.unwrap_or_else(|| "Q:".into()),
                    step_trigger: prompt_section.step_trigger,
                },
            },
            out_dir,
        };
        config.validate()?;
        Ok(config)
    }

    fn validate(&self) -> Result<(), CliError> {
        if self.n_slots == 0 {
            return Err(CliError::config("CONFIG_INVALID", "n_slots must be >= 1"));
        }
        if self.n_slots > self.pool_target {
            return Err(CliError::config(
                "CONFIG_INVALID",
                format!("n_slots {} exceeds pool_target {}", self.n_slots, self.pool_target),
            ));
        }
        if self.parallelism == 0 {
            return Err(CliError::config("CONFIG_INVALID", "parallelism must be >= 1"));
        }
        if self.augment.samples_per_question == 0 {
            return Err(CliError::config(
                "CONFIG_INVALID",
                "augment.samples_per_question must be >= 1",
            ));
        }
        if self.eval.sc_samples == 0 {
            return Err(CliError::config("CONFIG_INVALID", "eval.sc_samples must be >= 1"));
        }
        Ok(())
    }

    /// Options for the chain-generation stage.
    pub fn augment_options(&self) -> AugmentOptions {
        AugmentOptions {
            model_id: self.model_id.clone(),
            temperature: self.augment.temperature,
            max_tokens: self.augment.max_tokens,
            stop: self.augment.stop.clone(),
            parallelism: self.parallelism,
        }
    }

    /// Options for combination scoring during selection.
    pub fn score_options(&self) -> ScoreOptions {
        ScoreOptions {
            style: self.prompt.style.clone(),
            model_id: self.model_id.clone(),
            max_tokens: self.select.max_tokens,
            logprobs_k: self.select.logprobs_k,
            stop: self.select.stop.clone(),
            parallelism: self.parallelism,
            loss_mode: self.select.loss_mode,
        }
    }

    /// Options for the evaluation stage.
    pub fn eval_config(&self) -> EvalConfig {
        EvalConfig {
            mode: self.eval.mode,
            sc_samples: self.eval.sc_samples,
            sc_temperature: self.eval.sc_temperature,
            model_id: self.model_id.clone(),
            max_tokens: self.eval.max_tokens,
            stop: self.eval.stop.clone(),
            parallelism: self.parallelism,
        }
    }
}
