//! The four pipeline subcommands: augment, select, eval, report.
//!
//! Each command first folds its own flags into a copy of the resolved run
//! configuration, so the manifest snapshot always records the settings the
//! run actually used. Configuration problems (exit 2) surface before any
//! data file is touched (exit 3).

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use cot_forge::dataset::{load_dataset, LabeledExample};
use cot_forge::eval::{evaluate, hop_report, read_predictions, write_predictions, EvalMode};
use cot_forge::pool::{augment, prune, ExemplarPool};
use cot_forge::selector::{load_checkpoint, render_prompt_prefix, save_checkpoint, train};

use crate::config::RunConfig;
use crate::error::CliError;
use crate::manifest::RunManifest;
use crate::oracle::build_oracle;

pub struct AugmentArgs {
    pub dataset: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub samples_per_question: Option<u32>,
    pub pool_target: Option<usize>,
}

pub struct SelectArgs {
    pub pool: Option<PathBuf>,
    pub train_dataset: Option<PathBuf>,
    pub val_dataset: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub prompt_out: Option<PathBuf>,
    pub n_slots: Option<usize>,
}

pub struct EvalArgs {
    pub checkpoint: Option<PathBuf>,
    pub pool: Option<PathBuf>,
    pub dataset: Option<PathBuf>,
    pub report_out: Option<PathBuf>,
    pub predictions_out: Option<PathBuf>,
    pub self_consistency: bool,
    pub hop_report: bool,
}

pub struct ReportArgs {
    pub predictions: Option<PathBuf>,
}

fn set_if_some<T>(slot: &mut T, value: Option<T>) {
    if let Some(value) = value {
        *slot = value;
    }
}

fn require_dataset(configured: &Option<PathBuf>, role: &str) -> Result<PathBuf, CliError> {
    configured.clone().ok_or_else(|| {
        CliError::config(
            "CONFIG_INVALID",
            format!("no {role} dataset: set [datasets].{role} or pass the dataset flag"),
        )
    })
}

fn load_examples(path: &Path) -> Result<Vec<LabeledExample>, CliError> {
    Ok(load_dataset(path)?)
}

fn ensure_out_dir(config: &RunConfig) -> Result<(), CliError> {
    fs::create_dir_all(&config.out_dir).map_err(|err| {
        CliError::internal(format!(
            "cannot create output directory {}: {err}",
            config.out_dir.display()
        ))
    })
}

pub fn cmd_augment(config: &RunConfig, args: AugmentArgs) -> Result<(), CliError> {
    let started = Instant::now();
    let mut config = config.clone();
    set_if_some(&mut config.datasets.train, args.dataset.map(Some));
    set_if_some(&mut config.pool_path, args.out);
    set_if_some(&mut config.augment.samples_per_question, args.samples_per_question);
    set_if_some(&mut config.pool_target, args.pool_target);

    let dataset_path = require_dataset(&config.datasets.train, "train")?;
    let oracle = build_oracle(&config)?;

    let examples = load_examples(&dataset_path)?;
    let (candidates, failures) = augment(
        &examples,
        &config.prompt,
        config.augment.samples_per_question,
        oracle.backend(),
        &config.augment_options(),
    );
    if candidates.is_empty() {
        if let Some(failure) = failures.into_iter().next() {
            return Err(failure.error.into());
        }
        return Err(CliError::data(
            "DATASET_INVALID",
            format!("dataset {} has no questions to augment", dataset_path.display()),
        ));
    }

    let pool = prune(&candidates, &examples, config.pool_target)?;

    ensure_out_dir(&config)?;
    pool.save(&config.pool_path)?;

    let mut manifest = RunManifest::new("augment", &config);
    manifest.add_artifact("pool", &config.pool_path)?;
    for failure in &failures {
        manifest.failures.insert(failure.question_id.clone(), failure.error.to_string());
    }
    let failure_count = failures.len();
    let manifest_path = manifest.write(started.elapsed(), oracle.counts())?;

    println!(
        "generated {} chains from {} questions; retained {} exemplars (target {})",
        candidates.len(),
        examples.len(),
        pool.exemplars.len(),
        config.pool_target
    );
    if failure_count > 0 {
        println!("{failure_count} question(s) failed at the oracle; see the manifest");
    }
    println!("wrote {}", config.pool_path.display());
    println!("wrote {}", manifest_path.display());
    Ok(())
}

pub fn cmd_select(config: &RunConfig, args: SelectArgs) -> Result<(), CliError> {
    let started = Instant::now();
    let mut config = config.clone();
    set_if_some(&mut config.pool_path, args.pool);
    set_if_some(&mut config.datasets.train, args.train_dataset.map(Some));
    set_if_some(&mut config.datasets.val, args.val_dataset.map(Some));
    set_if_some(&mut config.checkpoint_path, args.out);
    set_if_some(&mut config.prompt_path, args.prompt_out);
    set_if_some(&mut config.n_slots, args.n_slots);

    let train_path = require_dataset(&config.datasets.train, "train")?;
    let val_path = require_dataset(&config.datasets.val, "val")?;
    let oracle = build_oracle(&config)?;

    let pool = ExemplarPool::load(&config.pool_path)?;
    if config.n_slots > pool.exemplars.len() {
        return Err(CliError::data(
            "POOL_TOO_SMALL",
            format!(
                "{} slots requested but pool {} holds {} exemplars",
                config.n_slots,
                config.pool_path.display(),
                pool.exemplars.len()
            ),
        ));
    }
    let train_set = load_examples(&train_path)?;
    let val_set = load_examples(&val_path)?;

    let selection = train(
        &pool,
        &train_set,
        &val_set,
        config.n_slots,
        &config.select.train,
        &config.score_options(),
        oracle.backend(),
    )?;

    for stats in &selection.history {
        println!(
            "epoch {}: train_loss {:.6} val_accuracy {:.4}",
            stats.epoch, stats.mean_train_loss, stats.val_accuracy
        );
    }

    ensure_out_dir(&config)?;
    save_checkpoint(&selection, &config.checkpoint_path)?;
    let frozen_prompt =
        render_prompt_prefix(&pool, &selection.argmax_indices, &config.prompt.style)?;
    fs::write(&config.prompt_path, &frozen_prompt).map_err(|err| {
        CliError::internal(format!("cannot write prompt {}: {err}", config.prompt_path.display()))
    })?;

    let mut manifest = RunManifest::new("select", &config);
    manifest.add_artifact("checkpoint", &config.checkpoint_path)?;
    manifest.add_artifact("frozen_prompt", &config.prompt_path)?;
    let manifest_path = manifest.write(started.elapsed(), oracle.counts())?;

    println!(
        "best epoch {} with val_accuracy {:.4}; argmax combination {:?}",
        selection.best_epoch, selection.val_accuracy, selection.argmax_indices
    );
    println!("wrote {}", config.checkpoint_path.display());
    println!("wrote {}", config.prompt_path.display());
    println!("wrote {}", manifest_path.display());
    Ok(())
}

pub fn cmd_eval(config: &RunConfig, args: EvalArgs) -> Result<(), CliError> {
    let started = Instant::now();
    let mut config = config.clone();
    set_if_some(&mut config.checkpoint_path, args.checkpoint);
    set_if_some(&mut config.pool_path, args.pool);
    set_if_some(&mut config.datasets.test, args.dataset.map(Some));
    set_if_some(&mut config.report_path, args.report_out);
    set_if_some(&mut config.predictions_path, args.predictions_out);
    if args.self_consistency {
        config.eval.mode = EvalMode::SelfConsistency;
    }

    let test_path = require_dataset(&config.datasets.test, "test")?;
    let oracle = build_oracle(&config)?;

    let selection = load_checkpoint(&config.checkpoint_path)?;
    let pool = ExemplarPool::load(&config.pool_path)?;
    if selection.distribution.pool_size() != pool.exemplars.len() {
        return Err(CliError::data(
            "CHECKPOINT_INVALID",
            format!(
                "checkpoint {} was trained over {} exemplars but pool {} holds {}",
                config.checkpoint_path.display(),
                selection.distribution.pool_size(),
                config.pool_path.display(),
                pool.exemplars.len()
            ),
        ));
    }
    let test_set = load_examples(&test_path)?;

    let report = evaluate(
        &selection.argmax_indices,
        &pool,
        &test_set,
        oracle.backend(),
        &config.eval_config(),
        &config.prompt.style,
    )?;

    if args.hop_report {
        hop_report(&report)?;
    }

    ensure_out_dir(&config)?;
    let report_json = serde_json::to_string_pretty(&report).expect("report serializes");
    fs::write(&config.report_path, report_json + "\n").map_err(|err| {
        CliError::internal(format!("cannot write report {}: {err}", config.report_path.display()))
    })?;
    write_predictions(&report, &config.predictions_path)?;

    let mut manifest = RunManifest::new("eval", &config);
    manifest.add_artifact("report", &config.report_path)?;
    manifest.add_artifact("predictions", &config.predictions_path)?;
    for failure in &report.failures {
        manifest.failures.insert(failure.question_id.clone(), failure.error.clone());
    }
    let manifest_path = manifest.write(started.elapsed(), oracle.counts())?;

    print!("{}", report.summary());
    println!("wrote {}", config.report_path.display());
    println!("wrote {}", config.predictions_path.display());
    println!("wrote {}", manifest_path.display());
    Ok(())
}

pub fn cmd_report(config: &RunConfig, args: ReportArgs) -> Result<(), CliError> {
    let predictions_path = args.predictions.unwrap_or_else(|| config.predictions_path.clone());
    let report = read_predictions(&predictions_path)?;
    print!("{}", hop_report(&report)?);
    Ok(())
}
