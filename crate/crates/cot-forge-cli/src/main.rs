//! `cot-forge`: build, tune, and score chain-of-thought exemplar prompts
//! against a completions backend.
//!
//! The pipeline runs in three cacheable stages — `augment` generates and
//! prunes an exemplar pool, `select` trains the per-slot distributions and
//! freezes the best combination, `eval` scores that combination on a test
//! set — plus `report` for re-rendering the per-hop table from a predictions
//! file. Failures print one machine-readable JSON line on stderr and exit
//! with 2 (config), 3 (data), 4 (oracle), or 5 (internal invariant).

mod commands;
mod config;
mod error;
mod manifest;
mod oracle;

use std::path::PathBuf;

use clap::{Parser, Subcommand};

use crate::commands::{AugmentArgs, EvalArgs, ReportArgs, SelectArgs};
use crate::config::{BackendKind, FileConfig, GlobalOverrides, RunConfig};
use crate::error::CliError;

#[derive(Parser)]
#[command(
    name = "cot-forge",
    version,
    about = "Augment, select, and evaluate chain-of-thought exemplar prompts"
)]
struct Cli {
    /// TOML configuration file; flags override its values.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Run seed; drives sampling, shuffling, and the checkpoint's RNG state.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Completion backend.
    #[arg(long, global = true, value_enum)]
    backend: Option<BackendKind>,

    /// Base URL of the completions endpoint (http backend).
    #[arg(long, global = true, value_name = "URL")]
    base_url: Option<String>,

    /// Model identifier sent with every completion request.
    #[arg(long, global = true, value_name = "ID")]
    model_id: Option<String>,

    /// Directory for the response cache; omit to disable caching.
    #[arg(long, global = true, value_name = "DIR")]
    cache_dir: Option<PathBuf>,

    /// Directory for artifacts and manifests.
    #[arg(long, global = true, value_name = "DIR")]
    out_dir: Option<PathBuf>,

    /// Maximum concurrent completion requests.
    #[arg(long, global = true)]
    parallelism: Option<usize>,

    /// Mock task spec JSON (mock backend).
    #[arg(long, global = true, value_name = "PATH")]
    mock_spec: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate rationale chains for labeled questions and prune the
    /// wrong-answer ones into an exemplar pool.
    Augment {
        /// Labeled questions (JSONL); defaults to [datasets].train.
        #[arg(long, value_name = "PATH")]
        dataset: Option<PathBuf>,

        /// Pool output path; defaults to <out_dir>/pool.json.
        #[arg(long, value_name = "PATH")]
        out: Option<PathBuf>,

        /// Chains sampled per question.
        #[arg(long)]
        samples_per_question: Option<u32>,

        /// Maximum exemplars kept in the pool.
        #[arg(long)]
        pool_target: Option<usize>,
    },

    /// Train per-slot exemplar distributions and freeze the best
    /// combination by validation accuracy.
    Select {
        /// Exemplar pool; defaults to <out_dir>/pool.json.
        #[arg(long, value_name = "PATH")]
        pool: Option<PathBuf>,

        /// Training questions (JSONL); defaults to [datasets].train.
        #[arg(long, value_name = "PATH")]
        train_dataset: Option<PathBuf>,

        /// Validation questions (JSONL); defaults to [datasets].val.
        #[arg(long, value_name = "PATH")]
        val_dataset: Option<PathBuf>,

        /// Checkpoint output path; defaults to <out_dir>/checkpoint.json.
        #[arg(long, value_name = "PATH")]
        out: Option<PathBuf>,

        /// Frozen prompt output path; defaults to <out_dir>/frozen-prompt.txt.
        #[arg(long, value_name = "PATH")]
        prompt_out: Option<PathBuf>,

        /// Exemplar slots in the prompt.
        #[arg(long)]
        n_slots: Option<usize>,
    },

    /// Score the frozen combination on a test dataset.
    Eval {
        /// Trained checkpoint; defaults to <out_dir>/checkpoint.json.
        #[arg(long, value_name = "PATH")]
        checkpoint: Option<PathBuf>,

        /// Exemplar pool; defaults to <out_dir>/pool.json.
        #[arg(long, value_name = "PATH")]
        pool: Option<PathBuf>,

        /// Test questions (JSONL); defaults to [datasets].test.
        #[arg(long, value_name = "PATH")]
        dataset: Option<PathBuf>,

        /// Report output path; defaults to <out_dir>/report.json.
        #[arg(long, value_name = "PATH")]
        report_out: Option<PathBuf>,

        /// Predictions output path; defaults to <out_dir>/predictions.jsonl.
        #[arg(long, value_name = "PATH")]
        predictions_out: Option<PathBuf>,

        /// Sample the oracle repeatedly and answer by majority vote.
        #[arg(long)]
        self_consistency: bool,

        /// Require hop annotations and include the per-hop accuracy table.
        #[arg(long)]
        hop_report: bool,
    },

    /// Render the per-hop accuracy table from a predictions file.
    Report {
        /// Predictions (JSONL); defaults to <out_dir>/predictions.jsonl.
        #[arg(long, value_name = "PATH")]
        predictions: Option<PathBuf>,
    },
}

fn run(cli: Cli) -> Result<(), CliError> {
    let file = match &cli.config {
        Some(path) => FileConfig::load(path)?,
        None => FileConfig::default(),
    };
    let overrides = GlobalOverrides {
        seed: cli.seed,
        backend: cli.backend,
        base_url: cli.base_url,
        model_id: cli.model_id,
        cache_dir: cli.cache_dir,
        out_dir: cli.out_dir,
        parallelism: cli.parallelism,
        mock_spec: cli.mock_spec,
    };
    let config = RunConfig::resolve(file, &overrides)?;

    match cli.command {
        Command::Augment { dataset, out, samples_per_question, pool_target } => commands::cmd_augment(
            &config,
            AugmentArgs { dataset, out, samples_per_question, pool_target },
        ),
        Command::Select { pool, train_dataset, val_dataset, out, prompt_out, n_slots } => {
            commands::cmd_select(
                &config,
                SelectArgs { pool, train_dataset, val_dataset, out, prompt_out, n_slots },
            )
        }
        Command::Eval {
            checkpoint,
            pool,
            dataset,
            report_out,
            predictions_out,
            self_consistency,
            hop_report,
        } => commands::cmd_eval(
            &config,
            EvalArgs {
                checkpoint,
                pool,
                dataset,
                report_out,
                predictions_out,
                self_consistency,
                hop_report,
            },
        ),
        Command::Report { predictions } => {
            commands::cmd_report(&config, ReportArgs { predictions })
        }
    }
}

fn main() {
    let cli = Cli::parse();
    if let Err(err) = run(cli) {
        eprintln!("{}", err.render_json());
        std::process::exit(err.exit);
    }
}
