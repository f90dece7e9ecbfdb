//! End-to-end runs of the `cot-forge` binary against mock-pipeline
//! workspaces: the happy path through all four subcommands, cache reuse,
//! flag precedence, and the exit-code contract for every failure class.

mod common;

use std::fs;

use common::{cli, cli_ok, error_code, markers_in, workspace_utility, write_pipeline_workspace};
use cot_forge::pool::ExemplarPool;
use cot_forge::selector::load_checkpoint;

#[test]
fn pipeline_runs_end_to_end_and_selects_strong_exemplars() {
    let dir = tempfile::tempdir().unwrap();
    write_pipeline_workspace(dir.path());

    let augment = cli_ok(dir.path(), &["augment", "--dataset", "pool-questions.jsonl"]);
    let stdout = String::from_utf8_lossy(&augment.stdout);
    assert!(stdout.contains("generated 60 chains from 12 questions"), "{stdout}");
    assert!(stdout.contains("wrote out/pool.json"), "{stdout}");

    let pool = ExemplarPool::load(&dir.path().join("out/pool.json")).unwrap();
    assert!(pool.len() >= 8, "pool holds only {} exemplars", pool.len());
    for exemplar in &pool.exemplars {
        assert_eq!(markers_in(&exemplar.question).len(), 1);
    }

    let select = cli_ok(dir.path(), &["select"]);
    let stdout = String::from_utf8_lossy(&select.stdout);
    assert!(stdout.contains("epoch 1:"), "{stdout}");
    assert!(stdout.contains("best epoch"), "{stdout}");

    let checkpoint = load_checkpoint(&dir.path().join("out/checkpoint.json")).unwrap();
    assert_eq!(checkpoint.argmax_indices.len(), 4);
    assert_eq!(checkpoint.rng_seed, 7);

    // The frozen prompt renders one block per slot; its markers name the
    // chosen exemplars, whose mean hidden utility must beat chance (uniform
    // draws over this pool average well under 0.5).
    let prompt = fs::read_to_string(dir.path().join("out/frozen-prompt.txt")).unwrap();
    let markers = markers_in(&prompt);
    assert_eq!(markers.len(), 4, "prompt: {prompt}");
    let mean_utility: f64 = markers
        .iter()
        .map(|m| workspace_utility(m[1..].parse::<usize>().unwrap()))
        .sum::<f64>()
        / 4.0;
    assert!(mean_utility >= 0.7, "selected markers {markers:?} average {mean_utility}");

    let eval = cli_ok(dir.path(), &["eval", "--hop-report"]);
    let stdout = String::from_utf8_lossy(&eval.stdout);
    assert!(stdout.contains("/ 20 correct"), "{stdout}");
    assert!(stdout.contains("hops  total  correct  accuracy"), "{stdout}");

    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("out/report.json")).unwrap())
            .unwrap();
    assert_eq!(report["total"], 20);
    assert!(report["accuracy"].as_f64().unwrap() >= 0.8);

    let predictions = fs::read_to_string(dir.path().join("out/predictions.jsonl")).unwrap();
    assert_eq!(predictions.lines().count(), 20);

    let report_cmd = cli_ok(dir.path(), &["report"]);
    let stdout = String::from_utf8_lossy(&report_cmd.stdout);
    assert!(stdout.contains("hops  total  correct  accuracy"), "{stdout}");
    assert!(stdout.contains(" all "), "{stdout}");
}

#[test]
fn warm_cache_rerun_issues_no_backend_calls() {
    let dir = tempfile::tempdir().unwrap();
    write_pipeline_workspace(dir.path());
    cli_ok(dir.path(), &["augment", "--dataset", "pool-questions.jsonl"]);
    cli_ok(dir.path(), &["select"]);

    let oracle_counts = |dir: &std::path::Path| -> (u64, u64) {
        let manifest: serde_json::Value = serde_json::from_str(
            &fs::read_to_string(dir.join("out/eval-manifest.json")).unwrap(),
        )
        .unwrap();
        (
            manifest["oracle"]["requests"].as_u64().unwrap(),
            manifest["oracle"]["backend_calls"].as_u64().unwrap(),
        )
    };

    cli_ok(dir.path(), &["--cache-dir", "cache", "eval"]);
    let first = fs::read(dir.path().join("out/report.json")).unwrap();
    assert_eq!(oracle_counts(dir.path()), (20, 20));

    cli_ok(dir.path(), &["--cache-dir", "cache", "eval"]);
    let second = fs::read(dir.path().join("out/report.json")).unwrap();
    assert_eq!(oracle_counts(dir.path()), (20, 0));
    assert_eq!(first, second);
}

#[test]
fn self_consistency_flag_switches_eval_mode_and_never_hurts() {
    let dir = tempfile::tempdir().unwrap();
    write_pipeline_workspace(dir.path());
    cli_ok(dir.path(), &["augment", "--dataset", "pool-questions.jsonl"]);
    cli_ok(dir.path(), &["select"]);

    let accuracy = |dir: &std::path::Path| -> f64 {
        let report: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(dir.join("out/report.json")).unwrap())
                .unwrap();
        report["accuracy"].as_f64().unwrap()
    };

    cli_ok(dir.path(), &["eval"]);
    let greedy = accuracy(dir.path());

    cli_ok(dir.path(), &["eval", "--self-consistency"]);
    let voted = accuracy(dir.path());

    let manifest: serde_json::Value = serde_json::from_str(
        &fs::read_to_string(dir.path().join("out/eval-manifest.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(manifest["config"]["eval"]["mode"], "self_consistency");

    // Majority voting amplifies any per-question correctness above one half,
    // and this pool's frozen combination sits well above it.
    assert!(voted >= greedy, "voting {voted} fell below greedy {greedy}");
    assert!(voted >= 0.8, "voting accuracy {voted}");
}

#[test]
fn seed_flag_overrides_the_config_seed() {
    let dir = tempfile::tempdir().unwrap();
    write_pipeline_workspace(dir.path());
    cli_ok(dir.path(), &["augment", "--dataset", "pool-questions.jsonl"]);

    cli_ok(dir.path(), &["--seed", "99", "select"]);
    let checkpoint = load_checkpoint(&dir.path().join("out/checkpoint.json")).unwrap();
    assert_eq!(checkpoint.rng_seed, 99);
}

#[test]
fn missing_dataset_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    write_pipeline_workspace(dir.path());
    let output = cli(dir.path(), &["--config", "config.toml", "augment", "--dataset", "nope.jsonl"]);
    assert_eq!(output.status.code(), Some(3));
    assert_eq!(error_code(&output), ("DATASET_NOT_FOUND".into(), 3));
}

#[test]
fn oversized_slot_request_reports_pool_too_small() {
    let dir = tempfile::tempdir().unwrap();
    write_pipeline_workspace(dir.path());
    cli_ok(dir.path(), &["augment", "--dataset", "pool-questions.jsonl"]);
    let output = cli(dir.path(), &["--config", "config.toml", "select", "--n-slots", "99"]);
    assert_eq!(output.status.code(), Some(3));
    assert_eq!(error_code(&output), ("POOL_TOO_SMALL".into(), 3));
}

#[test]
fn corrupt_checkpoint_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    write_pipeline_workspace(dir.path());
    cli_ok(dir.path(), &["augment", "--dataset", "pool-questions.jsonl"]);
    fs::write(dir.path().join("broken.json"), "not json {{").unwrap();
    let output = cli(dir.path(), &["--config", "config.toml", "eval", "--checkpoint", "broken.json"]);
    assert_eq!(output.status.code(), Some(3));
    assert_eq!(error_code(&output), ("CHECKPOINT_INVALID".into(), 3));
}

#[test]
fn checkpoint_trained_on_a_different_pool_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    write_pipeline_workspace(dir.path());
    cli_ok(dir.path(), &["augment", "--dataset", "pool-questions.jsonl"]);
    cli_ok(dir.path(), &["select"]);

    // A second pool truncated to 3 exemplars no longer matches the
    // checkpoint's distribution width.
    cli_ok(
        dir.path(),
        &["--out-dir", "other", "augment", "--dataset", "pool-questions.jsonl", "--pool-target", "3"],
    );
    let output = cli(
        dir.path(),
        &[
            "--config",
            "config.toml",
            "eval",
            "--checkpoint",
            "out/checkpoint.json",
            "--pool",
            "other/pool.json",
        ],
    );
    assert_eq!(output.status.code(), Some(3));
    assert_eq!(error_code(&output), ("CHECKPOINT_INVALID".into(), 3));
}

#[test]
fn mock_backend_without_spec_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    write_pipeline_workspace(dir.path());
    let config = fs::read_to_string(dir.path().join("config.toml")).unwrap();
    fs::write(
        dir.path().join("no-spec.toml"),
        config.replace("mock_spec_path = \"mock-spec.json\"\n", ""),
    )
    .unwrap();

    let output = cli(dir.path(), &["--config", "no-spec.toml", "augment"]);
    assert_eq!(output.status.code(), Some(2));
    assert_eq!(error_code(&output), ("CONFIG_INVALID".into(), 2));

    let output =
        cli(dir.path(), &["--config", "no-spec.toml", "--mock-spec", "nowhere.json", "augment"]);
    assert_eq!(output.status.code(), Some(2));
    assert_eq!(error_code(&output), ("MOCK_SPEC_NOT_FOUND".into(), 2));
}

#[test]
fn http_backend_demands_model_and_credential() {
    let dir = tempfile::tempdir().unwrap();
    write_pipeline_workspace(dir.path());

    let output = cli(dir.path(), &["--config", "config.toml", "--backend", "http", "eval"]);
    assert_eq!(error_code(&output), ("CONFIG_INVALID".into(), 2));

    let output = std::process::Command::new(env!("CARGO_BIN_EXE_cot-forge"))
        .current_dir(dir.path())
        .env_remove("COT_FORGE_API_KEY")
        .args(["--config", "config.toml", "--backend", "http", "--model-id", "m", "eval"])
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(2));
    assert_eq!(error_code(&output), ("AUTH_MISSING".into(), 2));
}

#[test]
fn unknown_config_keys_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    write_pipeline_workspace(dir.path());
    let config = fs::read_to_string(dir.path().join("config.toml")).unwrap();
    fs::write(dir.path().join("typo.toml"), format!("pool_traget = 5\n{config}")).unwrap();

    let output = cli(dir.path(), &["--config", "typo.toml", "augment"]);
    assert_eq!(output.status.code(), Some(2));
    assert_eq!(error_code(&output), ("CONFIG_INVALID".into(), 2));
}
