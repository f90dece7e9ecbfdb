//! Shared fixtures and independent oracles for the integration suites.
//!
//! The oracles deliberately avoid the library's algorithms: the simplex
//! oracle solves the KKT condition by bisection instead of sort-and-
//! threshold, and the binomial tail is summed directly from exactly
//! representable coefficients.

#![allow(dead_code)]

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use cot_forge::dataset::LabeledExample;
use cot_forge::oracle::{CannedChain, MockTaskSpec};
use cot_forge::pool::{Exemplar, ExemplarPool};

/// Projection oracle: the simplex projection shifts every entry by one
/// threshold and clips at zero, where the threshold is the unique root of
/// `sum(max(v_i - t, 0)) = 1`. The sum is continuous and strictly decreasing
/// wherever positive, so bisection pins it down to machine precision.
pub fn simplex_oracle(v: &[f64]) -> Vec<f64> {
    let mass = |t: f64| v.iter().map(|&x| (x - t).max(0.0)).sum::<f64>();
    let mut low = v.iter().cloned().fold(f64::INFINITY, f64::min) - 1.0;
    let mut high = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    debug_assert!(mass(low) >= 1.0 && mass(high) <= 1.0);
    for _ in 0..200 {
        let mid = 0.5 * (low + high);
        if mass(mid) >= 1.0 {
            low = mid;
        } else {
            high = mid;
        }
    }
    let t = 0.5 * (low + high);
    v.iter().map(|&x| (x - t).max(0.0)).collect()
}

/// Exact tail probability `P(X >= k_min)` for `X ~ Binomial(n, p)`, summed
/// term by term. For n = 40 every binomial coefficient fits in f64 exactly.
pub fn binomial_tail(n: u32, k_min: u32, p: f64) -> f64 {
    let mut total = 0.0;
    for k in k_min..=n {
        let mut coefficient = 1.0;
        for i in 0..k {
            coefficient = coefficient * (n - i) as f64 / (i + 1) as f64;
        }
        total += coefficient * p.powi(k as i32) * (1.0 - p).powi((n - k) as i32);
    }
    total
}

/// Best achievable mean utility over all `choose`-subsets of `utilities`,
/// by full enumeration.
pub fn brute_force_best_mean_utility(utilities: &[f64], choose: usize) -> f64 {
    fn recurse(utilities: &[f64], start: usize, left: usize, sum: f64, best: &mut f64) {
        if left == 0 {
            *best = best.max(sum);
            return;
        }
        for i in start..=utilities.len() - left {
            recurse(utilities, i + 1, left - 1, sum + utilities[i], best);
        }
    }
    assert!(choose >= 1 && choose <= utilities.len());
    let mut best = f64::NEG_INFINITY;
    recurse(utilities, 0, choose, 0.0, &mut best);
    best / choose as f64
}

/// A labeled example whose question text carries the mock's `[Q:...]` marker.
pub fn marked_example(id: &str, answer: &str, hops: Option<u32>) -> LabeledExample {
    LabeledExample {
        question_id: id.to_string(),
        question: format!("[Q:{id}] what does the ledger say?"),
        answer: answer.to_string(),
        hops,
    }
}

/// A pool exemplar whose question text carries one `[EX:...]` marker.
pub fn marked_exemplar(marker: &str, index: usize) -> Exemplar {
    Exemplar {
        exemplar_id: format!("seed{index}#0"),
        question: format!("[EX:{marker}] entry {index} plus carryover?"),
        rationale: format!("{index} + 1 = {}.", index + 1),
        answer: format!("{}", index + 1),
        hops: 1,
    }
}

/// A pool of `markers.len()` exemplars, one marker each.
pub fn marked_pool(markers: &[&str]) -> ExemplarPool {
    ExemplarPool {
        target_size: markers.len(),
        exemplars: markers
            .iter()
            .enumerate()
            .map(|(i, marker)| marked_exemplar(marker, i))
            .collect(),
    }
}

/// One correct and one incorrect canned chain; `gold` is the correct answer
/// and `foil` the wrong one.
pub fn plain_chains(gold: &str, foil: &str) -> Vec<CannedChain> {
    vec![
        CannedChain {
            rationale: format!("the ledger shows {gold}, so 0 + {gold} = {gold}."),
            answer: gold.to_string(),
            is_correct: true,
        },
        CannedChain {
            rationale: format!("misreading the ledger gives {foil}."),
            answer: foil.to_string(),
            is_correct: false,
        },
    ]
}

/// A mock task spec with the given utilities and one correct/incorrect chain
/// pair for every listed question id.
pub fn task_spec(
    utilities: &[(&str, f64)],
    steepness: f64,
    threshold: f64,
    noise_seed: u64,
    question_ids: &[String],
    gold: &str,
    foil: &str,
) -> MockTaskSpec {
    MockTaskSpec {
        utilities: utilities.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
        steepness,
        threshold,
        noise_seed,
        canned_chains: question_ids
            .iter()
            .map(|id| (id.clone(), plain_chains(gold, foil)))
            .collect::<BTreeMap<_, _>>(),
    }
}

/// Utility assigned to marker `m{i}` in the pipeline workspace: four strong
/// exemplars, the rest weak.
pub fn workspace_utility(index: usize) -> f64 {
    match index {
        2 => 0.9,
        5 => 0.85,
        8 => 0.8,
        11 => 0.76,
        _ => 0.15,
    }
}

/// Writes a self-contained mock-pipeline workspace into `dir`: `config.toml`,
/// `mock-spec.json`, `pool-questions.jsonl` (12 questions whose texts carry
/// one `[EX:m<i>]` utility marker each), and plain train/val/test splits
/// (50/50/20; the test split is hop-annotated). All paths inside the config
/// are relative, so runs started in `dir` stay inside it.
pub fn write_pipeline_workspace(dir: &Path) {
    let pool_ids: Vec<String> = (0..12).map(|i| format!("p{i:02}")).collect();

    let mut utilities = BTreeMap::new();
    let mut canned = BTreeMap::new();
    for (i, id) in pool_ids.iter().enumerate() {
        utilities.insert(format!("m{i}"), workspace_utility(i));
        canned.insert(
            id.clone(),
            vec![
                CannedChain {
                    rationale: "2 + 8 = 10.".into(),
                    answer: "10".into(),
                    is_correct: true,
                },
                CannedChain {
                    rationale: "first 2, then 8 more, 2 + 8 = 10.".into(),
                    answer: "10".into(),
                    is_correct: true,
                },
                CannedChain {
                    rationale: "2 + 9 = 11.".into(),
                    answer: "11".into(),
                    is_correct: false,
                },
            ],
        );
    }
    for (prefix, count) in [("t", 50), ("v", 50), ("s", 20)] {
        for i in 0..count {
            canned.insert(format!("{prefix}{i:03}"), plain_chains("10", "11"));
        }
    }
    let spec = MockTaskSpec {
        utilities,
        steepness: 8.0,
        threshold: 0.4,
        noise_seed: 29,
        canned_chains: canned,
    };
    fs::write(
        dir.join("mock-spec.json"),
        serde_json::to_string_pretty(&spec).expect("spec serializes"),
    )
    .expect("write mock spec");

    let mut pool_lines = String::new();
    for (i, id) in pool_ids.iter().enumerate() {
        let example = LabeledExample {
            question_id: id.clone(),
            question: format!("[EX:m{i}] [Q:{id}] what is 2 + 8?"),
            answer: "10".into(),
            hops: None,
        };
        pool_lines.push_str(&serde_json::to_string(&example).expect("example serializes"));
        pool_lines.push('\n');
    }
    fs::write(dir.join("pool-questions.jsonl"), pool_lines).expect("write pool questions");

    for (file, prefix, count, hops) in [
        ("train.jsonl", "t", 50, false),
        ("val.jsonl", "v", 50, false),
        ("test.jsonl", "s", 20, true),
    ] {
        let mut lines = String::new();
        for i in 0..count {
            let id = format!("{prefix}{i:03}");
            let example = LabeledExample {
                question_id: id.clone(),
                question: format!("[Q:{id}] what do 4 and 6 make?"),
                answer: "10".into(),
                hops: hops.then_some(1 + (i as u32) % 2),
            };
            lines.push_str(&serde_json::to_string(&example).expect("example serializes"));
            lines.push('\n');
        }
        fs::write(dir.join(file), lines).expect("write split");
    }

    fs::write(
        dir.join("config.toml"),
        "backend = \"mock\"\n\
         mock_spec_path = \"mock-spec.json\"\n\
         out_dir = \"out\"\n\
         n_slots = 4\n\
         pool_target = 100\n\
         rng_seed = 7\n\
         \n\
         [datasets]\n\
         train = \"train.jsonl\"\n\
         val = \"val.jsonl\"\n\
         test = \"test.jsonl\"\n\
         \n\
         [augment]\n\
         samples_per_question = 5\n",
    )
    .expect("write config");
}

/// Runs the `cot-forge` binary with `dir` as working directory.
pub fn cli(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cot-forge"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

/// Runs one subcommand against the workspace's `config.toml` and asserts it
/// exits cleanly.
pub fn cli_ok(dir: &Path, args: &[&str]) -> Output {
    let mut full = vec!["--config", "config.toml"];
    full.extend_from_slice(args);
    let output = cli(dir, &full);
    assert!(
        output.status.success(),
        "cot-forge {args:?} failed:\nstdout: {}\nstderr: {}",
        String::from_utf8_lossy(&output.stdout),
        String::from_utf8_lossy(&output.stderr),
    );
    output
}

/// The `code` and `exit` fields of the JSON error a failed run printed on
/// stderr.
pub fn error_code(output: &Output) -> (String, i32) {
    let stderr = String::from_utf8_lossy(&output.stderr);
    let parsed: serde_json::Value = serde_json::from_str(stderr.trim())
        .unwrap_or_else(|e| panic!("stderr is not a JSON error ({e}): {stderr}"));
    (
        parsed["error"]["code"].as_str().expect("code field").to_string(),
        parsed["error"]["exit"].as_i64().expect("exit field") as i32,
    )
}

/// Every `[EX:...]` marker id in `text`, in order of appearance.
pub fn markers_in(text: &str) -> Vec<String> {
    let mut found = Vec::new();
    let mut rest = text;
    while let Some(start) = rest.find("[EX:") {
        rest = &rest[start + 4..];
        let end = rest.find(']').expect("marker closes");
        found.push(rest[..end].to_string());
        rest = &rest[end + 1..];
    }
    found
}
