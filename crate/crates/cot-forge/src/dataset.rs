//! Labeled question/answer datasets in JSON Lines form: one object per line
//! with `question_id`, `question`, `answer`, and an optional `hops` count.

use std::collections::HashSet;
use std::fs;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::DatasetError;
use crate::eval::normalize_answer;

/// One labeled question.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledExample {
    pub question_id: String,
    pub question: String,
    /// Gold answer; must survive normalization non-empty.
    pub answer: String,
    /// Reasoning-step annotation, when the dataset provides one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hops: Option<u32>,
}

/// Loads a dataset, skipping blank lines, and enforces that question ids are
/// unique and every gold answer normalizes non-empty.
pub fn load_dataset(path: &Path) -> Result<Vec<LabeledExample>, DatasetError> {
    let file = fs::File::open(path)
        .map_err(|source| DatasetError::Io { path: path.to_path_buf(), source })?;

    let mut examples = Vec::new();
    let mut ids: HashSet<String> = HashSet::new();
    for (index, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|source| DatasetError::Io { path: path.to_path_buf(), source })?;
        if line.trim().is_empty() {
            continue;
        }
        let number = index + 1;
        let example: LabeledExample = serde_json::from_str(&line).map_err(|source| {
            DatasetError::Record { path: path.to_path_buf(), line: number, source }
        })?;
        if !ids.insert(example.question_id.clone()) {
            return Err(DatasetError::DuplicateId {
                path: path.to_path_buf(),
                line: number,
                id: example.question_id,
            });
        }
        if normalize_answer(&example.answer).is_empty() {
            return Err(DatasetError::EmptyGold {
                path: path.to_path_buf(),
                line: number,
                id: example.question_id,
            });
        }
        examples.push(example);
    }
    Ok(examples)
}

/// Writes a dataset as JSON Lines, one example per line.
pub fn save_dataset(examples: &[LabeledExample], path: &Path) -> Result<(), DatasetError> {
    let mut out = String::new();
    for example in examples {
        out.push_str(&serde_json::to_string(example).expect("example serializes"));
        out.push('\n');
    }
    fs::write(path, out).map_err(|source| DatasetError::Io { path: path.to_path_buf(), source })
}
