//! JSON-lines dataset ingestion. One question object per line; image paths
//! are resolved relative to the dataset file's directory.

use std::fs;
use std::path::Path;

use pnp_core::eval::QuestionRecord;

use crate::error::{FileError, Result};

#[derive(serde::Deserialize)]
struct RawRecord {
    id: String,
    image: String,
    question: String,
    answers: Vec<String>,
    #[serde(default)]
    human_captions: Option<Vec<String>>,
}

pub fn load_dataset(path: &Path) -> Result<Vec<QuestionRecord>> {
    let text = fs::read_to_string(path).map_err(|e| FileError::io(path, e))?;
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    let mut records = Vec::new();
    let mut seen = std::collections::BTreeSet::new();
    for (idx, line) in text.lines().enumerate() {
        let lineno = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let raw: RawRecord = serde_json::from_str(line)
            .map_err(|e| FileError::format(path, format!("line {lineno}: {e}")))?;
        if !seen.insert(raw.id.clone()) {
            return Err(FileError::format(
                path,
                format!("line {lineno}: duplicate question id '{}'", raw.id),
            ));
        }
        let record = QuestionRecord {
            id: raw.id,
            image_ref: base.join(&raw.image).display().to_string(),
            question: raw.question,
            answers: raw.answers,
            human_captions: raw.human_captions,
        };
        record
            .validate()
            .map_err(|e| FileError::format(path, format!("line {lineno}: {e}")))?;
        records.push(record);
    }
    Ok(records)
}
