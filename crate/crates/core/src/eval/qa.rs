//! Multiple-choice question scoring.

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const OPTIONS: usize = 4;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum QaError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("item {index}: {message}")]
    InvalidItem { index: usize, message: String },
}

/// Gold answer as an option index or a one-hot vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Gold {
    Index(usize),
    OneHot(Vec<u8>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QaItem {
    pub question: String,
    pub options: Vec<String>,
    pub gold: Gold,
    #[serde(default)]
    pub predicted: Option<usize>,
}

impl QaItem {
    pub fn gold_index(&self) -> Result<usize, String> {
        if self.options.len() != OPTIONS {
            return Err(format!("expected {OPTIONS} options, got {}", self.options.len()));
        }
        match &self.gold {
            Gold::Index(i) if *i < OPTIONS => Ok(*i),
            Gold::Index(i) => Err(format!("gold index {i} out of range")),
            Gold::OneHot(v) => {
                if v.len() != OPTIONS || v.iter().any(|&x| x > 1) || v.iter().filter(|&&x| x == 1).count() != 1 {
                    return Err(format!("gold {v:?} is not one-hot over {OPTIONS} options"));
                }
                Ok(v.iter().position(|&x| x == 1).unwrap_or_default())
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QaReport {
    pub accuracy: f64,
    pub correct: usize,
    pub total: usize,
    /// Items without a usable prediction; scored as wrong.
    pub unanswered: Vec<usize>,
}

pub fn score_qa(items: &[QaItem]) -> Result<QaReport, QaError> {
    let mut correct = 0;
    let mut unanswered = Vec::new();
    for (index, item) in items.iter().enumerate() {
        let gold = item.gold_index().map_err(|message| QaError::InvalidItem { index, message })?;
        match item.predicted {
            Some(p) if p < OPTIONS => correct += usize::from(p == gold),
            _ => unanswered.push(index),
        }
    }
    let accuracy = if items.is_empty() { 0.0 } else { correct as f64 / items.len() as f64 };
    Ok(QaReport { accuracy, correct, total: items.len(), unanswered })
}

/// One JSON object per non-blank line.
pub fn parse_qa_jsonl(text: &str) -> Result<Vec<QaItem>, QaError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| QaError::Parse { line: i + 1, message: e.to_string() }))
        .collect()
}
