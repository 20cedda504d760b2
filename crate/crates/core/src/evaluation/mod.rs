//! QA metrics, fixture generation and the benchmark harness.

mod bench;
mod metrics;
mod sweep;
pub mod synthetic;

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use bench::{
    generation_prompt, run_benchmark, summarize, BenchConfig, BenchError, BenchReport, BenchRow,
    BenchSummary, ConfigEcho, REPORT_SCHEMA_VERSION,
};
pub use metrics::{exact_match, normalize_answer, recall_at_k, token_f1};
pub use sweep::{
    parse_sweep, run_sweep, sweep_table, SweepEntry, SweepError, SweepKey, SweepPoint, SweepReport,
    SweepSpec,
};
pub use synthetic::{gen_synthetic, SyntheticError, SyntheticFixture, SyntheticParams};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QaRecord {
    pub id: String,
    pub question: String,
    pub answers: Vec<String>,
    #[serde(default)]
    pub gold_passage_ids: Vec<String>,
}

#[derive(Debug, Error)]
pub enum QaError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("question `{0}` has no gold answer")]
    NoAnswer(String),
    #[error("duplicate question id `{0}`")]
    DuplicateId(String),
}

pub fn parse_qa(content: &str) -> Result<Vec<QaRecord>, QaError> {
    let mut seen = std::collections::HashSet::new();
    let mut out = Vec::new();
    for (n, line) in content.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let rec: QaRecord = serde_json::from_str(line).map_err(|e| QaError::Parse {
            line: n + 1,
            message: e.to_string(),
        })?;
        if rec.answers.is_empty() {
            return Err(QaError::NoAnswer(rec.id));
        }
        if !seen.insert(rec.id.clone()) {
            return Err(QaError::DuplicateId(rec.id));
        }
        out.push(rec);
    }
    Ok(out)
}

pub fn load_qa(path: &Path) -> Result<Vec<QaRecord>, QaError> {
    let content = std::fs::read_to_string(path).map_err(|source| QaError::Io {
        path: path.to_owned(),
        source,
    })?;
    parse_qa(&content)
}
