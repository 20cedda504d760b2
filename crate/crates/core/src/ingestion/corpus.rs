use std::collections::HashSet;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::IngestError;

/// One corpus line: `{"id": ..., "text": ..., "triples": [[h, r, t], ...]}`.
/// `triples` may be absent, in which case extraction must run first.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusRecord {
    pub id: String,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub triples: Option<Vec<[String; 3]>>,
}

/// Parses JSON-lines corpus text. Blank lines are skipped; line numbers in
/// errors are 1-based.
pub fn parse_corpus(content: &str) -> Result<Vec<CorpusRecord>, IngestError> {
    let mut seen = HashSet::new();
    let mut records = Vec::new();
    for (n, line) in content.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let record: CorpusRecord = serde_json::from_str(line).map_err(|e| IngestError::Parse {
            line: n + 1,
            message: e.to_string(),
        })?;
        if !seen.insert(record.id.clone()) {
            return Err(IngestError::DuplicateId(record.id));
        }
        records.push(record);
    }
    Ok(records)
}

pub fn load_corpus(path: &Path) -> Result<Vec<CorpusRecord>, IngestError> {
    let content = std::fs::read_to_string(path).map_err(|e| IngestError::io(path, e))?;
    parse_corpus(&content)
}

pub fn write_corpus<W: Write>(mut out: W, records: &[CorpusRecord]) -> std::io::Result<()> {
    for r in records {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}
