use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde_json::Value;
use sha2::{Digest, Sha256};
use tracing::warn;

use super::{CorpusRecord, IngestError};
use crate::kg_index::canonicalize_triplet;
use crate::service::{ChatClient, ChatMessage, ServiceError};

pub const EXTRACTION_PROMPT_VERSION: &str = "openie-v1";
pub const EXTRACTION_PROMPT: &str = include_str!("../../prompts/openie_v1.txt");

/// Hex SHA-256 of the prompt template, recorded in bundle manifests.
pub fn extraction_prompt_sha256() -> String {
    hex::encode(Sha256::digest(EXTRACTION_PROMPT.as_bytes()))
}

#[derive(Debug, Clone)]
pub struct ExtractionConfig {
    pub max_in_flight: usize,
    /// Extra attempts after an unparseable reply.
    pub parse_retries: usize,
}

impl Default for ExtractionConfig {
    fn default() -> Self {
        Self {
            max_in_flight: 4,
            parse_retries: 1,
        }
    }
}

/// Pulls a `[[subject, relation, object], ...]` array out of a model reply.
///
/// Surrounding prose or code fences are tolerated. Entries that are not three
/// strings, or that canonicalize to an empty field, are dropped. Returns
/// `None` when no JSON array can be found.
pub fn parse_triples_reply(reply: &str) -> Option<Vec<[String; 3]>> {
    let start = reply.find('[')?;
    let end = reply.rfind(']')?;
    if end < start {
        return None;
    }
    let value: Value = serde_json::from_str(&reply[start..=end]).ok()?;
    let items = value.as_array()?;
    Some(
        items
            .iter()
            .filter_map(|item| {
                let parts = item.as_array()?;
                match parts.as_slice() {
                    [h, r, t] => {
                        let (h, r, t) = (h.as_str()?, r.as_str()?, t.as_str()?);
                        canonicalize_triplet(h, r, t).ok()?;
                        Some([h.to_owned(), r.to_owned(), t.to_owned()])
                    }
                    _ => None,
                }
            })
            .collect(),
    )
}

fn extract_one(
    client: &ChatClient,
    record: &CorpusRecord,
    config: &ExtractionConfig,
) -> Result<Vec<[String; 3]>, ServiceError> {
    let prompt = EXTRACTION_PROMPT.replace("{passage}", &record.text);
    let messages = [ChatMessage::user(prompt)];
    for attempt in 0..=config.parse_retries {
        match client.complete(&messages) {
            Ok(reply) => {
                if let Some(triples) = parse_triples_reply(&reply) {
                    return Ok(triples);
                }
                warn!(id = %record.id, attempt, "extraction reply is not a triple array");
            }
            Err(e @ ServiceError::Unreachable(_)) | Err(e @ ServiceError::NotConfigured(_)) => {
                return Err(e)
            }
            Err(e) => warn!(id = %record.id, attempt, error = %e, "extraction request failed"),
        }
    }
    warn!(id = %record.id, "keeping passage without triples");
    Ok(Vec::new())
}

/// Fills in `triples` for every record that lacks them. Records that already
/// carry triples are passed through untouched; ids and texts are never
/// modified. Only an unreachable service aborts the run.
pub fn extract_triples(
    records: Vec<CorpusRecord>,
    client: &ChatClient,
    config: &ExtractionConfig,
) -> Result<Vec<CorpusRecord>, IngestError> {
    let pending: Vec<usize> = records
        .iter()
        .enumerate()
        .filter(|(_, r)| r.triples.is_none())
        .map(|(i, _)| i)
        .collect();
    let results: Vec<Mutex<Option<Vec<[String; 3]>>>> =
        pending.iter().map(|_| Mutex::new(None)).collect();
    let next = AtomicUsize::new(0);
    let fatal: Mutex<Option<ServiceError>> = Mutex::new(None);

    std::thread::scope(|scope| {
        for _ in 0..config.max_in_flight.max(1).min(pending.len()) {
            scope.spawn(|| loop {
                let slot = next.fetch_add(1, Ordering::Relaxed);
                if slot >= pending.len() || fatal.lock().unwrap().is_some() {
                    break;
                }
                match extract_one(client, &records[pending[slot]], config) {
                    Ok(t) => *results[slot].lock().unwrap() = Some(t),
                    Err(e) => {
                        fatal.lock().unwrap().get_or_insert(e);
                        break;
                    }
                }
            });
        }
    });

    if let Some(e) = fatal.into_inner().unwrap() {
        return Err(e.into());
    }
    let mut records = records;
    for (slot, &i) in pending.iter().enumerate() {
        records[i].triples = results[slot].lock().unwrap().take();
    }
    Ok(records)
}
