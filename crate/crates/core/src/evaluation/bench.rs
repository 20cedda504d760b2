use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::metrics::{exact_match, recall_at_k, token_f1};
use super::QaRecord;
use crate::encoding::Encoder;
use crate::hypernode::ExpansionConfig;
use crate::kg_index::KnowledgeGraph;
use crate::localization::{retrieve, HybridConfig, RetrievalError, ScoredPassage};
use crate::service::{ChatClient, ChatMessage, ServiceError};

pub const REPORT_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("question `{id}`: {source}")]
    Retrieval {
        id: String,
        #[source]
        source: RetrievalError,
    },
    #[error("question `{id}`: answer generation failed: {source}")]
    Generation {
        id: String,
        #[source]
        source: ServiceError,
    },
    #[error("could not start worker pool: {0}")]
    Pool(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BenchConfig {
    pub expansion: ExpansionConfig,
    pub hybrid: HybridConfig,
    /// Worker threads. Each query is timed on the worker that runs it.
    pub jobs: usize,
    /// Timed retrievals per question; the row keeps the fastest.
    pub repeats: usize,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            expansion: ExpansionConfig::default(),
            hybrid: HybridConfig::default(),
            jobs: 1,
            repeats: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigEcho {
    pub encoder_id: String,
    pub hops: usize,
    pub seeds: usize,
    pub beam: usize,
    pub quota: usize,
    pub topk: usize,
    pub generation: bool,
    pub repeats: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub id: String,
    pub latency_seconds: f64,
    pub retrieved: Vec<String>,
    /// Absent when the question carries no gold passage ids.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub recall_hit: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub prediction: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub f1: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub em: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchSummary {
    pub queries: usize,
    pub mean_latency_seconds: f64,
    pub median_latency_seconds: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub recall_at_k: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mean_f1: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub em_rate: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub schema_version: u32,
    pub config: ConfigEcho,
    pub summary: BenchSummary,
    pub rows: Vec<BenchRow>,
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

/// Aggregates, recomputable from the rows alone.
pub fn summarize(rows: &[BenchRow]) -> BenchSummary {
    let mut latencies: Vec<f64> = rows.iter().map(|r| r.latency_seconds).collect();
    latencies.sort_by(f64::total_cmp);
    let median = match latencies.len() {
        0 => 0.0,
        n if n % 2 == 1 => latencies[n / 2],
        n => (latencies[n / 2 - 1] + latencies[n / 2]) / 2.0,
    };
    let bit = |b: bool| if b { 1.0 } else { 0.0 };
    BenchSummary {
        queries: rows.len(),
        mean_latency_seconds: mean(latencies.iter().copied()).unwrap_or(0.0),
        median_latency_seconds: median,
        recall_at_k: mean(rows.iter().filter_map(|r| r.recall_hit).map(bit)),
        mean_f1: mean(rows.iter().filter_map(|r| r.f1)),
        em_rate: mean(rows.iter().filter_map(|r| r.em).map(bit)),
    }
}

/// Prompt handed to the answer generator: numbered passages, then the question.
pub fn generation_prompt(question: &str, passages: &[&str]) -> String {
    let mut prompt = String::from(
        "Answer the question using only the passages below. \
         Reply with the shortest possible answer phrase and nothing else.\n\n",
    );
    for (i, text) in passages.iter().enumerate() {
        prompt.push_str(&format!("[{}] {}\n", i + 1, text));
    }
    prompt.push_str(&format!("\nQuestion: {question}\nAnswer:"));
    prompt
}

fn retrieval_error(record: &QaRecord) -> impl FnOnce(RetrievalError) -> BenchError + '_ {
    move |source| BenchError::Retrieval {
        id: record.id.clone(),
        source,
    }
}

/// Times one question under every config. Repeats go round-robin over the
/// configs so slow drift in machine speed hits all of them alike; each
/// config keeps its fastest repeat.
fn run_question(
    graph: &KnowledgeGraph,
    encoder: &dyn Encoder,
    record: &QaRecord,
    configs: &[BenchConfig],
    repeats: usize,
    generator: Option<&ChatClient>,
) -> Result<Vec<BenchRow>, BenchError> {
    let mut latencies = vec![f64::INFINITY; configs.len()];
    let mut results = vec![None; configs.len()];
    for _ in 0..repeats.max(1) {
        for (i, config) in configs.iter().enumerate() {
            let start = Instant::now();
            let r = retrieve(
                graph,
                encoder,
                &record.question,
                &config.expansion,
                &config.hybrid,
            )
            .map_err(retrieval_error(record))?;
            latencies[i] = latencies[i].min(start.elapsed().as_secs_f64());
            results[i] = Some(r);
        }
    }
    configs
        .iter()
        .zip(latencies)
        .zip(results)
        .map(|((config, latency_seconds), result)| {
            let passages = result.expect("at least one repeat").passages;
            finish_row(graph, record, config, latency_seconds, passages, generator)
        })
        .collect()
}

fn finish_row(
    graph: &KnowledgeGraph,
    record: &QaRecord,
    config: &BenchConfig,
    latency_seconds: f64,
    passages: Vec<ScoredPassage>,
    generator: Option<&ChatClient>,
) -> Result<BenchRow, BenchError> {
    let retrieved: Vec<String> = passages.into_iter().map(|p| p.id).collect();
    let recall_hit = (!record.gold_passage_ids.is_empty())
        .then(|| recall_at_k(&retrieved, &record.gold_passage_ids, config.hybrid.total));

    let mut row = BenchRow {
        id: record.id.clone(),
        latency_seconds,
        retrieved,
        recall_hit,
        prediction: None,
        f1: None,
        em: None,
    };
    if let Some(client) = generator {
        let texts: Vec<&str> = row
            .retrieved
            .iter()
            .filter_map(|id| graph.passage(id).map(|p| p.text.as_str()))
            .collect();
        let prompt = generation_prompt(&record.question, &texts);
        let answer = client
            .complete(&[ChatMessage::user(prompt)])
            .map_err(|source| BenchError::Generation {
                id: record.id.clone(),
                source,
            })?;
        let answer = answer.trim().to_owned();
        row.f1 = Some(token_f1(&answer, &record.answers));
        row.em = Some(exact_match(&answer, &record.answers));
        row.prediction = Some(answer);
    }
    Ok(row)
}

/// Evaluates every config on every question; returns one report per config.
/// Worker count and repeat count come from `configs[0]`.
pub(crate) fn evaluate(
    graph: &KnowledgeGraph,
    encoder: &dyn Encoder,
    qa: &[QaRecord],
    configs: &[BenchConfig],
    generator: Option<&ChatClient>,
) -> Result<Vec<BenchReport>, BenchError> {
    let Some(first) = configs.first() else {
        return Ok(Vec::new());
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(first.jobs.max(1))
        .build()
        .map_err(|e| BenchError::Pool(e.to_string()))?;
    let per_question = pool.install(|| {
        qa.par_iter()
            .map(|r| run_question(graph, encoder, r, configs, first.repeats, generator))
            .collect::<Result<Vec<_>, _>>()
    })?;

    let mut columns: Vec<Vec<BenchRow>> = vec![Vec::with_capacity(qa.len()); configs.len()];
    for rows in per_question {
        for (i, row) in rows.into_iter().enumerate() {
            columns[i].push(row);
        }
    }
    Ok(configs
        .iter()
        .zip(columns)
        .map(|(config, mut rows)| {
            rows.sort_by(|a, b| a.id.cmp(&b.id));
            BenchReport {
                schema_version: REPORT_SCHEMA_VERSION,
                config: ConfigEcho {
                    encoder_id: encoder.id(),
                    hops: config.expansion.hops,
                    seeds: config.expansion.seeds,
                    beam: config.expansion.beam,
                    quota: config.hybrid.quota,
                    topk: config.hybrid.total,
                    generation: generator.is_some(),
                    repeats: first.repeats.max(1),
                },
                summary: summarize(&rows),
                rows,
            }
        })
        .collect())
}

/// Runs every question through `retrieve`, optionally generating answers.
/// Latency covers retrieval only; index loading and generation are excluded.
/// Rows come back sorted by question id whatever the worker count.
pub fn run_benchmark(
    graph: &KnowledgeGraph,
    encoder: &dyn Encoder,
    qa: &[QaRecord],
    config: &BenchConfig,
    generator: Option<&ChatClient>,
) -> Result<BenchReport, BenchError> {
    let mut reports = evaluate(graph, encoder, qa, std::slice::from_ref(config), generator)?;
    Ok(reports.pop().expect("one config, one report"))
}
