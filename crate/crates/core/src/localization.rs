//! Path-guided evidence localization and hybrid context assembly.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::encoding::{self, cosine_slices, EncodeError, Encoder, UnitVector};
use crate::hypernode::{expand_from_vector, ExpansionConfig, ExpansionError, HyperNode};
use crate::kg_index::{KnowledgeGraph, Triplet, TripletId};

#[derive(Debug, Error)]
pub enum RetrievalError {
    #[error(transparent)]
    Expansion(#[from] ExpansionError),
    #[error(transparent)]
    Encode(#[from] EncodeError),
    #[error("index has no passage embeddings")]
    MissingPassageEmbeddings,
    #[error("index was embedded with `{index}` but the query encoder is `{query}`")]
    EncoderMismatch { index: String, query: String },
    #[error("invalid hybrid config: {0}")]
    InvalidConfig(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Channel {
    Path,
    Dense,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredPassage {
    pub id: String,
    /// Path channel: the accumulated evidence score (> 0).
    /// Dense channel: cosine similarity to the query.
    pub score: f64,
    pub channel: Channel,
    /// Distinct triplets that contributed to a path score, in catalog order.
    pub supporting_triplets: Vec<Triplet>,
}

/// Path quota `M` and total context size `K`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HybridConfig {
    pub quota: usize,
    pub total: usize,
}

impl Default for HybridConfig {
    fn default() -> Self {
        Self { quota: 4, total: 5 }
    }
}

impl HybridConfig {
    pub fn validate(&self) -> Result<(), RetrievalError> {
        if self.total == 0 {
            return Err(RetrievalError::InvalidConfig(
                "total context size must be at least 1",
            ));
        }
        if self.quota > self.total {
            return Err(RetrievalError::InvalidConfig(
                "quota cannot exceed total context size",
            ));
        }
        Ok(())
    }
}

fn by_score_then_id(a: &ScoredPassage, b: &ScoredPassage) -> std::cmp::Ordering {
    b.score.total_cmp(&a.score).then_with(|| a.id.cmp(&b.id))
}

/// Scores every passage reachable from the final hypernodes:
///
/// `score(p) = Σ_H Σ_{τ∈H} [p ∈ Φ(τ)] · exp(−dist(H, q)) · w(p, τ)`
///
/// A triplet shared by several hypernodes contributes once per hypernode.
/// Only positive scores are returned, best first, ties by passage id.
pub fn score_passages(graph: &KnowledgeGraph, h_final: &[HyperNode]) -> Vec<ScoredPassage> {
    let mut acc: BTreeMap<&str, (f64, BTreeSet<TripletId>)> = BTreeMap::new();
    for node in h_final {
        let kappa = (-node.query_distance()).exp();
        for &id in node.triplet_ids() {
            for source in graph.index().provenance(id) {
                let entry = acc.entry(source.passage_id.as_str()).or_default();
                entry.0 += kappa * source.weight.value();
                entry.1.insert(id);
            }
        }
    }
    let mut out: Vec<ScoredPassage> = acc
        .into_iter()
        .filter(|(_, (score, _))| *score > 0.0)
        .map(|(id, (score, support))| ScoredPassage {
            id: id.to_owned(),
            score,
            channel: Channel::Path,
            supporting_triplets: support
                .into_iter()
                .map(|t| graph.index().triplet(t).clone())
                .collect(),
        })
        .collect();
    out.sort_by(by_score_then_id);
    out
}

/// Exhaustive cosine ranking over the precomputed passage embeddings,
/// truncated to `limit`. Ties go to the smaller passage id.
pub fn dense_rank(
    graph: &KnowledgeGraph,
    query: &UnitVector,
    limit: usize,
) -> Result<Vec<ScoredPassage>, RetrievalError> {
    let embeddings = graph
        .embeddings()
        .ok_or(RetrievalError::MissingPassageEmbeddings)?;
    let mut out = graph
        .passages()
        .zip(embeddings.passages.iter())
        .map(|(p, row)| {
            Ok(ScoredPassage {
                id: p.id.clone(),
                score: cosine_slices(query.as_slice(), row)?,
                channel: Channel::Dense,
                supporting_triplets: Vec::new(),
            })
        })
        .collect::<Result<Vec<_>, EncodeError>>()?;
    out.sort_by(by_score_then_id);
    out.truncate(limit);
    Ok(out)
}

/// Takes up to `quota` path passages, then fills to `total` from the dense
/// ranking, skipping ids already taken.
pub fn hybrid_merge(
    path_ranked: &[ScoredPassage],
    dense_ranked: &[ScoredPassage],
    config: &HybridConfig,
) -> Vec<ScoredPassage> {
    let mut taken = HashSet::new();
    let mut out = Vec::with_capacity(config.total);
    for p in path_ranked.iter().take(config.quota.min(config.total)) {
        if taken.insert(p.id.as_str()) {
            out.push(p.clone());
        }
    }
    for p in dense_ranked {
        if out.len() >= config.total {
            break;
        }
        if taken.insert(p.id.as_str()) {
            out.push(p.clone());
        }
    }
    out
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Timings {
    pub expansion: Duration,
    pub scoring: Duration,
    pub dense: Duration,
    pub total: Duration,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Retrieval {
    pub hypernodes: Vec<HyperNode>,
    pub passages: Vec<ScoredPassage>,
    pub timings: Timings,
}

/// Full pipeline: expansion, path scoring, dense ranking, quota merge.
/// With no hypernodes (e.g. a graph without triplets) the context is the
/// dense top-`total`.
pub fn retrieve(
    graph: &KnowledgeGraph,
    encoder: &dyn Encoder,
    query: &str,
    expansion: &ExpansionConfig,
    hybrid: &HybridConfig,
) -> Result<Retrieval, RetrievalError> {
    hybrid.validate()?;
    expansion.validate()?;
    let embeddings = graph
        .embeddings()
        .ok_or(RetrievalError::MissingPassageEmbeddings)?;
    if embeddings.encoder_id != encoder.id() {
        return Err(RetrievalError::EncoderMismatch {
            index: embeddings.encoder_id.clone(),
            query: encoder.id(),
        });
    }

    let start = Instant::now();
    let query_vector = encoding::encode_one(encoder, query)?;
    let hypernodes = expand_from_vector(graph, encoder, &query_vector, expansion)?;
    let expanded = Instant::now();

    let path_ranked = score_passages(graph, &hypernodes);
    let scored = Instant::now();

    let path_used = path_ranked.len().min(hybrid.quota);
    let dense_ranked = dense_rank(graph, &query_vector, hybrid.total + path_used)?;
    let passages = hybrid_merge(&path_ranked, &dense_ranked, hybrid);
    let done = Instant::now();

    Ok(Retrieval {
        hypernodes,
        passages,
        timings: Timings {
            expansion: expanded - start,
            scoring: scored - expanded,
            dense: done - scored,
            total: done - start,
        },
    })
}
