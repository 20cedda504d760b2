//! Iterative hypernode expansion.
//!
//! A hypernode is a set of triplets standing for one reasoning path. The
//! search starts from the `n` triplets most cosine-similar to the query,
//! then for every further hop grows each path by one adjacent triplet and
//! keeps the `k` candidates closest to the query in Euclidean distance.

use std::collections::{BTreeSet, HashSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::encoding::{
    self, cosine_slices, distance, join_rendered, EncodeError, Encoder, UnitVector,
};
use crate::kg_index::{GraphError, KnowledgeGraph, Triplet, TripletId};

#[derive(Debug, Error)]
pub enum ExpansionError {
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Encode(#[from] EncodeError),
    #[error("invalid expansion config: {0}")]
    InvalidConfig(&'static str),
}

/// Hop count `N`, seed count `n` and beam width `k`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExpansionConfig {
    pub hops: usize,
    pub seeds: usize,
    pub beam: usize,
}

impl Default for ExpansionConfig {
    fn default() -> Self {
        Self {
            hops: 2,
            seeds: 3,
            beam: 50,
        }
    }
}

impl ExpansionConfig {
    pub fn validate(&self) -> Result<(), ExpansionError> {
        if self.hops == 0 {
            return Err(ExpansionError::InvalidConfig("hops must be at least 1"));
        }
        if self.seeds == 0 {
            return Err(ExpansionError::InvalidConfig(
                "seed size must be at least 1",
            ));
        }
        if self.beam == 0 {
            return Err(ExpansionError::InvalidConfig(
                "beam size must be at least 1",
            ));
        }
        Ok(())
    }
}

/// A scored reasoning path.
#[derive(Debug, Clone, PartialEq)]
pub struct HyperNode {
    triplets: Vec<TripletId>,
    entities: BTreeSet<String>,
    key: String,
    embedding: UnitVector,
    query_distance: f64,
}

impl HyperNode {
    /// Assembles a hypernode from triplet ids and an embedding computed
    /// elsewhere; the query distance is derived from `embedding`.
    pub fn new(
        graph: &KnowledgeGraph,
        triplets: &[TripletId],
        embedding: UnitVector,
        query: &UnitVector,
    ) -> Result<Self, EncodeError> {
        let ids: Vec<TripletId> = triplets
            .iter()
            .copied()
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        if ids.is_empty() {
            return Err(EncodeError::EmptyHyperNode);
        }
        let key = join_rendered(ids.iter().map(|&id| graph.index().triplet(id)));
        hypernode(graph, ids, key, embedding, query)
    }

    /// Triplet ids in catalog order (which is the serialization order).
    pub fn triplet_ids(&self) -> &[TripletId] {
        &self.triplets
    }

    pub fn triplets<'g>(&'g self, graph: &'g KnowledgeGraph) -> impl Iterator<Item = &'g Triplet> {
        self.triplets.iter().map(|&id| graph.index().triplet(id))
    }

    pub fn entities(&self) -> &BTreeSet<String> {
        &self.entities
    }

    /// The canonical serialization, also the tie-break key.
    pub fn serialized(&self) -> &str {
        &self.key
    }

    pub fn embedding(&self) -> &UnitVector {
        &self.embedding
    }

    pub fn query_distance(&self) -> f64 {
        self.query_distance
    }

    pub fn len(&self) -> usize {
        self.triplets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triplets.is_empty()
    }
}

/// An expansion result whose distance has not been computed yet.
#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    triplets: Vec<TripletId>,
    key: String,
    /// Present when the candidate is a carried-forward beam member.
    embedding: Option<UnitVector>,
}

impl Candidate {
    fn new(graph: &KnowledgeGraph, triplets: Vec<TripletId>) -> Self {
        let key = join_rendered(triplets.iter().map(|&id| graph.index().triplet(id)));
        Self {
            triplets,
            key,
            embedding: None,
        }
    }

    pub fn triplet_ids(&self) -> &[TripletId] {
        &self.triplets
    }

    pub fn serialized(&self) -> &str {
        &self.key
    }
}

fn entities_of(graph: &KnowledgeGraph, ids: &[TripletId]) -> BTreeSet<String> {
    ids.iter()
        .flat_map(|&id| {
            let t = graph.index().triplet(id);
            [t.head().to_owned(), t.tail().to_owned()]
        })
        .collect()
}

fn hypernode(
    graph: &KnowledgeGraph,
    triplets: Vec<TripletId>,
    key: String,
    embedding: UnitVector,
    query: &UnitVector,
) -> Result<HyperNode, EncodeError> {
    let query_distance = distance(&embedding, query)?;
    Ok(HyperNode {
        entities: entities_of(graph, &triplets),
        triplets,
        key,
        embedding,
        query_distance,
    })
}

/// Singleton hypernodes for the `n` triplets with the highest cosine to the
/// query; ties go to the smaller serialization.
///
/// Uses the graph's precomputed triplet embeddings when they were produced by
/// the same encoder, otherwise encodes the catalog on the fly.
pub fn select_seeds(
    graph: &KnowledgeGraph,
    encoder: &dyn Encoder,
    query: &UnitVector,
    n: usize,
) -> Result<Vec<HyperNode>, ExpansionError> {
    if graph.is_empty() {
        return Err(GraphError::EmptyGraph.into());
    }
    let catalog = graph.index().catalog();

    let precomputed = graph
        .embeddings()
        .filter(|e| e.encoder_id == encoder.id() && e.triplets.rows() == catalog.len());
    let encoded;
    let rows: Vec<&[f32]> = match precomputed {
        Some(e) => e.triplets.iter().collect(),
        None => {
            let renders: Vec<String> = catalog.iter().map(Triplet::render).collect();
            encoded = encoding::encode(encoder, &renders)?;
            encoded.iter().map(UnitVector::as_slice).collect()
        }
    };

    let mut scored = rows
        .iter()
        .enumerate()
        .map(|(i, row)| Ok((cosine_slices(query.as_slice(), row)?, i)))
        .collect::<Result<Vec<(f64, usize)>, EncodeError>>()?;
    // Renders are only built for exact cosine ties.
    let order = |a: &(f64, usize), b: &(f64, usize)| {
        b.0.total_cmp(&a.0)
            .then_with(|| catalog[a.1].render().cmp(&catalog[b.1].render()))
    };
    if n < scored.len() {
        scored.select_nth_unstable_by(n, order);
        scored.truncate(n);
    }
    scored.sort_by(order);

    scored
        .into_iter()
        .map(|(_, i)| {
            let embedding = UnitVector::from_normalized(rows[i].to_vec())
                .ok_or(EncodeError::ZeroVector { index: i })?;
            let id = TripletId(i as u32);
            Ok(hypernode(
                graph,
                vec![id],
                catalog[i].render(),
                embedding,
                query,
            )?)
        })
        .collect()
}

/// One expansion step: every beam member grown by each adjacent triplet it
/// does not already contain. Members with no such neighbor are carried
/// forward unchanged. Candidates with the same triplet set are merged,
/// keeping the first.
pub fn expand_candidates(graph: &KnowledgeGraph, beam: &[HyperNode]) -> Vec<Candidate> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for node in beam {
        let adjacent = graph.adjacent_ids(node.entities.iter().map(String::as_str));
        let mut grew = false;
        for next in adjacent {
            if node.triplets.binary_search(&next).is_ok() {
                continue;
            }
            grew = true;
            let mut ids = node.triplets.clone();
            let at = ids.binary_search(&next).unwrap_err();
            ids.insert(at, next);
            let candidate = Candidate::new(graph, ids);
            if seen.insert(candidate.key.clone()) {
                out.push(candidate);
            }
        }
        if !grew && seen.insert(node.key.clone()) {
            out.push(Candidate {
                triplets: node.triplets.clone(),
                key: node.key.clone(),
                embedding: Some(node.embedding.clone()),
            });
        }
    }
    out
}

/// Encodes the candidates and keeps the `k` closest to the query, ascending
/// by distance, ties by serialization.
pub fn prune(
    graph: &KnowledgeGraph,
    candidates: Vec<Candidate>,
    encoder: &dyn Encoder,
    query: &UnitVector,
    k: usize,
) -> Result<Vec<HyperNode>, ExpansionError> {
    let pending: Vec<String> = candidates
        .iter()
        .filter(|c| c.embedding.is_none())
        .map(|c| c.key.clone())
        .collect();
    let mut fresh = encoding::encode(encoder, &pending)?.into_iter();

    let mut nodes = candidates
        .into_iter()
        .map(|c| {
            let embedding = match c.embedding {
                Some(e) => e,
                None => fresh.next().expect("one vector per pending candidate"),
            };
            hypernode(graph, c.triplets, c.key, embedding, query)
        })
        .collect::<Result<Vec<_>, _>>()?;
    nodes.sort_by(|a, b| {
        a.query_distance
            .total_cmp(&b.query_distance)
            .then_with(|| a.key.cmp(&b.key))
    });
    nodes.truncate(k);
    Ok(nodes)
}

/// Runs the full expansion for a query that is already embedded.
///
/// An empty graph yields an empty result, which downstream treats as
/// "dense retrieval only".
pub fn expand_from_vector(
    graph: &KnowledgeGraph,
    encoder: &dyn Encoder,
    query: &UnitVector,
    config: &ExpansionConfig,
) -> Result<Vec<HyperNode>, ExpansionError> {
    config.validate()?;
    if graph.is_empty() {
        return Ok(Vec::new());
    }
    let mut beam = select_seeds(graph, encoder, query, config.seeds)?;
    for _hop in 2..=config.hops {
        let candidates = expand_candidates(graph, &beam);
        if candidates.is_empty() {
            break;
        }
        beam = prune(graph, candidates, encoder, query, config.beam)?;
    }
    Ok(beam)
}

/// Embeds `query` and runs [`expand_from_vector`].
pub fn run_expansion(
    graph: &KnowledgeGraph,
    encoder: &dyn Encoder,
    query: &str,
    config: &ExpansionConfig,
) -> Result<Vec<HyperNode>, ExpansionError> {
    config.validate()?;
    if graph.is_empty() {
        return Ok(Vec::new());
    }
    let query = encoding::encode_one(encoder, query)?;
    expand_from_vector(graph, encoder, &query, config)
}
