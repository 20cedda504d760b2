//! Graph retrieval over knowledge-graph triplets.
//!
//! Passages are indexed by the triplets extracted from them. A query is
//! answered by growing reasoning paths ("hypernodes") from the triplets most
//! similar to it, scoring passages by the paths that touch them, and filling
//! the remaining context slots from a dense passage ranking.

pub mod encoding;
pub mod evaluation;
pub mod hypernode;
pub mod ingestion;
pub mod kg_index;
pub mod localization;
pub mod service;

pub use encoding::{Encoder, HashEncoder, OracleEncoder, RemoteEncoder, UnitVector};
pub use hypernode::{run_expansion, ExpansionConfig, HyperNode};
pub use kg_index::{KnowledgeGraph, Passage, Triplet};
pub use localization::{retrieve, Channel, HybridConfig, Retrieval, ScoredPassage};
