//! Corpus loading, triple extraction, embedding and index persistence.

mod bundle;
mod corpus;
mod extract;

use std::path::PathBuf;

use thiserror::Error;

use crate::encoding::EncodeError;
use crate::kg_index::GraphError;
use crate::service::ServiceError;

pub use bundle::{
    build_and_embed, load_index, read_embedding_matrix, save_index, write_embedding_matrix,
    Manifest, BUNDLE_FORMAT, BUNDLE_VERSION, EMBEDDING_MAGIC,
};
pub use corpus::{load_corpus, parse_corpus, write_corpus, CorpusRecord};
pub use extract::{
    extract_triples, extraction_prompt_sha256, parse_triples_reply, ExtractionConfig,
    EXTRACTION_PROMPT, EXTRACTION_PROMPT_VERSION,
};

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("duplicate passage id `{0}`")]
    DuplicateId(String),
    #[error("passage `{0}` has no triples; run extraction first")]
    MissingTriples(String),
    #[error("passage `{id}`: {source}")]
    InvalidTriple {
        id: String,
        #[source]
        source: GraphError,
    },
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Encode(#[from] EncodeError),
    #[error(transparent)]
    Service(#[from] ServiceError),
    #[error("bundle version {found} is not supported (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },
    #[error("corrupt index bundle: {0}")]
    CorruptFile(String),
}

impl IngestError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Self::Io {
            path: path.into(),
            source,
        }
    }
}
