//! On-disk index bundle.
//!
//! A bundle is a directory holding:
//!
//! | file              | content                                              |
//! |-------------------|------------------------------------------------------|
//! | `corpus.jsonl`    | passages in id order with canonical triples          |
//! | `triplets.jsonl`  | the triplet catalog, one `[h, r, t]` per line        |
//! | `passages.emb`    | passage embeddings (binary, rows in id order)        |
//! | `triplets.emb`    | triplet embeddings (binary, rows in catalog order)   |
//! | `manifest.json`   | version, encoder id, dimension, counts, SHA-256      |
//!
//! Embedding files are `b"HELPIDX1"`, a little-endian `u32` dimension, a
//! little-endian `u64` row count, then row-major little-endian `f32` values.

use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{CorpusRecord, IngestError};
use crate::encoding::{encode, EmbeddingMatrix, Encoder, GraphEmbeddings, UNIT_NORM_TOLERANCE};
use crate::kg_index::{canonicalize_triplet, GraphError, KnowledgeGraph, Passage, Triplet};

pub const BUNDLE_FORMAT: &str = "helprag-index";
pub const BUNDLE_VERSION: u32 = 1;
pub const EMBEDDING_MAGIC: &[u8; 8] = b"HELPIDX1";

const CORPUS_FILE: &str = "corpus.jsonl";
const TRIPLETS_FILE: &str = "triplets.jsonl";
const PASSAGE_EMB_FILE: &str = "passages.emb";
const TRIPLET_EMB_FILE: &str = "triplets.emb";
const MANIFEST_FILE: &str = "manifest.json";
const CONTENT_FILES: [&str; 4] = [
    CORPUS_FILE,
    TRIPLETS_FILE,
    PASSAGE_EMB_FILE,
    TRIPLET_EMB_FILE,
];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub format: String,
    pub version: u32,
    pub encoder_id: String,
    pub dimension: usize,
    pub passage_count: usize,
    pub triplet_count: usize,
    /// SHA-256 of the extraction prompt, when triples were machine-extracted.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub extraction_prompt_sha256: Option<String>,
    pub content_sha256: String,
}

/// Canonicalizes the records' triples, builds the graph and embeds every
/// passage text and every unique triplet once.
pub fn build_and_embed(
    records: &[CorpusRecord],
    encoder: &dyn Encoder,
) -> Result<KnowledgeGraph, IngestError> {
    if records.is_empty() {
        return Err(GraphError::EmptyGraph.into());
    }
    let passages = records
        .iter()
        .map(|r| {
            let raw = r
                .triples
                .as_ref()
                .ok_or_else(|| IngestError::MissingTriples(r.id.clone()))?;
            let triplets = raw
                .iter()
                .map(|[h, rel, t]| canonicalize_triplet(h, rel, t))
                .collect::<Result<Vec<_>, _>>()
                .map_err(|source| IngestError::InvalidTriple {
                    id: r.id.clone(),
                    source,
                })?;
            Ok(Passage::new(r.id.clone(), r.text.clone(), triplets))
        })
        .collect::<Result<Vec<_>, IngestError>>()?;
    let graph = KnowledgeGraph::build(passages).map_err(|e| match e {
        GraphError::DuplicatePassageId(id) => IngestError::DuplicateId(id),
        other => other.into(),
    })?;

    let texts: Vec<String> = graph.passages().map(|p| p.text.clone()).collect();
    let renders: Vec<String> = graph
        .index()
        .catalog()
        .iter()
        .map(Triplet::render)
        .collect();
    let passage_rows = encode(encoder, &texts)?;
    let triplet_rows = encode(encoder, &renders)?;
    let dimension = passage_rows[0].dimension();
    let embeddings = GraphEmbeddings {
        encoder_id: encoder.id(),
        passages: EmbeddingMatrix::from_rows(dimension, &passage_rows)?,
        triplets: EmbeddingMatrix::from_rows(dimension, &triplet_rows)?,
    };
    Ok(graph.with_embeddings(embeddings))
}

pub fn write_embedding_matrix<W: Write>(mut out: W, m: &EmbeddingMatrix) -> std::io::Result<()> {
    out.write_all(EMBEDDING_MAGIC)?;
    out.write_all(&(m.dimension() as u32).to_le_bytes())?;
    out.write_all(&(m.rows() as u64).to_le_bytes())?;
    let mut buf = Vec::with_capacity(m.raw().len() * 4);
    for x in m.raw() {
        buf.extend_from_slice(&x.to_le_bytes());
    }
    out.write_all(&buf)
}

pub fn read_embedding_matrix(bytes: &[u8]) -> Result<EmbeddingMatrix, IngestError> {
    let corrupt = |msg: &str| IngestError::CorruptFile(msg.to_owned());
    let header = EMBEDDING_MAGIC.len() + 4 + 8;
    if bytes.len() < header || &bytes[..8] != EMBEDDING_MAGIC {
        return Err(corrupt("embedding file header is invalid"));
    }
    let dimension = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let rows = u64::from_le_bytes(bytes[12..20].try_into().unwrap()) as usize;
    let body = &bytes[header..];
    let expected = rows
        .checked_mul(dimension)
        .and_then(|n| n.checked_mul(4))
        .ok_or_else(|| corrupt("embedding file header overflows"))?;
    if dimension == 0 || body.len() != expected {
        return Err(corrupt("embedding file length does not match its header"));
    }
    let data: Vec<f32> = body
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let m = EmbeddingMatrix::from_raw(dimension, data).expect("length checked");
    if m.iter().any(|row| {
        let n: f64 = row
            .iter()
            .map(|&x| f64::from(x) * f64::from(x))
            .sum::<f64>()
            .sqrt();
        (n - 1.0).abs() > UNIT_NORM_TOLERANCE
    }) {
        return Err(corrupt("embedding row is not unit length"));
    }
    Ok(m)
}

fn content_hash(files: &[(&str, &[u8])]) -> String {
    let mut hasher = Sha256::new();
    for (name, bytes) in files {
        hasher.update(name.as_bytes());
        hasher.update((bytes.len() as u64).to_le_bytes());
        hasher.update(bytes);
    }
    hex::encode(hasher.finalize())
}

fn serialize_files(
    graph: &KnowledgeGraph,
    embeddings: &GraphEmbeddings,
) -> Vec<(&'static str, Vec<u8>)> {
    let mut corpus = Vec::new();
    for p in graph.passages() {
        let record = CorpusRecord {
            id: p.id.clone(),
            text: p.text.clone(),
            triples: Some(p.triplets.iter().cloned().map(Into::into).collect()),
        };
        serde_json::to_writer(&mut corpus, &record).expect("record serializes");
        corpus.push(b'\n');
    }
    let mut triplets = Vec::new();
    for t in graph.index().catalog() {
        serde_json::to_writer(&mut triplets, t).expect("triplet serializes");
        triplets.push(b'\n');
    }
    let mut passage_emb = Vec::new();
    write_embedding_matrix(&mut passage_emb, &embeddings.passages).expect("in-memory write");
    let mut triplet_emb = Vec::new();
    write_embedding_matrix(&mut triplet_emb, &embeddings.triplets).expect("in-memory write");
    vec![
        (CORPUS_FILE, corpus),
        (TRIPLETS_FILE, triplets),
        (PASSAGE_EMB_FILE, passage_emb),
        (TRIPLET_EMB_FILE, triplet_emb),
    ]
}

/// Writes the bundle into a temporary sibling directory and renames it into
/// place. An existing bundle at `dir` is replaced; any other non-empty
/// directory is refused.
pub fn save_index(
    dir: &Path,
    graph: &KnowledgeGraph,
    extraction_prompt_sha256: Option<String>,
) -> Result<Manifest, IngestError> {
    let embeddings = graph
        .embeddings()
        .ok_or_else(|| IngestError::CorruptFile("graph has no embeddings to save".into()))?;
    let files = serialize_files(graph, embeddings);
    let hashed: Vec<(&str, &[u8])> = files.iter().map(|(n, b)| (*n, b.as_slice())).collect();
    let manifest = Manifest {
        format: BUNDLE_FORMAT.into(),
        version: BUNDLE_VERSION,
        encoder_id: embeddings.encoder_id.clone(),
        dimension: embeddings.dimension(),
        passage_count: graph.passage_count(),
        triplet_count: graph.triplet_count(),
        extraction_prompt_sha256,
        content_sha256: content_hash(&hashed),
    };

    if dir.exists() {
        let is_bundle = dir.join(MANIFEST_FILE).is_file();
        let is_empty = std::fs::read_dir(dir)
            .map_err(|e| IngestError::io(dir, e))?
            .next()
            .is_none();
        if !is_bundle && !is_empty {
            return Err(IngestError::io(
                dir,
                std::io::Error::new(
                    std::io::ErrorKind::AlreadyExists,
                    "directory exists and is not an index bundle",
                ),
            ));
        }
    }

    let staging = staging_dir(dir);
    if staging.exists() {
        std::fs::remove_dir_all(&staging).map_err(|e| IngestError::io(&staging, e))?;
    }
    std::fs::create_dir_all(&staging).map_err(|e| IngestError::io(&staging, e))?;
    for (name, bytes) in &files {
        let path = staging.join(name);
        std::fs::write(&path, bytes).map_err(|e| IngestError::io(&path, e))?;
    }
    let manifest_path = staging.join(MANIFEST_FILE);
    let manifest_json = serde_json::to_vec_pretty(&manifest).expect("manifest serializes");
    std::fs::write(&manifest_path, manifest_json)
        .map_err(|e| IngestError::io(&manifest_path, e))?;

    if dir.exists() {
        std::fs::remove_dir_all(dir).map_err(|e| IngestError::io(dir, e))?;
    }
    std::fs::rename(&staging, dir).map_err(|e| IngestError::io(dir, e))?;
    Ok(manifest)
}

fn staging_dir(dir: &Path) -> PathBuf {
    let name = dir
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| "index".into());
    dir.with_file_name(format!(".{name}.tmp-{}", std::process::id()))
}

fn read_file(dir: &Path, name: &str) -> Result<Vec<u8>, IngestError> {
    let path = dir.join(name);
    let mut buf = Vec::new();
    std::fs::File::open(&path)
        .and_then(|mut f| f.read_to_end(&mut buf))
        .map_err(|e| IngestError::io(&path, e))?;
    Ok(buf)
}

/// Loads and verifies a bundle, rebuilding the graph from its corpus file.
pub fn load_index(dir: &Path) -> Result<(KnowledgeGraph, Manifest), IngestError> {
    let manifest_bytes = read_file(dir, MANIFEST_FILE)?;
    let manifest: Manifest = serde_json::from_slice(&manifest_bytes)
        .map_err(|e| IngestError::CorruptFile(format!("manifest: {e}")))?;
    if manifest.format != BUNDLE_FORMAT {
        return Err(IngestError::CorruptFile(format!(
            "unexpected bundle format `{}`",
            manifest.format
        )));
    }
    if manifest.version != BUNDLE_VERSION {
        return Err(IngestError::VersionMismatch {
            found: manifest.version,
            expected: BUNDLE_VERSION,
        });
    }

    let files = CONTENT_FILES
        .iter()
        .map(|name| Ok((*name, read_file(dir, name)?)))
        .collect::<Result<Vec<_>, IngestError>>()?;
    let hashed: Vec<(&str, &[u8])> = files.iter().map(|(n, b)| (*n, b.as_slice())).collect();
    if content_hash(&hashed) != manifest.content_sha256 {
        return Err(IngestError::CorruptFile("content hash mismatch".into()));
    }
    let [corpus, triplets, passage_emb, triplet_emb] = [0, 1, 2, 3].map(|i| files[i].1.as_slice());

    let records = super::parse_corpus(
        std::str::from_utf8(corpus).map_err(|e| IngestError::CorruptFile(e.to_string()))?,
    )
    .map_err(|e| IngestError::CorruptFile(format!("corpus: {e}")))?;
    let passages = records
        .into_iter()
        .map(|r| {
            let triplets = r
                .triples
                .unwrap_or_default()
                .into_iter()
                .map(Triplet::try_from)
                .collect::<Result<Vec<_>, _>>()?;
            Ok(Passage::new(r.id, r.text, triplets))
        })
        .collect::<Result<Vec<_>, GraphError>>()
        .map_err(|e| IngestError::CorruptFile(format!("corpus: {e}")))?;
    let graph = KnowledgeGraph::build(passages)
        .map_err(|e| IngestError::CorruptFile(format!("corpus: {e}")))?;

    let catalog = std::str::from_utf8(triplets)
        .map_err(|e| IngestError::CorruptFile(e.to_string()))?
        .lines()
        .map(serde_json::from_str::<Triplet>)
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| IngestError::CorruptFile(format!("triplets: {e}")))?;
    if catalog != graph.index().catalog() {
        return Err(IngestError::CorruptFile(
            "triplet file does not match the corpus".into(),
        ));
    }

    let passages = read_embedding_matrix(passage_emb)?;
    let triplets = read_embedding_matrix(triplet_emb)?;
    let consistent = passages.rows() == graph.passage_count()
        && triplets.rows() == graph.triplet_count()
        && passages.rows() == manifest.passage_count
        && triplets.rows() == manifest.triplet_count
        && passages.dimension() == manifest.dimension
        && (triplets.rows() == 0 || triplets.dimension() == manifest.dimension);
    if !consistent {
        return Err(IngestError::CorruptFile(
            "manifest counts do not match bundle contents".into(),
        ));
    }
    let embeddings = GraphEmbeddings {
        encoder_id: manifest.encoder_id.clone(),
        passages,
        triplets,
    };
    Ok((graph.with_embeddings(embeddings), manifest))
}
