//! Text and hypernode encoding.
//!
//! Every vector the engine compares is a [`UnitVector`]. Backends implement
//! [`Encoder::embed_raw`]; [`encode`] is the single entry point that checks
//! arity and dimension and applies L2 normalization.

mod hash;
mod oracle;
mod remote;

use std::collections::BTreeSet;

use thiserror::Error;

use crate::kg_index::Triplet;

pub use hash::{fnv1a64, HashEncoder, HASH_DIMENSION};
pub use oracle::{OracleEncoder, OracleEntry, OracleFallback, OracleTable};
pub use remote::{RemoteEncoder, RemoteEncoderConfig};

/// Tolerance on `|‖v‖₂ − 1|` accepted for stored unit vectors.
pub const UNIT_NORM_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum EncodeError {
    #[error("encoder failure: {0}")]
    Failure(String),
    #[error("input {index} embeds to a zero vector")]
    ZeroVector { index: usize },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("hypernode has no triplets")]
    EmptyHyperNode,
}

/// An L2-normalized embedding.
#[derive(Debug, Clone, PartialEq)]
pub struct UnitVector(Vec<f32>);

impl UnitVector {
    /// Normalizes `raw`; fails on zero or non-finite input.
    pub fn normalize(raw: &[f32]) -> Option<Self> {
        let norm = raw
            .iter()
            .map(|&x| f64::from(x) * f64::from(x))
            .sum::<f64>()
            .sqrt();
        if norm == 0.0 || !norm.is_finite() {
            return None;
        }
        Some(Self(
            raw.iter().map(|&x| (f64::from(x) / norm) as f32).collect(),
        ))
    }

    /// Wraps values that are already unit length, e.g. rows read back from an
    /// embedding file. Returns `None` if the norm is off by more than
    /// [`UNIT_NORM_TOLERANCE`].
    pub fn from_normalized(values: Vec<f32>) -> Option<Self> {
        let norm = norm(&values);
        ((norm - 1.0).abs() <= UNIT_NORM_TOLERANCE).then_some(Self(values))
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.0
    }

    pub fn dimension(&self) -> usize {
        self.0.len()
    }

    pub fn norm(&self) -> f64 {
        norm(&self.0)
    }
}

fn norm(values: &[f32]) -> f64 {
    values
        .iter()
        .map(|&x| f64::from(x) * f64::from(x))
        .sum::<f64>()
        .sqrt()
}

/// A text embedding backend.
///
/// Implementations must be deterministic for a fixed configuration and safe
/// to call from several threads.
pub trait Encoder: Send + Sync {
    /// Stable identifier recorded in index manifests.
    fn id(&self) -> String;

    /// Output dimension, if known before the first call.
    fn dimension(&self) -> Option<usize>;

    /// Raw, unnormalized embeddings, one per input, in input order.
    fn embed_raw(&self, texts: &[String]) -> Result<Vec<Vec<f32>>, EncodeError>;
}

/// Embeds and normalizes `texts`, preserving order.
pub fn encode(encoder: &dyn Encoder, texts: &[String]) -> Result<Vec<UnitVector>, EncodeError> {
    if texts.is_empty() {
        return Ok(Vec::new());
    }
    let raw = encoder.embed_raw(texts)?;
    if raw.len() != texts.len() {
        return Err(EncodeError::Failure(format!(
            "backend returned {} vectors for {} inputs",
            raw.len(),
            texts.len()
        )));
    }
    let expected = encoder.dimension().unwrap_or(raw[0].len());
    raw.iter()
        .enumerate()
        .map(|(index, v)| {
            if v.len() != expected {
                return Err(EncodeError::DimensionMismatch {
                    expected,
                    got: v.len(),
                });
            }
            UnitVector::normalize(v).ok_or(EncodeError::ZeroVector { index })
        })
        .collect()
}

pub fn encode_one(encoder: &dyn Encoder, text: &str) -> Result<UnitVector, EncodeError> {
    Ok(encode(encoder, &[text.to_string()])?.remove(0))
}

/// Canonical text form of a set of triplets: sorted by (head, relation, tail),
/// each rendered `"head relation tail"`, joined with `"; "`.
pub fn serialize_hypernode<'a, I>(triplets: I) -> Result<String, EncodeError>
where
    I: IntoIterator<Item = &'a Triplet>,
{
    let sorted: BTreeSet<&Triplet> = triplets.into_iter().collect();
    if sorted.is_empty() {
        return Err(EncodeError::EmptyHyperNode);
    }
    Ok(join_rendered(sorted.into_iter()))
}

/// Joins triplets that the caller guarantees are sorted and unique.
pub(crate) fn join_rendered<'a>(sorted: impl Iterator<Item = &'a Triplet>) -> String {
    let mut out = String::new();
    for (i, t) in sorted.enumerate() {
        if i > 0 {
            out.push_str("; ");
        }
        out.push_str(t.head());
        out.push(' ');
        out.push_str(t.relation());
        out.push(' ');
        out.push_str(t.tail());
    }
    out
}

fn check_dims(a: &[f32], b: &[f32]) -> Result<(), EncodeError> {
    if a.len() == b.len() {
        Ok(())
    } else {
        Err(EncodeError::DimensionMismatch {
            expected: a.len(),
            got: b.len(),
        })
    }
}

/// Euclidean distance `‖a − b‖₂`, accumulated in f64.
pub fn distance(a: &UnitVector, b: &UnitVector) -> Result<f64, EncodeError> {
    distance_slices(a.as_slice(), b.as_slice())
}

pub fn distance_slices(a: &[f32], b: &[f32]) -> Result<f64, EncodeError> {
    check_dims(a, b)?;
    Ok(a.iter()
        .zip(b)
        .map(|(&x, &y)| {
            let d = f64::from(x) - f64::from(y);
            d * d
        })
        .sum::<f64>()
        .sqrt())
}

/// Cosine similarity; a plain dot product since both sides are unit length.
pub fn cosine(a: &UnitVector, b: &UnitVector) -> Result<f64, EncodeError> {
    cosine_slices(a.as_slice(), b.as_slice())
}

pub fn cosine_slices(a: &[f32], b: &[f32]) -> Result<f64, EncodeError> {
    check_dims(a, b)?;
    Ok(a.iter()
        .zip(b)
        .map(|(&x, &y)| f64::from(x) * f64::from(y))
        .sum())
}

/// Dense row-major matrix of unit vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    dimension: usize,
    data: Vec<f32>,
}

impl EmbeddingMatrix {
    pub fn new(dimension: usize) -> Self {
        Self {
            dimension,
            data: Vec::new(),
        }
    }

    pub fn from_rows(dimension: usize, rows: &[UnitVector]) -> Result<Self, EncodeError> {
        let mut m = Self::new(dimension);
        for row in rows {
            m.push(row)?;
        }
        Ok(m)
    }

    /// Wraps raw row-major data; `data.len()` must be a multiple of `dimension`.
    pub fn from_raw(dimension: usize, data: Vec<f32>) -> Option<Self> {
        (dimension > 0 && data.len() % dimension == 0).then_some(Self { dimension, data })
    }

    pub fn push(&mut self, row: &UnitVector) -> Result<(), EncodeError> {
        if row.dimension() != self.dimension {
            return Err(EncodeError::DimensionMismatch {
                expected: self.dimension,
                got: row.dimension(),
            });
        }
        self.data.extend_from_slice(row.as_slice());
        Ok(())
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn rows(&self) -> usize {
        if self.dimension == 0 {
            0
        } else {
            self.data.len() / self.dimension
        }
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.dimension..(i + 1) * self.dimension]
    }

    pub fn iter(&self) -> impl Iterator<Item = &[f32]> {
        self.data.chunks_exact(self.dimension.max(1))
    }

    pub fn raw(&self) -> &[f32] {
        &self.data
    }
}

/// Precomputed passage and triplet embeddings attached to a graph.
///
/// `passages` rows follow ascending passage id; `triplets` rows follow the
/// triplet catalog.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphEmbeddings {
    pub encoder_id: String,
    pub passages: EmbeddingMatrix,
    pub triplets: EmbeddingMatrix,
}

impl GraphEmbeddings {
    pub fn dimension(&self) -> usize {
        self.passages.dimension()
    }
}
