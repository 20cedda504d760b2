use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::hash::{hash_features, HASH_DIMENSION};
use super::{EncodeError, Encoder};

/// One fixture row. Exactly one of `vector` (dense) or `sparse`
/// (`[index, value]` pairs) is given.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleEntry {
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vector: Option<Vec<f32>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sparse: Option<Vec<(usize, f32)>>,
}

impl OracleEntry {
    pub fn dense(text: impl Into<String>, vector: Vec<f32>) -> Self {
        Self {
            text: text.into(),
            vector: Some(vector),
            sparse: None,
        }
    }

    pub fn sparse(text: impl Into<String>, pairs: Vec<(usize, f32)>) -> Self {
        Self {
            text: text.into(),
            vector: None,
            sparse: Some(pairs),
        }
    }
}

/// What to do with texts missing from the table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum OracleFallback {
    /// Unknown text is an encoder failure.
    None,
    /// Unknown text gets the 3-gram hash features written into
    /// `[offset, offset + 256)`; all other coordinates are zero.
    Hash { offset: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleTable {
    pub dimension: usize,
    pub fallback: OracleFallback,
    pub entries: Vec<OracleEntry>,
}

/// Encoder backed by an explicit text-to-vector table.
#[derive(Debug, Clone)]
pub struct OracleEncoder {
    id: String,
    dimension: usize,
    fallback: OracleFallback,
    vectors: HashMap<String, Vec<f32>>,
}

impl OracleEncoder {
    pub fn from_table(table: &OracleTable) -> Result<Self, EncodeError> {
        let bad = |msg: String| EncodeError::Failure(format!("oracle table: {msg}"));
        if table.dimension == 0 {
            return Err(bad("dimension must be positive".into()));
        }
        if let OracleFallback::Hash { offset } = table.fallback {
            if offset + HASH_DIMENSION > table.dimension {
                return Err(bad(format!(
                    "hash fallback at offset {offset} exceeds dimension {}",
                    table.dimension
                )));
            }
        }
        let mut vectors = HashMap::with_capacity(table.entries.len());
        for entry in &table.entries {
            let v = match (&entry.vector, &entry.sparse) {
                (Some(v), None) if v.len() == table.dimension => v.clone(),
                (Some(v), None) => {
                    return Err(EncodeError::DimensionMismatch {
                        expected: table.dimension,
                        got: v.len(),
                    })
                }
                (None, Some(pairs)) => {
                    let mut v = vec![0.0; table.dimension];
                    for &(i, x) in pairs {
                        if i >= table.dimension {
                            return Err(bad(format!("sparse index {i} out of range")));
                        }
                        v[i] = x;
                    }
                    v
                }
                _ => {
                    return Err(bad(format!(
                        "entry {:?} needs exactly one of vector/sparse",
                        entry.text
                    )))
                }
            };
            if vectors.insert(entry.text.clone(), v).is_some() {
                return Err(bad(format!("duplicate text {:?}", entry.text)));
            }
        }
        let digest = Sha256::digest(serde_json::to_vec(table).expect("table serializes"));
        Ok(Self {
            id: format!("oracle-{}", &hex::encode(digest)[..16]),
            dimension: table.dimension,
            fallback: table.fallback,
            vectors,
        })
    }

    pub fn load(path: &Path) -> Result<Self, EncodeError> {
        let bytes = std::fs::read(path)
            .map_err(|e| EncodeError::Failure(format!("reading {}: {e}", path.display())))?;
        let table: OracleTable = serde_json::from_slice(&bytes)
            .map_err(|e| EncodeError::Failure(format!("parsing {}: {e}", path.display())))?;
        Self::from_table(&table)
    }

    pub fn contains(&self, text: &str) -> bool {
        self.vectors.contains_key(text)
    }
}

impl Encoder for OracleEncoder {
    fn id(&self) -> String {
        self.id.clone()
    }

    fn dimension(&self) -> Option<usize> {
        Some(self.dimension)
    }

    fn embed_raw(&self, texts: &[String]) -> Result<Vec<Vec<f32>>, EncodeError> {
        texts
            .iter()
            .map(|text| match (self.vectors.get(text), self.fallback) {
                (Some(v), _) => Ok(v.clone()),
                (None, OracleFallback::Hash { offset }) => {
                    let mut v = vec![0.0; self.dimension];
                    hash_features(
                        text,
                        HASH_DIMENSION,
                        &mut v[offset..offset + HASH_DIMENSION],
                    );
                    Ok(v)
                }
                (None, OracleFallback::None) => Err(EncodeError::Failure(format!(
                    "oracle table has no entry for {text:?}"
                ))),
            })
            .collect()
    }
}
