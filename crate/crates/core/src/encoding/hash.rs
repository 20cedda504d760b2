use super::{EncodeError, Encoder};

pub const HASH_DIMENSION: usize = 256;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

/// 64-bit FNV-1a.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    bytes.iter().fold(FNV_OFFSET, |h, &b| {
        (h ^ u64::from(b)).wrapping_mul(FNV_PRIME)
    })
}

/// Character 3-gram feature hashing.
///
/// The text is lowercased, each window of three consecutive chars is hashed
/// with FNV-1a over its UTF-8 bytes and counted in bucket `hash % dimension`.
/// Texts shorter than three chars count as a single gram. Counts are small
/// integers, so accumulation is exact and the output is platform independent.
#[derive(Debug, Clone, Copy, Default)]
pub struct HashEncoder;

impl HashEncoder {
    pub fn new() -> Self {
        Self
    }
}

pub(crate) fn hash_features(text: &str, dimension: usize, out: &mut [f32]) {
    let chars: Vec<char> = text.chars().flat_map(char::to_lowercase).collect();
    let mut gram = String::with_capacity(12);
    let mut bump = |window: &[char]| {
        gram.clear();
        gram.extend(window);
        let bucket = (fnv1a64(gram.as_bytes()) % dimension as u64) as usize;
        out[bucket] += 1.0;
    };
    if chars.len() < 3 {
        if !chars.is_empty() {
            bump(&chars);
        }
    } else {
        chars.windows(3).for_each(bump);
    }
}

impl Encoder for HashEncoder {
    fn id(&self) -> String {
        format!("hash-3gram-fnv1a64-d{HASH_DIMENSION}")
    }

    fn dimension(&self) -> Option<usize> {
        Some(HASH_DIMENSION)
    }

    fn embed_raw(&self, texts: &[String]) -> Result<Vec<Vec<f32>>, EncodeError> {
        Ok(texts
            .iter()
            .map(|text| {
                let mut v = vec![0.0f32; HASH_DIMENSION];
                hash_features(text, HASH_DIMENSION, &mut v);
                v
            })
            .collect())
    }
}
