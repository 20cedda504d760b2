//! Construction-verified multi-hop fixtures.
//!
//! Each chain `c` is a path `e0 -r0-> e1 -r1-> ... -> eh` with one passage per
//! link. The question names only `e0`; the gold passage is the last link.
//! The oracle table gives every chain two private axes `a_c` (the question
//! direction) and `b_c`:
//!
//! * question: `a_c`
//! * first-link triplet: `0.8 a_c + 0.6 b_c`
//! * path prefixes of two or more links: cosine rising to 0.99 with `a_c`
//! * first-link passage and distractor passages: positive cosine with `a_c`
//! * later-link passages, including the gold one: slightly negative cosine,
//!   so they rank below every unrelated passage (which sits at exactly 0)
//!
//! Texts not in the table fall back to hash features in a block of dimensions
//! shared by no chain, so they are orthogonal to every question.

use std::collections::HashSet;
use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use super::QaRecord;
use crate::encoding::{
    self, cosine, serialize_hypernode, EncodeError, OracleEncoder, OracleEntry, OracleFallback,
    OracleTable,
};
use crate::ingestion::{write_corpus, CorpusRecord};
use crate::kg_index::Triplet;

#[derive(Debug, Error)]
pub enum SyntheticError {
    #[error("invalid generator parameters: {0}")]
    InvalidParams(String),
    #[error("question `{question}`: gold passage ranks {rank} under dense retrieval, inside the top {k}")]
    DenseLeak {
        question: String,
        rank: usize,
        k: usize,
    },
    #[error(transparent)]
    Encode(#[from] EncodeError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SyntheticParams {
    pub chains: usize,
    pub hops: usize,
    pub distractors: usize,
    pub seed: u64,
    /// Dense cutoff the gold passages must stay outside of.
    pub check_k: usize,
}

impl Default for SyntheticParams {
    fn default() -> Self {
        Self {
            chains: 100,
            hops: 2,
            distractors: 10,
            seed: 7,
            check_k: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticFixture {
    pub corpus: Vec<CorpusRecord>,
    pub qa: Vec<QaRecord>,
    pub oracle: OracleTable,
}

impl SyntheticFixture {
    /// Writes `corpus.jsonl`, `qa.jsonl` and `oracle.json` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<(), SyntheticError> {
        std::fs::create_dir_all(dir)?;
        let mut corpus = std::io::BufWriter::new(std::fs::File::create(dir.join("corpus.jsonl"))?);
        write_corpus(&mut corpus, &self.corpus)?;
        corpus.flush()?;
        let mut qa = std::io::BufWriter::new(std::fs::File::create(dir.join("qa.jsonl"))?);
        for q in &self.qa {
            serde_json::to_writer(&mut qa, q).map_err(std::io::Error::from)?;
            qa.write_all(b"\n")?;
        }
        qa.flush()?;
        let oracle = serde_json::to_vec(&self.oracle).map_err(std::io::Error::from)?;
        std::fs::write(dir.join("oracle.json"), oracle)?;
        Ok(())
    }
}

const RELATIONS: &[(&str, &str)] = &[
    ("mother of", "is the mother of"),
    ("father of", "is the father of"),
    ("mentor of", "is the mentor of"),
    ("founded", "founded"),
    ("married", "married"),
    ("member of", "is a member of"),
    ("located in", "is located in"),
    ("employed by", "is employed by"),
    ("author of", "is the author of"),
    ("owner of", "is the owner of"),
    ("rival of", "is a rival of"),
    ("successor of", "is the successor of"),
];

const LATER_LINK_COSINE: f32 = -0.1;

const DISTRACTOR_RELATION: &str = "associated with";

const ONSETS: &[&str] = &[
    "b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z", "br", "dr", "kl", "st",
    "tr", "th",
];
const VOWELS: &[&str] = &["a", "e", "i", "o", "u", "ai", "eo", "ia"];
const CODAS: &[&str] = &["", "", "n", "r", "s", "l", "th", "m"];

struct Names {
    rng: ChaCha8Rng,
    used: HashSet<String>,
}

impl Names {
    fn word(&mut self) -> String {
        let syllables = self.rng.gen_range(2..=3);
        let mut w = String::new();
        for _ in 0..syllables {
            w.push_str(ONSETS.choose(&mut self.rng).unwrap());
            w.push_str(VOWELS.choose(&mut self.rng).unwrap());
        }
        w.push_str(CODAS.choose(&mut self.rng).unwrap());
        let mut chars = w.chars();
        let first = chars.next().unwrap().to_ascii_uppercase();
        std::iter::once(first).chain(chars).collect()
    }

    fn fresh(&mut self) -> String {
        loop {
            let name = format!("{} {}", self.word(), self.word());
            if self.used.insert(name.to_lowercase()) {
                return name;
            }
        }
    }
}

fn on_axes(a: usize, b: usize, cos: f32) -> Vec<(usize, f32)> {
    vec![(a, cos), (b, (1.0 - cos * cos).max(0.0).sqrt())]
}

fn canonical(h: &str, r: &str, t: &str) -> Triplet {
    Triplet::new(h, r, t).expect("generated names are non-empty")
}

/// Generates the fixture and runs the dense-separation check on it.
pub fn gen_synthetic(params: &SyntheticParams) -> Result<SyntheticFixture, SyntheticError> {
    if params.hops < 2 {
        return Err(SyntheticError::InvalidParams(
            "hop length must be at least 2".into(),
        ));
    }
    if params.chains == 0 {
        return Err(SyntheticError::InvalidParams(
            "need at least one chain".into(),
        ));
    }
    if params.check_k == 0 {
        return Err(SyntheticError::InvalidParams(
            "check_k must be at least 1".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut names = Names {
        rng: ChaCha8Rng::seed_from_u64(params.seed ^ 0x9e37_79b9_7f4a_7c15),
        used: HashSet::new(),
    };

    let hash_offset = 2 * params.chains;
    let mut corpus = Vec::new();
    let mut qa = Vec::new();
    let mut entries = Vec::new();

    for c in 0..params.chains {
        let (a, b) = (2 * c, 2 * c + 1);
        let entities: Vec<String> = (0..=params.hops).map(|_| names.fresh()).collect();
        let relations: Vec<(&str, &str)> = (0..params.hops)
            .map(|_| *RELATIONS.choose(&mut rng).unwrap())
            .collect();

        let question = format!(
            "Starting from {}, which entity is reached by following {}?",
            entities[0],
            relations
                .iter()
                .map(|(r, _)| format!("\"{r}\""))
                .collect::<Vec<_>>()
                .join(" then ")
        );
        entries.push(OracleEntry::sparse(question.clone(), vec![(a, 1.0)]));

        let mut links = Vec::new();
        for (j, &(rel, phrase)) in relations.iter().enumerate() {
            let (head, tail) = (&entities[j], &entities[j + 1]);
            let id = format!("c{c:03}-h{j}");
            let text = format!("{head} {phrase} {tail}.");
            let passage_vec = on_axes(a, b, if j == 0 { 0.6 } else { LATER_LINK_COSINE });
            entries.push(OracleEntry::sparse(text.clone(), passage_vec));
            corpus.push(CorpusRecord {
                id: id.clone(),
                text,
                triples: Some(vec![[head.clone(), rel.to_owned(), tail.clone()]]),
            });
            links.push(canonical(head, rel, tail));
            if j == params.hops - 1 {
                qa.push(QaRecord {
                    id: format!("q{c:03}"),
                    question: question.clone(),
                    answers: vec![tail.clone()],
                    gold_passage_ids: vec![id],
                });
            }
        }

        entries.push(OracleEntry::sparse(links[0].render(), on_axes(a, b, 0.8)));
        for j in 1..params.hops {
            let cos = 0.8 + 0.19 * j as f32 / (params.hops - 1) as f32;
            let key = serialize_hypernode(&links[..=j])?;
            entries.push(OracleEntry::sparse(key, on_axes(a, b, cos)));
        }

        for j in 0..params.distractors {
            // Every other distractor hangs off the bridge entity so expansion
            // from the first link has competing neighbors.
            let subject = if j % 2 == 0 {
                entities[1].clone()
            } else {
                names.fresh()
            };
            let object = names.fresh();
            let text = format!(
                "{} was often compared with {subject}, who is {DISTRACTOR_RELATION} {object}.",
                entities[0]
            );
            let cos = rng.gen_range(0.3f32..0.9);
            entries.push(OracleEntry::sparse(text.clone(), on_axes(a, b, cos)));
            corpus.push(CorpusRecord {
                id: format!("c{c:03}-d{j:02}"),
                text,
                triples: Some(vec![[subject, DISTRACTOR_RELATION.to_owned(), object]]),
            });
        }
    }

    let fixture = SyntheticFixture {
        corpus,
        qa,
        oracle: OracleTable {
            dimension: hash_offset + encoding::HASH_DIMENSION,
            fallback: OracleFallback::Hash {
                offset: hash_offset,
            },
            entries,
        },
    };
    verify_dense_separation(&fixture, params.check_k)?;
    Ok(fixture)
}

/// Brute-force check that no gold passage is reachable by dense retrieval:
/// its cosine with the question must be non-positive and, when the corpus
/// has more than `k` passages, its rank must be worse than `k`.
pub fn verify_dense_separation(fixture: &SyntheticFixture, k: usize) -> Result<(), SyntheticError> {
    let encoder = OracleEncoder::from_table(&fixture.oracle)?;
    let texts: Vec<String> = fixture.corpus.iter().map(|r| r.text.clone()).collect();
    let passages = encoding::encode(&encoder, &texts)?;
    for q in &fixture.qa {
        let query = encoding::encode_one(&encoder, &q.question)?;
        let mut ranked: Vec<(f64, &str)> = fixture
            .corpus
            .iter()
            .zip(&passages)
            .map(|(r, v)| Ok((cosine(&query, v)?, r.id.as_str())))
            .collect::<Result<_, EncodeError>>()?;
        ranked.sort_by(|x, y| y.0.total_cmp(&x.0).then_with(|| x.1.cmp(y.1)));
        for gold in &q.gold_passage_ids {
            let (pos, (cos, _)) = ranked
                .iter()
                .enumerate()
                .find(|(_, (_, id))| id == gold)
                .expect("gold passage is in the corpus");
            let rank = pos + 1;
            if *cos > 0.0 || (ranked.len() > k && rank <= k) {
                return Err(SyntheticError::DenseLeak {
                    question: q.id.clone(),
                    rank,
                    k,
                });
            }
        }
    }
    Ok(())
}

/// Random corpus of exactly `triplets` unique facts over `entities` entity
/// names, `per_passage` facts per passage. Used for latency measurements
/// with the hash encoder.
pub fn scale_corpus(
    triplets: usize,
    entities: usize,
    per_passage: usize,
    seed: u64,
) -> Vec<CorpusRecord> {
    assert!(entities >= 2 && per_passage >= 1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut seen = HashSet::new();
    let mut facts = Vec::with_capacity(triplets);
    while facts.len() < triplets {
        let h = rng.gen_range(0..entities);
        let t = rng.gen_range(0..entities);
        if h == t {
            continue;
        }
        let (rel, _) = RELATIONS[rng.gen_range(0..RELATIONS.len())];
        if seen.insert((h, rel, t)) {
            facts.push([format!("entity {h}"), rel.to_owned(), format!("entity {t}")]);
        }
    }
    facts
        .chunks(per_passage)
        .enumerate()
        .map(|(i, chunk)| CorpusRecord {
            id: format!("s{i:06}"),
            text: chunk
                .iter()
                .map(|[h, r, t]| format!("{h} {r} {t}."))
                .collect::<Vec<_>>()
                .join(" "),
            triples: Some(chunk.to_vec()),
        })
        .collect()
}

/// Questions about random entities of a [`scale_corpus`].
pub fn scale_queries(count: usize, entities: usize, seed: u64) -> Vec<QaRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|i| {
            let e = rng.gen_range(0..entities);
            let (rel, _) = RELATIONS[rng.gen_range(0..RELATIONS.len())];
            QaRecord {
                id: format!("s{i:04}"),
                question: format!("Who is the {rel} entity {e}?"),
                answers: vec![format!("entity {e}")],
                gold_passage_ids: vec![],
            }
        })
        .collect()
}
