//! Random corpora and brute-force reference implementations shared by the
//! acceptance and property tests. The references work from raw corpus
//! records and never consult the library's graph or index types.

#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet, HashSet};

use helprag_core::encoding::{encode_one, Encoder, UnitVector};
use helprag_core::ingestion::CorpusRecord;
use rand::seq::SliceRandom;
use rand::Rng;

pub type Fact = [String; 3];

const WORDS: &[&str] = &[
    "river", "castle", "prince", "harbor", "meadow", "archive", "lantern", "falcon", "orchard",
    "granite", "violet", "copper", "summit", "willow", "beacon", "thistle", "quarry", "saddle",
    "ember", "glacier",
];
const RELATIONS: &[&str] = &[
    "mother of",
    "born in",
    "married",
    "located in",
    "founded",
    "rival of",
    "author of",
];

pub fn canon(s: &str) -> String {
    s.split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
        .to_lowercase()
}

pub fn canon_fact(raw: &[String; 3]) -> Fact {
    [canon(&raw[0]), canon(&raw[1]), canon(&raw[2])]
}

pub fn render(f: &Fact) -> String {
    format!("{} {} {}", f[0], f[1], f[2])
}

pub fn key(set: &BTreeSet<Fact>) -> String {
    set.iter().map(render).collect::<Vec<_>>().join("; ")
}

/// Messes up spacing and case without changing the canonical form.
fn scramble<R: Rng>(rng: &mut R, s: &str) -> String {
    let mut out = String::new();
    if rng.gen_bool(0.2) {
        out.push_str("  ");
    }
    for (i, w) in s.split(' ').enumerate() {
        if i > 0 {
            out.push_str(if rng.gen_bool(0.2) { " \t " } else { " " });
        }
        if rng.gen_bool(0.3) {
            out.push_str(&w.to_uppercase());
        } else {
            out.push_str(w);
        }
    }
    if rng.gen_bool(0.2) {
        out.push(' ');
    }
    out
}

/// A random corpus with at most `max_facts` distinct canonical facts.
/// Passages may repeat a fact (in a different surface form) and several
/// passages may share one.
pub fn random_corpus<R: Rng>(rng: &mut R, max_facts: usize) -> Vec<CorpusRecord> {
    let entity_count = rng.gen_range(4..=40);
    let entities: Vec<String> = (0..entity_count)
        .map(|i| format!("{} {}", WORDS.choose(rng).unwrap(), i))
        .collect();
    let fact_target = rng.gen_range(1..=max_facts.max(1));
    let mut facts: Vec<Fact> = Vec::new();
    let mut seen = HashSet::new();
    for _ in 0..fact_target * 3 {
        if facts.len() >= fact_target {
            break;
        }
        let h = entities.choose(rng).unwrap().clone();
        let t = entities.choose(rng).unwrap().clone();
        let r = RELATIONS.choose(rng).unwrap().to_string();
        let f = [h, r, t];
        if seen.insert(f.clone()) {
            facts.push(f);
        }
    }
    let passage_count = rng.gen_range(1..=(facts.len() / 2).max(1) + 1);
    let mut records: Vec<CorpusRecord> = (0..passage_count)
        .map(|i| CorpusRecord {
            id: format!("p{i:03}"),
            text: format!("passage {i} about {}", WORDS.choose(rng).unwrap()),
            triples: Some(Vec::new()),
        })
        .collect();
    for f in &facts {
        let copies = if rng.gen_bool(0.2) { 2 } else { 1 };
        for _ in 0..copies {
            let p = rng.gen_range(0..records.len());
            let raw = [
                scramble(rng, &f[0]),
                scramble(rng, &f[1]),
                scramble(rng, &f[2]),
            ];
            records[p].triples.as_mut().unwrap().push(raw);
        }
    }
    records.retain(|r| !r.triples.as_ref().unwrap().is_empty());
    records
}

pub fn random_query<R: Rng>(rng: &mut R) -> String {
    let n = rng.gen_range(1..=4);
    (0..n)
        .map(|_| WORDS.choose(rng).unwrap().to_string())
        .collect::<Vec<_>>()
        .join(" ")
}

/// Passage id -> set of canonical facts.
pub fn passage_facts(records: &[CorpusRecord]) -> BTreeMap<String, BTreeSet<Fact>> {
    records
        .iter()
        .map(|r| {
            let facts = r.triples.iter().flatten().map(canon_fact).collect();
            (r.id.clone(), facts)
        })
        .collect()
}

fn dot(a: &UnitVector, b: &UnitVector) -> f64 {
    a.as_slice()
        .iter()
        .zip(b.as_slice())
        .map(|(&x, &y)| f64::from(x) * f64::from(y))
        .sum()
}

fn euclid(a: &UnitVector, b: &UnitVector) -> f64 {
    a.as_slice()
        .iter()
        .zip(b.as_slice())
        .map(|(&x, &y)| (f64::from(x) - f64::from(y)).powi(2))
        .sum::<f64>()
        .sqrt()
}

/// Reference expansion: top-`n` facts by cosine, then per hop every path
/// extended by every fact sharing an entity with it (or kept as is when
/// there is none), deduplicated by fact set, the `k` nearest kept.
pub fn reference_expansion(
    records: &[CorpusRecord],
    encoder: &dyn Encoder,
    query: &str,
    hops: usize,
    n: usize,
    k: usize,
) -> Vec<(BTreeSet<Fact>, f64)> {
    let facts: BTreeSet<Fact> = passage_facts(records).into_values().flatten().collect();
    if facts.is_empty() {
        return Vec::new();
    }
    let q = encode_one(encoder, query).unwrap();
    let embed = |set: &BTreeSet<Fact>| encode_one(encoder, &key(set)).unwrap();

    let mut seeds: Vec<(f64, String, Fact)> = facts
        .iter()
        .map(|f| {
            (
                dot(&q, &encode_one(encoder, &render(f)).unwrap()),
                render(f),
                f.clone(),
            )
        })
        .collect();
    seeds.sort_by(|a, b| b.0.total_cmp(&a.0).then_with(|| a.1.cmp(&b.1)));
    let mut beam: Vec<(BTreeSet<Fact>, f64)> = seeds
        .into_iter()
        .take(n)
        .map(|(_, _, f)| {
            let set = BTreeSet::from([f]);
            let d = euclid(&embed(&set), &q);
            (set, d)
        })
        .collect();

    for _ in 2..=hops {
        let mut seen = HashSet::new();
        let mut next: Vec<(BTreeSet<Fact>, f64, String)> = Vec::new();
        for (set, _) in &beam {
            let entities: HashSet<&String> = set.iter().flat_map(|f| [&f[0], &f[2]]).collect();
            let mut grew = false;
            for f in &facts {
                if set.contains(f) || !(entities.contains(&f[0]) || entities.contains(&f[2])) {
                    continue;
                }
                grew = true;
                let mut bigger = set.clone();
                bigger.insert(f.clone());
                let k = key(&bigger);
                if seen.insert(k.clone()) {
                    let d = euclid(&embed(&bigger), &q);
                    next.push((bigger, d, k));
                }
            }
            if !grew {
                let k = key(set);
                if seen.insert(k.clone()) {
                    let d = euclid(&embed(set), &q);
                    next.push((set.clone(), d, k));
                }
            }
        }
        next.sort_by(|a, b| a.1.total_cmp(&b.1).then_with(|| a.2.cmp(&b.2)));
        next.truncate(k);
        beam = next.into_iter().map(|(s, d, _)| (s, d)).collect();
    }
    beam
}

/// Reference passage scores: the plain triple sum over paths, facts and
/// the passages each fact came from, with weight 1/|distinct facts in p|.
pub fn reference_scores(
    records: &[CorpusRecord],
    paths: &[(BTreeSet<Fact>, f64)],
) -> BTreeMap<String, f64> {
    let by_passage = passage_facts(records);
    let mut scores = BTreeMap::new();
    for (set, dist) in paths {
        for fact in set {
            for (pid, facts) in &by_passage {
                if facts.contains(fact) {
                    *scores.entry(pid.clone()).or_insert(0.0) += (-dist).exp() / facts.len() as f64;
                }
            }
        }
    }
    scores.retain(|_, s| *s > 0.0);
    scores
}

pub fn fact_of(t: &helprag_core::Triplet) -> Fact {
    [
        t.head().to_owned(),
        t.relation().to_owned(),
        t.tail().to_owned(),
    ]
}

pub fn relative_error(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        (a - b).abs() / a.abs().max(b.abs())
    }
}
