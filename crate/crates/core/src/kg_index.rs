//! Knowledge graph over canonical triplets.
//!
//! The graph keeps three structures, all derived from the passage list:
//!
//! * a sorted catalog of unique [`Triplet`]s, addressed by [`TripletId`];
//! * the triple-to-passage provenance map, where every passage `p` attaches
//!   weight `1 / |T_p|` to each unique triplet it contains;
//! * an undirected entity adjacency map (head and tail both index the triplet).
//!
//! Once built, a [`KnowledgeGraph`] is never mutated by retrieval and can be
//! shared across threads.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::encoding::GraphEmbeddings;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GraphError {
    #[error("triplet field `{field}` is empty after canonicalization")]
    EmptyField { field: &'static str },
    #[error("duplicate passage id `{0}`")]
    DuplicatePassageId(String),
    #[error("knowledge graph has no triplets")]
    EmptyGraph,
}

/// Trims, collapses internal whitespace to single spaces and lowercases.
///
/// Non-ASCII characters are lowercased with the standard Unicode mapping and
/// otherwise pass through (no accent folding).
pub fn canonicalize_text(raw: &str) -> String {
    let mut out = String::with_capacity(raw.len());
    for word in raw.split_whitespace() {
        if !out.is_empty() {
            out.push(' ');
        }
        out.extend(word.chars().flat_map(char::to_lowercase));
    }
    out
}

/// A canonical `(head, relation, tail)` fact.
///
/// Field order matters: the derived `Ord` compares head, then relation, then
/// tail, byte-wise. That order is the catalog order and the hypernode
/// serialization order.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(into = "[String; 3]", try_from = "[String; 3]")]
pub struct Triplet {
    head: String,
    relation: String,
    tail: String,
}

impl Triplet {
    pub fn new(head: &str, relation: &str, tail: &str) -> Result<Self, GraphError> {
        canonicalize_triplet(head, relation, tail)
    }

    pub fn head(&self) -> &str {
        &self.head
    }

    pub fn relation(&self) -> &str {
        &self.relation
    }

    pub fn tail(&self) -> &str {
        &self.tail
    }

    /// `"head relation tail"`, the unit rendering used for encoding.
    pub fn render(&self) -> String {
        format!("{} {} {}", self.head, self.relation, self.tail)
    }

    pub fn touches(&self, entity: &str) -> bool {
        self.head == entity || self.tail == entity
    }
}

impl fmt::Display for Triplet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, {})", self.head, self.relation, self.tail)
    }
}

impl From<Triplet> for [String; 3] {
    fn from(t: Triplet) -> Self {
        [t.head, t.relation, t.tail]
    }
}

impl TryFrom<[String; 3]> for Triplet {
    type Error = GraphError;

    fn try_from([h, r, t]: [String; 3]) -> Result<Self, Self::Error> {
        canonicalize_triplet(&h, &r, &t)
    }
}

pub fn canonicalize_triplet(
    raw_head: &str,
    raw_relation: &str,
    raw_tail: &str,
) -> Result<Triplet, GraphError> {
    let field = |raw: &str, name: &'static str| {
        let c = canonicalize_text(raw);
        if c.is_empty() {
            Err(GraphError::EmptyField { field: name })
        } else {
            Ok(c)
        }
    };
    Ok(Triplet {
        head: field(raw_head, "head")?,
        relation: field(raw_relation, "relation")?,
        tail: field(raw_tail, "tail")?,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Passage {
    pub id: String,
    pub text: String,
    pub triplets: Vec<Triplet>,
}

impl Passage {
    pub fn new(id: impl Into<String>, text: impl Into<String>, triplets: Vec<Triplet>) -> Self {
        Self {
            id: id.into(),
            text: text.into(),
            triplets,
        }
    }

    /// Number of distinct triplets, the denominator of the provenance weight.
    pub fn unique_triplet_count(&self) -> usize {
        self.triplets.iter().collect::<BTreeSet<_>>().len()
    }
}

/// Position of a triplet in the sorted catalog.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TripletId(pub u32);

impl TripletId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

/// Density weight `1 / denominator`, kept as a rational so the weight law can
/// be checked exactly.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Weight {
    denominator: u32,
}

impl Weight {
    pub fn reciprocal_of(denominator: usize) -> Self {
        assert!(denominator > 0, "weight denominator must be positive");
        Self {
            denominator: u32::try_from(denominator).expect("triplet count fits in u32"),
        }
    }

    pub fn denominator(self) -> u32 {
        self.denominator
    }

    pub fn value(self) -> f64 {
        1.0 / f64::from(self.denominator)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Provenance {
    pub passage_id: String,
    pub weight: Weight,
}

/// Triple-to-passage index plus entity adjacency.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TripleToPassageIndex {
    catalog: Vec<Triplet>,
    positions: HashMap<Triplet, TripletId>,
    /// Indexed by `TripletId`, entries sorted by passage id.
    provenance: Vec<Vec<Provenance>>,
    /// Entity -> ascending triplet ids touching it.
    adjacency: BTreeMap<String, Vec<TripletId>>,
}

impl TripleToPassageIndex {
    fn build<'a>(passages: impl Iterator<Item = &'a Passage>) -> Self {
        let mut sources: BTreeMap<&Triplet, Vec<Provenance>> = BTreeMap::new();
        for passage in passages {
            let unique: BTreeSet<&Triplet> = passage.triplets.iter().collect();
            if unique.is_empty() {
                continue;
            }
            let weight = Weight::reciprocal_of(unique.len());
            for triplet in unique {
                sources.entry(triplet).or_default().push(Provenance {
                    passage_id: passage.id.clone(),
                    weight,
                });
            }
        }

        let mut index = Self::default();
        for (position, (triplet, mut entries)) in sources.into_iter().enumerate() {
            let id = TripletId(u32::try_from(position).expect("catalog fits in u32"));
            entries.sort_by(|a, b| a.passage_id.cmp(&b.passage_id));
            index.catalog.push(triplet.clone());
            index.positions.insert(triplet.clone(), id);
            index.provenance.push(entries);
            index
                .adjacency
                .entry(triplet.head.clone())
                .or_default()
                .push(id);
            if triplet.tail != triplet.head {
                index
                    .adjacency
                    .entry(triplet.tail.clone())
                    .or_default()
                    .push(id);
            }
        }
        index
    }

    pub fn catalog(&self) -> &[Triplet] {
        &self.catalog
    }

    pub fn id_of(&self, triplet: &Triplet) -> Option<TripletId> {
        self.positions.get(triplet).copied()
    }

    pub fn triplet(&self, id: TripletId) -> &Triplet {
        &self.catalog[id.index()]
    }

    pub fn provenance(&self, id: TripletId) -> &[Provenance] {
        &self.provenance[id.index()]
    }

    /// Triplet ids incident to `entity`, ascending.
    pub fn incident(&self, entity: &str) -> &[TripletId] {
        self.adjacency.get(entity).map_or(&[], Vec::as_slice)
    }

    pub fn entities(&self) -> impl Iterator<Item = &str> {
        self.adjacency.keys().map(String::as_str)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KnowledgeGraph {
    passages: BTreeMap<String, Passage>,
    index: TripleToPassageIndex,
    embeddings: Option<GraphEmbeddings>,
}

impl KnowledgeGraph {
    /// Builds the index from passages. The result does not depend on the
    /// order of `passages`.
    pub fn build(passages: Vec<Passage>) -> Result<Self, GraphError> {
        let mut by_id = BTreeMap::new();
        for passage in passages {
            if by_id.contains_key(&passage.id) {
                return Err(GraphError::DuplicatePassageId(passage.id));
            }
            by_id.insert(passage.id.clone(), passage);
        }
        let index = TripleToPassageIndex::build(by_id.values());
        Ok(Self {
            passages: by_id,
            index,
            embeddings: None,
        })
    }

    pub fn with_embeddings(mut self, embeddings: GraphEmbeddings) -> Self {
        self.embeddings = Some(embeddings);
        self
    }

    pub fn embeddings(&self) -> Option<&GraphEmbeddings> {
        self.embeddings.as_ref()
    }

    pub fn index(&self) -> &TripleToPassageIndex {
        &self.index
    }

    /// Passages in ascending id order. Passage embedding rows follow this order.
    pub fn passages(&self) -> impl ExactSizeIterator<Item = &Passage> {
        self.passages.values()
    }

    pub fn passage(&self, id: &str) -> Option<&Passage> {
        self.passages.get(id)
    }

    pub fn passage_count(&self) -> usize {
        self.passages.len()
    }

    pub fn triplet_count(&self) -> usize {
        self.index.catalog.len()
    }

    pub fn is_empty(&self) -> bool {
        self.index.catalog.is_empty()
    }

    /// `Φ(τ)` as `(passage id, weight)` pairs; empty for unknown triplets.
    pub fn provenance_of(&self, triplet: &Triplet) -> Vec<(String, f64)> {
        self.index
            .id_of(triplet)
            .map(|id| {
                self.index
                    .provenance(id)
                    .iter()
                    .map(|p| (p.passage_id.clone(), p.weight.value()))
                    .collect()
            })
            .unwrap_or_default()
    }

    /// Union of the adjacency lists of `entities`.
    pub fn adjacent_triplets<'a, I>(&self, entities: I) -> BTreeSet<Triplet>
    where
        I: IntoIterator<Item = &'a str>,
    {
        self.adjacent_ids(entities)
            .into_iter()
            .map(|id| self.index.triplet(id).clone())
            .collect()
    }

    pub fn adjacent_ids<'a, I>(&self, entities: I) -> BTreeSet<TripletId>
    where
        I: IntoIterator<Item = &'a str>,
    {
        entities
            .into_iter()
            .flat_map(|e| self.index.incident(e).iter().copied())
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(h: &str, r: &str, tl: &str) -> Triplet {
        Triplet::new(h, r, tl).unwrap()
    }

    #[test]
    fn canonicalizes_case_study_seed() {
        let got = canonicalize_triplet(
            "  Princess Elene Of Georgia ",
            "Mother Of",
            "Solomon II of Imereti",
        )
        .unwrap();
        assert_eq!(got.head(), "princess elene of georgia");
        assert_eq!(got.relation(), "mother of");
        assert_eq!(got.tail(), "solomon ii of imereti");
    }

    #[test]
    fn canonical_input_is_unchanged() {
        let got = canonicalize_triplet("a", "b", "c").unwrap();
        assert_eq!((got.head(), got.relation(), got.tail()), ("a", "b", "c"));
    }

    #[test]
    fn whitespace_only_field_is_rejected() {
        assert_eq!(
            canonicalize_triplet("x", "  ", "y"),
            Err(GraphError::EmptyField { field: "relation" })
        );
    }

    #[test]
    fn accents_pass_through() {
        assert_eq!(
            canonicalize_text("Charlotte of  Württemberg"),
            "charlotte of württemberg"
        );
    }

    #[test]
    fn single_passage_weights() {
        let p = Passage::new(
            "p1",
            "",
            vec![
                t("a", "r", "b"),
                t("b", "r", "c"),
                t("c", "r", "d"),
                t("d", "r", "e"),
            ],
        );
        let g = KnowledgeGraph::build(vec![p]).unwrap();
        for triplet in g.index().catalog() {
            assert_eq!(g.provenance_of(triplet), vec![("p1".to_string(), 0.25)]);
        }
    }

    #[test]
    fn shared_triplet_collects_both_passages() {
        let shared = t("a", "r", "b");
        let p1 = Passage::new("p1", "", vec![shared.clone(), t("x", "r", "y")]);
        let mut p2_triplets = vec![shared.clone()];
        p2_triplets.extend((0..4).map(|i| t("q", "r", &format!("z{i}"))));
        let p2 = Passage::new("p2", "", p2_triplets);
        let g = KnowledgeGraph::build(vec![p2, p1]).unwrap();
        assert_eq!(
            g.provenance_of(&shared),
            vec![("p1".to_string(), 0.5), ("p2".to_string(), 0.2)]
        );
        assert!(g.provenance_of(&t("no", "such", "fact")).is_empty());
    }

    #[test]
    fn singleton_passage_has_unit_weight() {
        let g = KnowledgeGraph::build(vec![Passage::new("p", "", vec![t("a", "r", "b")])]).unwrap();
        assert_eq!(
            g.provenance_of(&t("a", "r", "b")),
            vec![("p".to_string(), 1.0)]
        );
    }

    #[test]
    fn empty_passage_contributes_nothing() {
        let g = KnowledgeGraph::build(vec![Passage::new("p", "text", vec![])]).unwrap();
        assert_eq!(g.passage_count(), 1);
        assert!(g.is_empty());
        assert_eq!(g.index().entities().count(), 0);
    }

    #[test]
    fn duplicate_triplets_counted_once() {
        let p = Passage::new(
            "p",
            "",
            vec![t("a", "r", "b"), t("a", "r", "b"), t("b", "r", "c")],
        );
        let g = KnowledgeGraph::build(vec![p]).unwrap();
        assert_eq!(
            g.provenance_of(&t("a", "r", "b")),
            vec![("p".to_string(), 0.5)]
        );
    }

    #[test]
    fn duplicate_passage_ids_rejected() {
        let err = KnowledgeGraph::build(vec![
            Passage::new("p", "", vec![]),
            Passage::new("p", "", vec![]),
        ])
        .unwrap_err();
        assert_eq!(err, GraphError::DuplicatePassageId("p".into()));
    }

    #[test]
    fn chain_adjacency() {
        let chain = vec![t("a", "r1", "b"), t("b", "r2", "c"), t("c", "r3", "d")];
        let g = KnowledgeGraph::build(vec![Passage::new("p", "", chain.clone())]).unwrap();
        let got = g.adjacent_triplets(["b"]);
        let brute: BTreeSet<_> = chain.iter().filter(|x| x.touches("b")).cloned().collect();
        assert_eq!(got, brute);
        assert_eq!(got.len(), 2);
        assert!(g.adjacent_triplets(std::iter::empty()).is_empty());
        assert!(g.adjacent_triplets(["z"]).is_empty());
    }

    #[test]
    fn self_loop_listed_once() {
        let g = KnowledgeGraph::build(vec![Passage::new("p", "", vec![t("a", "r", "a")])]).unwrap();
        assert_eq!(g.index().incident("a").len(), 1);
    }

    #[test]
    fn triplet_serde_canonicalizes() {
        let got: Triplet = serde_json::from_str(r#"["A ", "Is  A", "B"]"#).unwrap();
        assert_eq!(got, t("a", "is a", "b"));
        assert!(serde_json::from_str::<Triplet>(r#"["", "r", "b"]"#).is_err());
    }
}
