//! Concept triplet store.
//!
//! Triplets are `(subject, object, relation)` facts over concept identifiers.
//! The store keeps them deduplicated and sorted, and indexes the `PAR`
//! (child to parent) hierarchy plus 7-character identifier prefixes.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use thiserror::Error;

/// Relation label that defines the concept hierarchy.
pub const PARENT_RELATION: &str = "PAR";

/// Number of leading characters shared by a prefix bucket.
pub const PREFIX_LEN: usize = 7;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum KgError {
    #[error("invalid concept id {0:?}: expected 'C' followed by 7 digits")]
    Format(String),
    #[error("invalid relation label {0:?}")]
    Relation(String),
    #[error("self-loop triplet on {0}")]
    SelfLoop(ConceptId),
    #[error("prefix {0:?} must be exactly 7 characters")]
    PrefixLength(String),
    #[error("line {line}: {message}")]
    Line { line: usize, message: String },
}

/// Concept identifier: the letter `C` followed by seven decimal digits.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ConceptId(String);

impl ConceptId {
    pub fn parse(text: &str) -> Result<Self, KgError> {
        let bytes = text.as_bytes();
        let valid = bytes.len() == 8
            && bytes[0] == b'C'
            && bytes[1..].iter().all(|b| b.is_ascii_digit());
        if valid {
            Ok(ConceptId(text.to_string()))
        } else {
            Err(KgError::Format(text.to_string()))
        }
    }

    /// Builds an identifier from its numeric part (`0..10^7`).
    pub fn from_number(n: u32) -> Result<Self, KgError> {
        if n >= 10_000_000 {
            return Err(KgError::Format(format!("C{n}")));
        }
        Ok(ConceptId(format!("C{n:07}")))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn prefix(&self) -> &str {
        &self.0[..PREFIX_LEN]
    }
}

impl fmt::Display for ConceptId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl FromStr for ConceptId {
    type Err = KgError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ConceptId::parse(s)
    }
}

/// Shorthand for [`ConceptId::parse`].
pub fn parse_concept_id(text: &str) -> Result<ConceptId, KgError> {
    ConceptId::parse(text)
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct RelationLabel(String);

impl RelationLabel {
    pub fn parse(text: &str) -> Result<Self, KgError> {
        if text.is_empty() || text.chars().any(char::is_whitespace) {
            return Err(KgError::Relation(text.to_string()));
        }
        Ok(RelationLabel(text.to_string()))
    }

    pub fn parent() -> Self {
        RelationLabel(PARENT_RELATION.to_string())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn is_parent(&self) -> bool {
        self.0 == PARENT_RELATION
    }
}

impl fmt::Display for RelationLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

// Field order gives the (subject, object, relation) sort used everywhere.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Triplet {
    pub subject: ConceptId,
    pub object: ConceptId,
    pub relation: RelationLabel,
}

impl Triplet {
    pub fn new(subject: ConceptId, object: ConceptId, relation: RelationLabel) -> Self {
        Triplet { subject, object, relation }
    }
}

/// Immutable, indexed collection of deduplicated triplets.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConceptGraph {
    triplets: BTreeSet<Triplet>,
    parent_index: BTreeMap<ConceptId, BTreeSet<ConceptId>>,
    adjacency: BTreeMap<ConceptId, BTreeSet<(ConceptId, RelationLabel)>>,
    relation_vocab: BTreeSet<RelationLabel>,
    concept_vocab: BTreeSet<ConceptId>,
    prefix_index: BTreeMap<String, BTreeSet<ConceptId>>,
}

impl ConceptGraph {
    /// Loads `(subject, object, relation)` text triples, rejecting self-loops.
    pub fn load<I, S>(lines: I) -> Result<Self, KgError>
    where
        I: IntoIterator<Item = (S, S, S)>,
        S: AsRef<str>,
    {
        Self::load_with(lines, false)
    }

    pub fn load_with<I, S>(lines: I, allow_self_loops: bool) -> Result<Self, KgError>
    where
        I: IntoIterator<Item = (S, S, S)>,
        S: AsRef<str>,
    {
        let mut triplets = Vec::new();
        for (s, o, r) in lines {
            let subject = ConceptId::parse(s.as_ref())?;
            let object = ConceptId::parse(o.as_ref())?;
            let relation = RelationLabel::parse(r.as_ref())?;
            if subject == object && !allow_self_loops {
                return Err(KgError::SelfLoop(subject));
            }
            triplets.push(Triplet::new(subject, object, relation));
        }
        Ok(Self::from_triplets(triplets))
    }

    pub fn from_triplets(triplets: impl IntoIterator<Item = Triplet>) -> Self {
        let mut graph = ConceptGraph::default();
        for t in triplets {
            if !graph.triplets.insert(t.clone()) {
                continue;
            }
            graph.concept_vocab.insert(t.subject.clone());
            graph.concept_vocab.insert(t.object.clone());
            graph.relation_vocab.insert(t.relation.clone());
            if t.relation.is_parent() {
                graph
                    .parent_index
                    .entry(t.subject.clone())
                    .or_default()
                    .insert(t.object.clone());
            }
            graph
                .adjacency
                .entry(t.subject.clone())
                .or_default()
                .insert((t.object.clone(), t.relation.clone()));
        }
        for c in &graph.concept_vocab {
            graph
                .prefix_index
                .entry(c.prefix().to_string())
                .or_default()
                .insert(c.clone());
        }
        graph
    }

    pub fn is_empty(&self) -> bool {
        self.triplets.is_empty()
    }

    pub fn len(&self) -> usize {
        self.triplets.len()
    }

    pub fn triplets(&self) -> impl Iterator<Item = &Triplet> {
        self.triplets.iter()
    }

    pub fn concept_vocab(&self) -> &BTreeSet<ConceptId> {
        &self.concept_vocab
    }

    pub fn relation_vocab(&self) -> &BTreeSet<RelationLabel> {
        &self.relation_vocab
    }

    pub fn contains(&self, c: &ConceptId) -> bool {
        self.concept_vocab.contains(c)
    }

    /// Distinct subjects in sorted order.
    pub fn subjects(&self) -> Vec<&ConceptId> {
        self.adjacency.keys().collect()
    }

    /// Distinct objects in sorted order.
    pub fn objects(&self) -> BTreeSet<&ConceptId> {
        self.triplets.iter().map(|t| &t.object).collect()
    }

    /// Parents of `c` through `PAR` edges; empty for unknown concepts.
    pub fn parents_of(&self, c: &ConceptId) -> BTreeSet<ConceptId> {
        self.parent_index.get(c).cloned().unwrap_or_default()
    }

    pub(crate) fn parents_ref(&self, c: &ConceptId) -> Option<&BTreeSet<ConceptId>> {
        self.parent_index.get(c)
    }

    /// All `(object, relation)` pairs with subject `c`, sorted by object then relation.
    pub fn neighbors(&self, c: &ConceptId) -> Vec<(ConceptId, RelationLabel)> {
        self.adjacency
            .get(c)
            .map(|set| set.iter().cloned().collect())
            .unwrap_or_default()
    }

    pub fn prefix_bucket(&self, prefix: &str) -> Result<BTreeSet<ConceptId>, KgError> {
        if prefix.chars().count() != PREFIX_LEN {
            return Err(KgError::PrefixLength(prefix.to_string()));
        }
        Ok(self.prefix_index.get(prefix).cloned().unwrap_or_default())
    }

    /// Renders the graph in the tab-separated triplet file format.
    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        for t in &self.triplets {
            out.push_str(&format!("{}\t{}\t{}\n", t.subject, t.object, t.relation));
        }
        out
    }
}

/// Parses the tab-separated triplet file: `subject<TAB>object<TAB>relation`,
/// `#` comments and blank lines ignored.
pub fn parse_triplet_file(text: &str) -> Result<Vec<(String, String, String)>, KgError> {
    let mut lines = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim_end_matches('\r');
        if line.starts_with('#') || line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 3 {
            return Err(KgError::Line {
                line: i + 1,
                message: format!("expected 3 tab-separated fields, found {}", fields.len()),
            });
        }
        lines.push((fields[0].to_string(), fields[1].to_string(), fields[2].to_string()));
    }
    Ok(lines)
}

pub fn load_triplet_file(text: &str) -> Result<ConceptGraph, KgError> {
    let lines = parse_triplet_file(text)?;
    ConceptGraph::load(lines)
}
