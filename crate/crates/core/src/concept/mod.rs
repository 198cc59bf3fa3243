//! Concept embeddings: joint concept/relation prediction training,
//! parent-hierarchy enrichment and prefix composition for unknown concepts.

mod enrich;
mod train;

use std::collections::BTreeMap;

use thiserror::Error;

use crate::embedding_io::{read_vectors, write_vectors, VectorFileError};
use crate::kg::{ConceptId, KgError};

const ENRICHED_TAG: &str = "enriched";

pub use enrich::{compose_from_prefix, compose_unknown, enrich_hierarchical};
pub use train::{
    joint_loss, train_concept_embeddings, ConceptTrainConfig, JointModel, JointPredictionHead, TrainLog,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EmbedError {
    #[error("cannot train on an empty graph")]
    EmptyGraph,
    #[error("index {index} out of range for {len} classes")]
    Index { index: usize, len: usize },
    #[error("invalid training config: {0}")]
    Config(String),
    #[error("parent {parent} of {child} has no embedding")]
    MissingParentVector { child: ConceptId, parent: ConceptId },
    #[error("{0} already has an embedding")]
    AlreadyKnown(ConceptId),
    #[error("vector for {key} has {found} entries, table dim is {dim}")]
    Dim { key: String, dim: usize, found: usize },
    #[error(transparent)]
    File(#[from] VectorFileError),
    #[error(transparent)]
    Kg(#[from] KgError),
}

/// Concept identifier to dense vector, sorted by identifier.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    dim: usize,
    vectors: BTreeMap<ConceptId, Vec<f64>>,
    enriched: bool,
}

impl EmbeddingTable {
    pub fn new(dim: usize) -> Self {
        EmbeddingTable { dim, vectors: BTreeMap::new(), enriched: false }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    /// Whether the table went through hierarchical enrichment.
    pub fn is_enriched(&self) -> bool {
        self.enriched
    }

    pub fn set_enriched(&mut self, enriched: bool) {
        self.enriched = enriched;
    }

    pub fn insert(&mut self, id: ConceptId, v: Vec<f64>) -> Result<(), EmbedError> {
        if v.len() != self.dim {
            return Err(EmbedError::Dim { key: id.to_string(), dim: self.dim, found: v.len() });
        }
        debug_assert!(v.iter().all(|x| x.is_finite()));
        self.vectors.insert(id, v);
        Ok(())
    }

    pub fn get(&self, id: &ConceptId) -> Option<&[f64]> {
        self.vectors.get(id).map(Vec::as_slice)
    }

    pub fn contains(&self, id: &ConceptId) -> bool {
        self.vectors.contains_key(id)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&ConceptId, &[f64])> {
        self.vectors.iter().map(|(k, v)| (k, v.as_slice()))
    }

    /// Header extra field `enriched` marks hierarchy-enriched tables.
    pub fn to_text(&self) -> String {
        let extra = if self.enriched { vec![ENRICHED_TAG.to_string()] } else { Vec::new() };
        write_vectors(self.dim, &extra, self.vectors.iter().map(|(k, v)| (k.as_str(), v.as_slice())))
    }

    pub fn from_text(text: &str) -> Result<Self, EmbedError> {
        let file = read_vectors(text)?;
        let mut table = EmbeddingTable::new(file.dim);
        table.enriched = file.extra.iter().any(|e| e == ENRICHED_TAG);
        for (key, v) in file.rows {
            table.insert(ConceptId::parse(&key)?, v)?;
        }
        Ok(table)
    }
}

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn text_round_trip() {
        let mut t = EmbeddingTable::new(2);
        t.insert(ConceptId::parse("C0000002").unwrap(), vec![0.1, 1.0 / 3.0]).unwrap();
        t.insert(ConceptId::parse("C0000001").unwrap(), vec![-2.0, 5e-20]).unwrap();
        let text = t.to_text();
        assert!(text.starts_with("2 2\nC0000001 "));
        assert_eq!(EmbeddingTable::from_text(&text).unwrap(), t);
        assert!(matches!(
            t.insert(ConceptId::parse("C0000003").unwrap(), vec![1.0]),
            Err(EmbedError::Dim { .. })
        ));
        assert!(EmbeddingTable::from_text("1 1\nX0000001 1.0\n").is_err());
        t.set_enriched(true);
        let back = EmbeddingTable::from_text(&t.to_text()).unwrap();
        assert!(back.is_enriched());
        assert_eq!(back, t);
    }
}
