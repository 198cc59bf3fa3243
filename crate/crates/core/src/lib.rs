//! Concept-enhanced sequence-to-sequence text generation.
//!
//! The crate covers the whole pipeline: an ontology store of concept
//! triplets, joint concept/relation embeddings with parent-hierarchy
//! enrichment, subword word embeddings, document preprocessing, a small
//! reverse-mode autodiff engine with LSTM and additive attention, the five
//! generation model variants, and perplexity / questionnaire evaluation.
//! A deterministic synthetic data generator stands in for restricted
//! clinical corpora.

pub mod concept;
pub mod corpus;
pub mod embedding_io;
pub mod eval;
pub mod kg;
pub mod models;
pub mod neural;
pub mod synth;
pub mod word;

pub use concept::{ConceptTrainConfig, EmbeddingTable};



pub use kg::{ConceptGraph, ConceptId, RelationLabel, Triplet};


pub use corpus::{Document, Example, Lexicon, TaggedSentence};
pub use word::{SubwordTable, WordTrainConfig};
pub use models::{build_model, GenerationModel, ModelConfig, ModelVariant, TrainRunConfig, Vocab};
