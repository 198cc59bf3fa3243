use std::collections::BTreeMap;

use super::text::tokenize;
use super::CorpusError;
use crate::kg::ConceptId;

/// Lowercase phrase (token sequence) to concept.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Lexicon {
    entries: BTreeMap<Vec<String>, ConceptId>,
    max_len: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConceptSpan {
    pub start: usize,
    pub end: usize,
    pub concept: ConceptId,
}

/// Tokens with sorted, non-overlapping concept spans.
#[derive(Debug, Clone, PartialEq)]
pub struct TaggedSentence {
    pub tokens: Vec<String>,
    pub concept_spans: Vec<ConceptSpan>,
}

impl TaggedSentence {
    pub fn concepts(&self) -> impl Iterator<Item = &ConceptId> {
        self.concept_spans.iter().map(|s| &s.concept)
    }

    pub fn has_concept(&self) -> bool {
        !self.concept_spans.is_empty()
    }
}

impl Lexicon {
    pub fn new() -> Self {
        Self::default()
    }

    /// Later inserts of the same phrase replace earlier ones.
    pub fn insert(&mut self, phrase: Vec<String>, concept: ConceptId) -> Result<(), CorpusError> {
        if phrase.is_empty() || phrase.iter().any(String::is_empty) {
            return Err(CorpusError::Lexicon("empty phrase".into()));
        }
        let phrase: Vec<String> = phrase.iter().map(|t| t.to_lowercase()).collect();
        self.max_len = self.max_len.max(phrase.len());
        self.entries.insert(phrase, concept);
        Ok(())
    }

    pub fn get(&self, phrase: &[String]) -> Option<&ConceptId> {
        self.entries.get(phrase)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&[String], &ConceptId)> {
        self.entries.iter().map(|(k, v)| (k.as_slice(), v))
    }

    /// Lines of `phrase<TAB>conceptid`; blank lines and `#` comments skipped.
    pub fn parse(text: &str) -> Result<Self, CorpusError> {
        let mut lex = Lexicon::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim_end_matches('\r');
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let (phrase, id) = line
                .split_once('\t')
                .ok_or_else(|| CorpusError::Line { line: i + 1, message: "expected phrase<TAB>conceptid".into() })?;
            let concept = ConceptId::parse(id.trim())
                .map_err(|e| CorpusError::Line { line: i + 1, message: e.to_string() })?;
            lex.insert(tokenize(phrase), concept)
                .map_err(|e| CorpusError::Line { line: i + 1, message: e.to_string() })?;
        }
        Ok(lex)
    }

    pub fn to_text(&self) -> String {
        self.entries.iter().map(|(k, v)| format!("{}\t{v}\n", k.join(" "))).collect()
    }
}

/// Greedy longest match, left to right, over lowercased tokens.
pub fn tag_concepts(tokens: &[String], lexicon: &Lexicon) -> TaggedSentence {
    let lower: Vec<String> = tokens.iter().map(|t| t.to_lowercase()).collect();
    let mut spans = Vec::new();
    let mut i = 0;
    while i < lower.len() {
        let longest = (1..=lexicon.max_len.min(lower.len() - i))
            .rev()
            .find_map(|n| lexicon.get(&lower[i..i + n]).map(|c| (n, c)));
        match longest {
            Some((n, c)) => {
                spans.push(ConceptSpan { start: i, end: i + n, concept: c.clone() });
                i += n;
            }
            None => i += 1,
        }
    }
    TaggedSentence { tokens: tokens.to_vec(), concept_spans: spans }
}
