use std::collections::{BTreeMap, BTreeSet};

use super::tagging::TaggedSentence;
use super::{CorpusError, Example};

/// Corpus unigram probabilities with a floor of `1/(N+1)` for unseen tokens.
#[derive(Debug, Clone, PartialEq)]
pub struct UnigramModel {
    probs: BTreeMap<String, f64>,
    floor: f64,
}

impl UnigramModel {
    pub fn from_tokens<'a>(tokens: impl IntoIterator<Item = &'a str>) -> Self {
        let mut counts: BTreeMap<String, usize> = BTreeMap::new();
        let mut total = 0usize;
        for t in tokens {
            *counts.entry(t.to_string()).or_default() += 1;
            total += 1;
        }
        let probs = counts.into_iter().map(|(t, c)| (t, c as f64 / total as f64)).collect();
        UnigramModel { probs, floor: 1.0 / (total as f64 + 1.0) }
    }

    pub fn from_probs(probs: BTreeMap<String, f64>, floor: f64) -> Self {
        UnigramModel { probs, floor }
    }

    pub fn prob(&self, token: &str) -> f64 {
        self.probs.get(token).copied().unwrap_or(self.floor)
    }

    pub fn floor(&self) -> f64 {
        self.floor
    }
}

/// `−Σ p(t) log₂ p(t)` over the distinct tokens of the sentence.
pub fn sentence_entropy(tokens: &[String], probs: &UnigramModel) -> f64 {
    let distinct: BTreeSet<&str> = tokens.iter().map(String::as_str).collect();
    distinct
        .into_iter()
        .map(|t| {
            let p = probs.prob(t);
            -p * p.log2()
        })
        .sum()
}

/// Concept-bearing sentences whose entropy ranks within the top
/// `ceil(keep_fraction · n)`, `n` counting concept-bearing sentences only.
/// Ties favour earlier positions; document order is preserved.
pub fn select_informative(
    sentences: &[TaggedSentence],
    probs: &UnigramModel,
    keep_fraction: f64,
) -> Result<Vec<TaggedSentence>, CorpusError> {
    if !(keep_fraction > 0.0 && keep_fraction <= 1.0) {
        return Err(CorpusError::KeepFraction(keep_fraction));
    }
    let mut scored: Vec<(usize, f64)> = sentences
        .iter()
        .enumerate()
        .filter(|(_, s)| s.has_concept())
        .map(|(i, s)| (i, sentence_entropy(&s.tokens, probs)))
        .collect();
    let keep = (keep_fraction * scored.len() as f64).ceil() as usize;
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    let mut chosen: Vec<usize> = scored.into_iter().take(keep).map(|(i, _)| i).collect();
    chosen.sort_unstable();
    Ok(chosen.into_iter().map(|i| sentences[i].clone()).collect())
}

pub const SOURCE_SENTENCES: usize = 5;

/// First five sentences form the source, the rest the target.
pub fn split_example(id: &str, sentences: &[TaggedSentence]) -> Result<Example, CorpusError> {
    if sentences.len() <= SOURCE_SENTENCES {
        return Err(CorpusError::TooShort { id: id.to_string(), sentences: sentences.len() });
    }
    let (src, tgt) = sentences.split_at(SOURCE_SENTENCES);
    Ok(Example {
        id: id.to_string(),
        source_tokens: src.iter().flat_map(|s| s.tokens.iter().cloned()).collect(),
        source_concepts: src.iter().flat_map(|s| s.concepts().cloned()).collect(),
        target_tokens: tgt.iter().flat_map(|s| s.tokens.iter().cloned()).collect(),
        target_concepts: tgt.iter().flat_map(|s| s.concepts().cloned()).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::super::tagging::ConceptSpan;
    use super::*;
    use crate::kg::ConceptId;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn sentence(tokens: &[&str], concepts: usize) -> TaggedSentence {
        TaggedSentence {
            tokens: tokens.iter().map(|s| s.to_string()).collect(),
            concept_spans: (0..concepts)
                .map(|k| ConceptSpan { start: k, end: k + 1, concept: ConceptId::from_number(k as u32).unwrap() })
                .collect(),
        }
    }

    fn model(pairs: &[(&str, f64)]) -> UnigramModel {
        UnigramModel::from_probs(pairs.iter().map(|(t, p)| (t.to_string(), *p)).collect(), 1e-3)
    }

    #[test]
    fn entropy_cases() {
        let tokens = |s: &[&str]| s.iter().map(|t| t.to_string()).collect::<Vec<_>>();
        assert_eq!(sentence_entropy(&tokens(&["x"]), &model(&[("x", 0.5)])), 0.5);
        assert_eq!(sentence_entropy(&tokens(&["x", "y", "x"]), &model(&[("x", 1.0), ("y", 1.0)])), 0.0);
        let floor = UnigramModel::from_tokens(["a", "a", "b"]);
        assert_eq!(floor.prob("zzz"), 0.25);
        assert!((floor.prob("a") - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn entropy_matches_direct_summation() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            let raw: Vec<f64> = (0..10).map(|_| rng.gen_range(0.01..1.0)).collect();
            let z: f64 = raw.iter().sum();
            let probs: Vec<f64> = raw.iter().map(|r| r / z).collect();
            let m = UnigramModel::from_probs((0..10).map(|i| (format!("t{i}"), probs[i])).collect(), 1e-6);
            let ids: Vec<usize> = (0..rng.gen_range(1..20)).map(|_| rng.gen_range(0..10)).collect();
            let toks: Vec<String> = ids.iter().map(|i| format!("t{i}")).collect();
            let mut seen = [false; 10];
            let mut h = 0.0;
            for &i in &ids {
                if !seen[i] {
                    seen[i] = true;
                    h += -probs[i] * probs[i].ln() / std::f64::consts::LN_2;
                }
            }
            let got = sentence_entropy(&toks, &m);
            assert!((got - h).abs() < 1e-12);
            assert!(got >= 0.0);
        }
    }

    #[test]
    fn selection_cases() {
        let m = model(&[]);
        let untagged: Vec<_> = (0..4).map(|_| sentence(&["a", "b"], 0)).collect();
        assert!(select_informative(&untagged, &m, 0.5).unwrap().is_empty());
        let tagged: Vec<_> = (0..4).map(|i| sentence(&["a", &format!("w{i}")], 1)).collect();
        assert_eq!(select_informative(&tagged, &m, 1.0).unwrap(), tagged);
        assert!(matches!(select_informative(&tagged, &m, 0.0), Err(CorpusError::KeepFraction(_))));
        assert!(select_informative(&tagged, &m, 1.5).is_err());
    }

    #[test]
    fn selection_matches_sort_and_slice() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..50 {
            let vocab: Vec<(String, f64)> = (0..12).map(|i| (format!("v{i}"), rng.gen_range(0.01..0.5))).collect();
            let m = UnigramModel::from_probs(vocab.iter().cloned().collect(), 1e-4);
            let sents: Vec<TaggedSentence> = (0..8)
                .map(|_| {
                    let toks: Vec<String> = (0..rng.gen_range(1..6)).map(|_| vocab[rng.gen_range(0..12)].0.clone()).collect();
                    TaggedSentence {
                        concept_spans: vec![ConceptSpan { start: 0, end: 1, concept: ConceptId::from_number(1).unwrap() }],
                        tokens: toks,
                    }
                })
                .collect();
            let got = select_informative(&sents, &m, 0.5).unwrap();
            assert_eq!(got.len(), 4);
            let mut order: Vec<usize> = (0..8).collect();
            let h: Vec<f64> = sents.iter().map(|s| sentence_entropy(&s.tokens, &m)).collect();
            order.sort_by(|&a, &b| h[b].partial_cmp(&h[a]).unwrap().then(a.cmp(&b)));
            let mut top = order[..4].to_vec();
            top.sort();
            let expect: Vec<TaggedSentence> = top.iter().map(|&i| sents[i].clone()).collect();
            assert_eq!(got, expect);
        }
    }

    #[test]
    fn split_cases() {
        let seven: Vec<_> = (0..7).map(|i| sentence(&["s", &i.to_string()], 1)).collect();
        let ex = split_example("d", &seven).unwrap();
        assert_eq!(ex.source_tokens.len(), 10);
        assert_eq!(ex.target_tokens, vec!["s", "5", "s", "6"]);
        assert_eq!(ex.source_concepts.len(), 5);
        assert_eq!(ex.target_concepts.len(), 2);
        assert!(matches!(split_example("d", &seven[..5]), Err(CorpusError::TooShort { sentences: 5, .. })));
    }

    #[test]
    fn split_matches_slice_oracle() {
        let doc: Vec<_> = (0..12).map(|i| sentence(&[&format!("a{i}"), &format!("b{i}"), "."], i % 3)).collect();
        let ex = split_example("d", &doc).unwrap();
        let mut src = Vec::new();
        for s in &doc[0..5] {
            src.extend(s.tokens.clone());
        }
        let mut tgt = Vec::new();
        for s in &doc[5..12] {
            tgt.extend(s.tokens.clone());
        }
        assert_eq!(ex.source_tokens, src);
        assert_eq!(ex.target_tokens, tgt);
        let concepts: usize = doc[0..5].iter().map(|s| s.concept_spans.len()).sum();
        assert_eq!(ex.source_concepts.len(), concepts);
    }
}
