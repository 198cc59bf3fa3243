//! Held-out perplexity, output deduplication, the two-chapter human
//! evaluation questionnaire and discrimination error rates.

mod questionnaire;

use std::collections::HashSet;
use std::fmt;
use std::hash::Hash;
use std::str::FromStr;

use rayon::prelude::*;
use thiserror::Error;

use crate::corpus::Example;
use crate::models::{GenerationModel, ModelError};

pub use questionnaire::{
    export_questionnaire, render_questionnaire, AnswerKey, AnswerRow, Candidate, DiscriminationItem, QuestionnaireDoc,
    RatingItem, HUMAN_SOURCE,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("no examples to evaluate")]
    EmptyDataset,
    #[error("arity: {0}")]
    Arity(String),
    #[error("{answers} answers for {questions} questions")]
    LengthMismatch { answers: usize, questions: usize },
    #[error("format: {0}")]
    Format(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Anything that assigns log-probabilities to the gold output tokens of an
/// example under teacher forcing.
pub trait TokenScorer: Sync {
    fn target_log_probs(&self, ex: &Example) -> Result<Vec<f64>, EvalError>;
}

impl TokenScorer for GenerationModel {
    fn target_log_probs(&self, ex: &Example) -> Result<Vec<f64>, EvalError> {
        Ok(GenerationModel::target_log_probs(self, ex)?)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PerplexityReport {
    pub split: String,
    pub tokens: usize,
    pub nll: f64,
    pub perplexity: f64,
}

impl fmt::Display for PerplexityReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "split={} tokens={} nll={} ppl={}", self.split, self.tokens, self.nll, self.perplexity)
    }
}

impl FromStr for PerplexityReport {
    type Err = EvalError;

    fn from_str(s: &str) -> Result<Self, EvalError> {
        let mut fields = std::collections::HashMap::new();
        for part in s.split_whitespace() {
            let (k, v) = part.split_once('=').ok_or_else(|| EvalError::Format(format!("bad field {part}")))?;
            fields.insert(k, v);
        }
        let get = |k: &str| fields.get(k).copied().ok_or_else(|| EvalError::Format(format!("missing {k}")));
        let num = |k: &str| -> Result<f64, EvalError> { get(k)?.parse().map_err(|_| EvalError::Format(format!("bad {k}"))) };
        Ok(PerplexityReport {
            split: get("split")?.to_string(),
            tokens: get("tokens")?.parse().map_err(|_| EvalError::Format("bad tokens".into()))?,
            nll: num("nll")?,
            perplexity: num("ppl")?,
        })
    }
}

/// Pairwise sum with a fixed split at the midpoint.
pub fn tree_sum(xs: &[f64]) -> f64 {
    match xs.len() {
        0 => 0.0,
        1 => xs[0],
        n => tree_sum(&xs[..n / 2]) + tree_sum(&xs[n / 2..]),
    }
}

/// `exp(total NLL / token count)` over every gold token including `<eos>`.
pub fn perplexity<S: TokenScorer>(scorer: &S, examples: &[Example], split: &str) -> Result<PerplexityReport, EvalError> {
    if examples.is_empty() {
        return Err(EvalError::EmptyDataset);
    }
    let per_example: Vec<(f64, usize)> = examples
        .par_iter()
        .map(|ex| {
            let lp = scorer.target_log_probs(ex)?;
            Ok((-tree_sum(&lp), lp.len()))
        })
        .collect::<Result<_, EvalError>>()?;
    let nlls: Vec<f64> = per_example.iter().map(|p| p.0).collect();
    let tokens: usize = per_example.iter().map(|p| p.1).sum();
    if tokens == 0 {
        return Err(EvalError::EmptyDataset);
    }
    let nll = tree_sum(&nlls);
    Ok(PerplexityReport { split: split.to_string(), tokens, nll, perplexity: (nll / tokens as f64).exp() })
}

/// First occurrences in order; exact duplicates dropped.
pub fn dedupe_outputs<T: Eq + Hash + Clone>(outputs: &[T]) -> Vec<T> {
    let mut seen = HashSet::new();
    outputs.iter().filter(|o| seen.insert((*o).clone())).cloned().collect()
}

/// Percentage of discrimination answers that miss the human text. Answers
/// are 1-based positions, `0` for "none of them".
pub fn discrimination_error_rate(answers: &[usize], key: &AnswerKey) -> Result<f64, EvalError> {
    let truth = key.human_positions();
    if answers.len() != truth.len() {
        return Err(EvalError::LengthMismatch { answers: answers.len(), questions: truth.len() });
    }
    if truth.is_empty() {
        return Err(EvalError::EmptyDataset);
    }
    let wrong = answers.iter().zip(&truth).filter(|(a, t)| a != t).count();
    Ok(100.0 * wrong as f64 / truth.len() as f64)
}

/// Mean of per-evaluator error rates.
pub fn mean_error_rate(sheets: &[Vec<usize>], key: &AnswerKey) -> Result<f64, EvalError> {
    if sheets.is_empty() {
        return Err(EvalError::EmptyDataset);
    }
    let rates: Vec<f64> = sheets.iter().map(|s| discrimination_error_rate(s, key)).collect::<Result<_, _>>()?;
    Ok(rates.iter().sum::<f64>() / rates.len() as f64)
}

/// Published valid/test perplexities on the original clinical corpus, for
/// documentation only; not reproducible here.
pub const TABLE1_REFERENCE: [(&str, f64, f64); 5] = [
    ("BASELINE", 3.423, 3.800),
    ("CS", 3.360, 3.368),
    ("CSD", 3.822, 4.195),
    ("HCSD", 3.702, 3.764),
    ("HCSD_T", 3.830, 4.197),
];

/// Published expert and non-expert discrimination error rates (%).
pub const EXPERT_ERROR_RATE: f64 = 65.0;
pub const NON_EXPERT_ERROR_RATE: f64 = 75.0;

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neural::gradcheck::random_vector;
    use proptest::prelude::*;
    use rand::seq::SliceRandom;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Scores each gold token by a fixed table of probabilities.
    struct Fixed(Vec<f64>);

    impl TokenScorer for Fixed {
        fn target_log_probs(&self, ex: &Example) -> Result<Vec<f64>, EvalError> {
            Ok((0..=ex.target_tokens.len()).map(|i| self.0[i % self.0.len()].ln()).collect())
        }
    }

    fn ex(n: usize) -> Example {
        Example {
            id: format!("x{n}"),
            source_tokens: vec!["a".into()],
            source_concepts: vec![],
            target_tokens: (0..n).map(|i| format!("t{i}")).collect(),
            target_concepts: vec![],
        }
    }

    #[test]
    fn two_step_closed_form() {
        let r = perplexity(&Fixed(vec![0.5, 0.25]), &[ex(1)], "valid").unwrap();
        assert_eq!(r.tokens, 2);
        assert!((r.perplexity - 2f64.powf(1.5)).abs() < 1e-9);
        let back: PerplexityReport = r.to_string().parse().unwrap();
        assert_eq!(back, r);
        assert!(r.to_string().starts_with("split=valid tokens=2 nll="));
        assert!(matches!(perplexity(&Fixed(vec![0.5]), &[], "x"), Err(EvalError::EmptyDataset)));
    }

    #[test]
    fn uniform_scorer_gives_vocabulary_size() {
        for v in [7.0, 50.0] {
            let data: Vec<Example> = (0..9).map(ex).collect();
            let r = perplexity(&Fixed(vec![1.0 / v]), &data, "t").unwrap();
            assert!((r.perplexity - v).abs() / v < 1e-6);
        }
    }

    #[test]
    fn reordering_does_not_change_perplexity() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let probs: Vec<f64> = (0..7).map(|_| rng.gen_range(0.05..1.0)).collect();
        let mut data: Vec<Example> = (0..30).map(|_| ex(rng.gen_range(0..12))).collect();
        let a = perplexity(&Fixed(probs.clone()), &data, "t").unwrap();
        data.shuffle(&mut rng);
        let b = perplexity(&Fixed(probs), &data, "t").unwrap();
        assert_eq!(a.tokens, b.tokens);
        assert!((a.perplexity - b.perplexity).abs() < 1e-12 * a.perplexity);
    }

    #[test]
    fn tree_sum_matches_plain_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let xs = random_vector(&mut rng, 1001, 3.0);
        assert!((tree_sum(&xs) - xs.iter().sum::<f64>()).abs() < 1e-10);
        assert_eq!(tree_sum(&[]), 0.0);
    }

    #[test]
    fn dedupe_cases() {
        assert_eq!(dedupe_outputs(&["A", "B", "A"]), vec!["A", "B"]);
        assert_eq!(dedupe_outputs(&["x", "y", "z"]), vec!["x", "y", "z"]);
    }

    fn scan_oracle(xs: &[Vec<u8>]) -> Vec<Vec<u8>> {
        let mut out: Vec<Vec<u8>> = Vec::new();
        for x in xs {
            if !out.contains(x) {
                out.push(x.clone());
            }
        }
        out
    }

    proptest! {
        #[test]
        fn dedupe_matches_scan_and_is_idempotent(xs in prop::collection::vec(prop::collection::vec(0u8..3, 0..3), 0..25)) {
            let d = dedupe_outputs(&xs);
            prop_assert_eq!(&d, &scan_oracle(&xs));
            prop_assert_eq!(dedupe_outputs(&d), d);
        }
    }

    fn key_with_humans(positions: &[usize]) -> AnswerKey {
        AnswerKey {
            rows: positions
                .iter()
                .enumerate()
                .flat_map(|(q, &h)| {
                    (1..=3).map(move |p| AnswerRow {
                        item: format!("ch2.q{}", q + 1),
                        position: p,
                        source: if p == h { HUMAN_SOURCE.to_string() } else { "CS".to_string() },
                    })
                })
                .collect(),
        }
    }

    #[test]
    fn error_rates() {
        let truth = [1, 2, 3, 1, 2, 3, 1, 2, 3, 1];
        let key = key_with_humans(&truth);
        assert_eq!(discrimination_error_rate(&truth, &key).unwrap(), 0.0);
        let wrong: Vec<usize> = truth.iter().map(|t| t % 3 + 1).collect();
        assert_eq!(discrimination_error_rate(&wrong, &key).unwrap(), 100.0);
        assert!(matches!(
            discrimination_error_rate(&truth[..3], &key),
            Err(EvalError::LengthMismatch { answers: 3, questions: 10 })
        ));
        // evaluators missing 6, 7, 6 and 7 of 10
        let sheet = |misses: usize| -> Vec<usize> {
            truth.iter().enumerate().map(|(i, &t)| if i < misses { 0 } else { t }).collect()
        };
        let sheets = vec![sheet(6), sheet(7), sheet(6), sheet(7)];
        assert!((mean_error_rate(&sheets, &key).unwrap() - EXPERT_ERROR_RATE).abs() < 1e-12);
    }
}
