//! Two-chapter evaluation sheet: chapter 1 rates candidate continuations
//! of an input on a 1–5 scale, chapter 2 asks which of three texts a human
//! wrote, with a 1–3 difficulty scale. Sources live only in the answer key.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::EvalError;

pub const HUMAN_SOURCE: &str = "human";

#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub source: String,
    pub text: String,
}

impl Candidate {
    pub fn new(source: impl Into<String>, text: impl Into<String>) -> Self {
        Candidate { source: source.into(), text: text.into() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RatingItem {
    pub input: String,
    pub candidates: Vec<Candidate>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiscriminationItem {
    pub texts: Vec<Candidate>,
}

/// The rendered sheet without any source attribution.
#[derive(Debug, Clone, PartialEq)]
pub struct QuestionnaireDoc {
    /// `(input, outputs in display order)`.
    pub chapter1: Vec<(String, Vec<String>)>,
    pub chapter2: Vec<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnswerRow {
    /// `ch1.qN` or `ch2.qN`, 1-based.
    pub item: String,
    /// 1-based display position.
    pub position: usize,
    pub source: String,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct AnswerKey {
    pub rows: Vec<AnswerRow>,
}

fn one_line(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn shuffled(items: &[Candidate], rng: &mut ChaCha8Rng) -> Vec<Candidate> {
    let mut out: Vec<Candidate> = items.iter().map(|c| Candidate::new(c.source.clone(), one_line(&c.text))).collect();
    out.shuffle(rng);
    out
}

/// Shuffles candidates with a generator seeded by `seed` and splits the
/// result into the sheet and its answer key.
pub fn render_questionnaire(
    chapter1: &[RatingItem],
    chapter2: &[DiscriminationItem],
    seed: u64,
) -> Result<(QuestionnaireDoc, AnswerKey), EvalError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut doc = QuestionnaireDoc { chapter1: Vec::new(), chapter2: Vec::new() };
    let mut key = AnswerKey::default();
    for (q, item) in chapter1.iter().enumerate() {
        if item.candidates.len() < 2 {
            return Err(EvalError::Arity(format!("chapter 1 question {} has {} candidates", q + 1, item.candidates.len())));
        }
        let order = shuffled(&item.candidates, &mut rng);
        for (p, c) in order.iter().enumerate() {
            key.rows.push(AnswerRow { item: format!("ch1.q{}", q + 1), position: p + 1, source: c.source.clone() });
        }
        doc.chapter1.push((one_line(&item.input), order.into_iter().map(|c| c.text).collect()));
    }
    for (q, item) in chapter2.iter().enumerate() {
        let humans = item.texts.iter().filter(|c| c.source == HUMAN_SOURCE).count();
        if item.texts.len() != 3 || humans != 1 {
            return Err(EvalError::Arity(format!(
                "chapter 2 question {} has {} texts and {humans} human texts, need 3 and 1",
                q + 1,
                item.texts.len()
            )));
        }
        let order = shuffled(&item.texts, &mut rng);
        for (p, c) in order.iter().enumerate() {
            key.rows.push(AnswerRow { item: format!("ch2.q{}", q + 1), position: p + 1, source: c.source.clone() });
        }
        doc.chapter2.push(order.into_iter().map(|c| c.text).collect());
    }
    Ok((doc, key))
}

/// Builds both chapters from aligned per-document outputs. Chapter 1 uses
/// documents `0..n` with every model output plus the human text (duplicate
/// texts removed), chapter 2 uses documents `n..2n` with the human text
/// and two outputs from distinct, seeded-random models.
pub fn export_questionnaire(
    inputs: &[String],
    model_outputs: &[(String, Vec<String>)],
    human_targets: &[String],
    items_per_chapter: usize,
    seed: u64,
) -> Result<(QuestionnaireDoc, AnswerKey), EvalError> {
    let n = inputs.len();
    if human_targets.len() != n || model_outputs.iter().any(|(_, o)| o.len() != n) {
        return Err(EvalError::Arity("inputs, outputs and human targets must align".into()));
    }
    if model_outputs.len() < 2 {
        return Err(EvalError::Arity(format!("need at least 2 models, got {}", model_outputs.len())));
    }
    if n < 2 * items_per_chapter {
        return Err(EvalError::Arity(format!("need {} documents for two chapters, got {n}", 2 * items_per_chapter)));
    }
    let mut pick = ChaCha8Rng::seed_from_u64(seed ^ 0x5157_4E52);
    let chapter1: Vec<RatingItem> = (0..items_per_chapter)
        .map(|i| {
            let mut candidates: Vec<Candidate> = Vec::new();
            let all = model_outputs
                .iter()
                .map(|(m, o)| Candidate::new(m.clone(), one_line(&o[i])))
                .chain(std::iter::once(Candidate::new(HUMAN_SOURCE, one_line(&human_targets[i]))));
            for c in all {
                if !candidates.iter().any(|k| k.text == c.text) {
                    candidates.push(c);
                }
            }
            RatingItem { input: inputs[i].clone(), candidates }
        })
        .collect();
    let chapter2: Vec<DiscriminationItem> = (items_per_chapter..2 * items_per_chapter)
        .map(|i| {
            let models: Vec<&(String, Vec<String>)> =
                model_outputs.choose_multiple(&mut pick, 2).collect();
            let mut texts = vec![Candidate::new(HUMAN_SOURCE, human_targets[i].clone())];
            texts.extend(models.iter().map(|(m, o)| Candidate::new(m.clone(), o[i].clone())));
            DiscriminationItem { texts }
        })
        .collect();
    render_questionnaire(&chapter1, &chapter2, seed)
}

const TITLE: &str = "# Pseudo-clinical text generation evaluation";
const CH1: &str = "## Chapter 1: appropriateness of entailment";
const CH2: &str = "## Chapter 2: discrimination";
const RATING: &str = "   Rating: ( ) 1  ( ) 2  ( ) 3  ( ) 4  ( ) 5";
const PICK: &str = "Human writing: [ ] no.1  [ ] no.2  [ ] no.3  [ ] none of them";
const DIFFICULTY: &str = "Difficulty: [ ] easy  [ ] normal  [ ] confused";

impl QuestionnaireDoc {
    pub fn render(&self) -> String {
        let mut out = vec![
            TITLE.to_string(),
            String::new(),
            format!(
                "This document has two chapters with {} and {} questions. [deidt] marks de-identified text.",
                self.chapter1.len(),
                self.chapter2.len()
            ),
            String::new(),
            CH1.to_string(),
            String::new(),
            "Rate each output as a continuation of the input, 1 (very awkward) to 5 (very plausible). \
             Output numbers are unrelated to any model; outputs are independent of each other."
                .to_string(),
        ];
        for (q, (input, outputs)) in self.chapter1.iter().enumerate() {
            out.extend([String::new(), format!("### Question {}", q + 1), String::new(), format!("Input: {input}"), String::new()]);
            for (p, text) in outputs.iter().enumerate() {
                out.push(format!("{}. {text}", p + 1));
                out.push(RATING.to_string());
            }
            out.extend([String::new(), "Comment:".to_string()]);
        }
        out.extend([
            String::new(),
            CH2.to_string(),
            String::new(),
            "Identify the text written by a human among the three texts.".to_string(),
        ]);
        for (q, texts) in self.chapter2.iter().enumerate() {
            out.extend([String::new(), format!("### Question {}", q + 1), String::new()]);
            for (p, text) in texts.iter().enumerate() {
                out.push(format!("{}. {text}", p + 1));
            }
            out.extend([String::new(), PICK.to_string(), DIFFICULTY.to_string(), "Reason:".to_string()]);
        }
        let mut text = out.join("\n");
        text.push('\n');
        text
    }

    pub fn parse(text: &str) -> Result<Self, EvalError> {
        let mut doc = QuestionnaireDoc { chapter1: Vec::new(), chapter2: Vec::new() };
        let mut chapter = 0;
        for line in text.lines() {
            if line == CH1 {
                chapter = 1;
            } else if line == CH2 {
                chapter = 2;
            } else if line.starts_with("### Question") {
                match chapter {
                    1 => doc.chapter1.push((String::new(), Vec::new())),
                    2 => doc.chapter2.push(Vec::new()),
                    _ => return Err(EvalError::Format("question outside a chapter".into())),
                }
            } else if let Some(input) = line.strip_prefix("Input: ") {
                let q = doc.chapter1.last_mut().ok_or_else(|| EvalError::Format("input before question".into()))?;
                q.0 = input.to_string();
            } else if let Some((num, rest)) = line.split_once(". ") {
                let Ok(pos) = num.parse::<usize>() else { continue };
                let list = match chapter {
                    1 => doc.chapter1.last_mut().map(|q| &mut q.1),
                    2 => doc.chapter2.last_mut(),
                    _ => None,
                }
                .ok_or_else(|| EvalError::Format("text before question".into()))?;
                if pos != list.len() + 1 {
                    return Err(EvalError::Format(format!("text number {pos} out of order")));
                }
                list.push(rest.to_string());
            }
        }
        Ok(doc)
    }
}

impl AnswerKey {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("item,position,source\n");
        for r in &self.rows {
            out.push_str(&format!("{},{},{}\n", r.item, r.position, r.source));
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self, EvalError> {
        let mut lines = text.lines();
        if lines.next() != Some("item,position,source") {
            return Err(EvalError::Format("missing answer key header".into()));
        }
        let rows = lines
            .filter(|l| !l.trim().is_empty())
            .map(|l| {
                let f: Vec<&str> = l.splitn(3, ',').collect();
                if f.len() != 3 {
                    return Err(EvalError::Format(format!("bad key row {l}")));
                }
                Ok(AnswerRow {
                    item: f[0].to_string(),
                    position: f[1].parse().map_err(|_| EvalError::Format(format!("bad position in {l}")))?,
                    source: f[2].to_string(),
                })
            })
            .collect::<Result<_, _>>()?;
        Ok(AnswerKey { rows })
    }

    /// Human text position for every chapter-2 question, in question order.
    pub fn human_positions(&self) -> Vec<usize> {
        let mut out: Vec<(usize, usize)> = self
            .rows
            .iter()
            .filter(|r| r.source == HUMAN_SOURCE)
            .filter_map(|r| r.item.strip_prefix("ch2.q").and_then(|q| q.parse().ok()).map(|q: usize| (q, r.position)))
            .collect();
        out.sort_unstable();
        out.into_iter().map(|(_, p)| p).collect()
    }

    pub fn source(&self, item: &str, position: usize) -> Option<&str> {
        self.rows.iter().find(|r| r.item == item && r.position == position).map(|r| r.source.as_str())
    }
}
