//! Deterministic miniature ontology, lexicon and note corpus with a planted
//! concept signal.
//!
//! Concepts form a rooted `PAR` hierarchy. Every parent of leaves has one
//! representative "finding" leaf. A document describes one non-finding
//! source leaf in five sentences; each target sentence names a finding
//! leaf, which with probability θ is the representative of the source's
//! parent and otherwise is drawn uniformly from all representatives.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::corpus::{default_verbs, write_corpus, Document, Lexicon, SOURCE_SENTENCES};
use crate::kg::{ConceptId, PARENT_RELATION};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SynthError {
    #[error("invalid synth config: {0}")]
    Config(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub seed: u64,
    pub n_concepts: usize,
    /// Random non-`PAR` triplets added on top of the hierarchy.
    pub n_relations: usize,
    pub depth: usize,
    /// Filler pseudo-words.
    pub vocab_size: usize,
    pub docs: usize,
    pub sentences_per_doc: usize,
    pub theta: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            seed: 0,
            n_concepts: 105,
            n_relations: 20,
            depth: 2,
            vocab_size: 30,
            docs: 400,
            sentences_per_doc: 6,
            theta: 1.0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: String| Err(SynthError::Config(m));
        if self.depth == 0 {
            return bad("depth must be at least 1".into());
        }
        if self.n_concepts < self.depth + 2 {
            return bad(format!("{} concepts cannot fill depth {} with two leaves", self.n_concepts, self.depth));
        }
        if self.sentences_per_doc <= SOURCE_SENTENCES {
            return bad(format!("sentences per doc must be at least {}", SOURCE_SENTENCES + 1));
        }
        if !(0.0..=1.0).contains(&self.theta) {
            return bad(format!("theta {} outside [0, 1]", self.theta));
        }
        if self.vocab_size < 2 {
            return bad("need at least 2 filler words".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthOntology {
    pub root: ConceptId,
    /// Concepts level by level, root first.
    pub levels: Vec<Vec<ConceptId>>,
    pub parent: BTreeMap<ConceptId, ConceptId>,
    pub phrases: BTreeMap<ConceptId, Vec<String>>,
    /// Parent of leaves to its representative finding leaf.
    pub finding_of: BTreeMap<ConceptId, ConceptId>,
    pub fillers: Vec<String>,
    pub triplet_lines: String,
    pub lexicon_lines: String,
}

impl SynthOntology {
    pub fn leaves(&self) -> Vec<&ConceptId> {
        let parents: BTreeSet<&ConceptId> = self.parent.values().collect();
        self.levels.iter().flatten().filter(|c| !parents.contains(c) && **c != self.root).collect()
    }

    /// Leaves that may serve as document sources.
    pub fn source_leaves(&self) -> Vec<&ConceptId> {
        let findings: BTreeSet<&ConceptId> = self.finding_of.values().collect();
        self.leaves().into_iter().filter(|c| !findings.contains(c) && self.finding_of.contains_key(&self.parent[*c])).collect()
    }

    /// The planted finding for a source leaf.
    pub fn planted_finding(&self, source: &ConceptId) -> Option<&ConceptId> {
        self.parent.get(source).and_then(|p| self.finding_of.get(p))
    }

    pub fn lexicon(&self) -> Lexicon {
        Lexicon::parse(&self.lexicon_lines).expect("generated lexicon is well formed")
    }
}

const TEMPLATE_WORDS: &[&str] = &["the", "there", "in", "with", "no", "of", "and", "a"];

fn pseudo_words(rng: &mut ChaCha8Rng, count: usize, taken: &mut BTreeSet<String>) -> Vec<String> {
    const C: &[u8] = b"bdfgklmnprstvz";
    const V: &[u8] = b"aeiou";
    let reserved: BTreeSet<String> =
        default_verbs().into_iter().chain(TEMPLATE_WORDS.iter().map(|s| s.to_string())).collect();
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let syllables = rng.gen_range(2..=3);
        let w: String = (0..syllables)
            .flat_map(|_| [C[rng.gen_range(0..C.len())] as char, V[rng.gen_range(0..V.len())] as char])
            .collect();
        if !reserved.contains(&w) && taken.insert(w.clone()) {
            out.push(w);
        }
    }
    out
}

/// Level sizes `1, b, b², …` with the remainder on the last level, where
/// `b` is the smallest branching that fits `n` concepts in `depth` levels.
fn level_sizes(n: usize, depth: usize) -> Vec<usize> {
    let mut b = 1usize;
    loop {
        let cap: usize = (0..=depth).map(|l| b.saturating_pow(l as u32)).sum();
        if cap >= n {
            break;
        }
        b += 1;
    }
    let mut sizes = vec![1];
    let mut left = n - 1;
    for l in 1..=depth {
        let size = if l == depth { left } else { b.pow(l as u32).min(left - (depth - l)) };
        sizes.push(size);
        left -= size;
    }
    sizes
}

pub fn generate_ontology(cfg: &SynthConfig) -> Result<SynthOntology, SynthError> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let sizes = level_sizes(cfg.n_concepts, cfg.depth);

    // siblings are numbered inside one aligned block so they share a prefix
    let mut next = 1000u32;
    let alloc = |next: &mut u32| -> ConceptId {
        let id = ConceptId::from_number(*next).expect("in range");
        *next += 1;
        id
    };
    let root = alloc(&mut next);
    let mut levels = vec![vec![root.clone()]];
    let mut parent = BTreeMap::new();
    for &size in &sizes[1..] {
        let above = levels.last().expect("root level").clone();
        let mut children: Vec<Vec<ConceptId>> = vec![Vec::new(); above.len()];
        let counts: Vec<usize> = (0..above.len()).map(|p| size / above.len() + usize::from(p < size % above.len())).collect();
        let mut level = Vec::with_capacity(size);
        for (p, &k) in counts.iter().enumerate() {
            next = next.div_ceil(10) * 10;
            for _ in 0..k {
                let c = alloc(&mut next);
                parent.insert(c.clone(), above[p].clone());
                children[p].push(c.clone());
                level.push(c);
            }
        }
        levels.push(level);
    }

    let has_children: BTreeSet<&ConceptId> = parent.values().collect();
    let leaves: Vec<ConceptId> =
        levels.iter().flatten().filter(|c| !has_children.contains(c) && **c != root).cloned().collect();
    let mut finding_of = BTreeMap::new();
    for leaf in &leaves {
        let p = &parent[leaf];
        finding_of.entry(p.clone()).or_insert_with(|| leaf.clone());
    }

    let mut taken = BTreeSet::new();
    let mut phrases = BTreeMap::new();
    for leaf in &leaves {
        let n = rng.gen_range(1..=2);
        phrases.insert(leaf.clone(), pseudo_words(&mut rng, n, &mut taken));
    }
    let fillers = pseudo_words(&mut rng, cfg.vocab_size, &mut taken);

    let mut triplets: BTreeSet<(ConceptId, ConceptId, String)> =
        parent.iter().map(|(c, p)| (c.clone(), p.clone(), PARENT_RELATION.to_string())).collect();
    let all: Vec<&ConceptId> = levels.iter().flatten().collect();
    let labels = ["RO", "RQ", "SY"];
    let mut added = 0;
    let mut attempts = 0;
    while added < cfg.n_relations && attempts < 100 * (cfg.n_relations + 1) {
        attempts += 1;
        let (s, o) = (all[rng.gen_range(0..all.len())], all[rng.gen_range(0..all.len())]);
        if s == o || parent.get(s) == Some(o) {
            continue;
        }
        if triplets.insert((s.clone(), o.clone(), labels[rng.gen_range(0..labels.len())].to_string())) {
            added += 1;
        }
    }
    let triplet_lines: String = triplets.iter().map(|(s, o, r)| format!("{s}\t{o}\t{r}\n")).collect();
    let lexicon_lines: String = phrases.iter().map(|(c, p)| format!("{}\t{c}\n", p.join(" "))).collect();
    Ok(SynthOntology { root, levels, parent, phrases, finding_of, fillers, triplet_lines, lexicon_lines })
}

/// Ground truth of one generated document.
#[derive(Debug, Clone, PartialEq)]
pub struct PlantedDoc {
    pub id: String,
    pub source: ConceptId,
    /// Finding named by each target sentence, with whether it was planted.
    pub findings: Vec<(ConceptId, bool)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthCorpus {
    pub documents: Vec<Document>,
    pub planted: Vec<PlantedDoc>,
}

impl SynthCorpus {
    pub fn to_text(&self) -> String {
        write_corpus(&self.documents)
    }
}

fn source_sentence(rng: &mut ChaCha8Rng, phrase: &str, fillers: &[String]) -> String {
    let mut f = || fillers[rng.gen_range(0..fillers.len())].clone();
    let (a, b) = (f(), f());
    match rng.gen_range(0..4) {
        0 => format!("The {a} {phrase} is {b} ."),
        1 => format!("There are {a} {phrase} in the {b} ."),
        2 => format!("{phrase} was seen with {a} {b} ."),
        _ => format!("Compared with [deidt] the {phrase} remains {a} ."),
    }
}

fn target_sentence(rng: &mut ChaCha8Rng, phrase: &str, fillers: &[String]) -> String {
    let a = fillers[rng.gen_range(0..fillers.len())].clone();
    format!("The {phrase} is {a} .")
}

pub fn generate_corpus(cfg: &SynthConfig, ontology: &SynthOntology) -> Result<SynthCorpus, SynthError> {
    cfg.validate()?;
    let sources = ontology.source_leaves();
    if sources.is_empty() || ontology.phrases.is_empty() {
        return Err(SynthError::Config("ontology has no source leaves".into()));
    }
    let findings: Vec<&ConceptId> = ontology.finding_of.values().collect();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0xC0_2B_05);
    let phrase = |c: &ConceptId| ontology.phrases[c].join(" ");
    let mut documents = Vec::with_capacity(cfg.docs);
    let mut planted = Vec::with_capacity(cfg.docs);
    for d in 0..cfg.docs {
        let id = format!("synth{d:05}");
        let source = (*sources.choose(&mut rng).expect("non-empty")).clone();
        let mut sentences: Vec<String> =
            (0..SOURCE_SENTENCES).map(|_| source_sentence(&mut rng, &phrase(&source), &ontology.fillers)).collect();
        let mut doc_findings = Vec::new();
        for _ in SOURCE_SENTENCES..cfg.sentences_per_doc {
            let determined = rng.gen::<f64>() < cfg.theta;
            let finding = if determined {
                ontology.planted_finding(&source).expect("source leaves have a finding").clone()
            } else {
                (*findings.choose(&mut rng).expect("non-empty")).clone()
            };
            sentences.push(target_sentence(&mut rng, &phrase(&finding), &ontology.fillers));
            doc_findings.push((finding, determined));
        }
        documents.push(Document::new(id.clone(), sentences.join(" ")).expect("non-empty id"));
        planted.push(PlantedDoc { id, source, findings: doc_findings });
    }
    Ok(SynthCorpus { documents, planted })
}

/// Empirical mutual information (nats) between paired discrete labels.
pub fn mutual_information<A: Ord, B: Ord>(pairs: &[(A, B)]) -> f64 {
    let n = pairs.len() as f64;
    let mut joint: BTreeMap<(&A, &B), f64> = BTreeMap::new();
    let mut pa: BTreeMap<&A, f64> = BTreeMap::new();
    let mut pb: BTreeMap<&B, f64> = BTreeMap::new();
    for (a, b) in pairs {
        *joint.entry((a, b)).or_default() += 1.0;
        *pa.entry(a).or_default() += 1.0;
        *pb.entry(b).or_default() += 1.0;
    }
    joint.iter().map(|((a, b), c)| (c / n) * ((c * n) / (pa[a] * pb[b])).ln()).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{corpus_unigrams, parse_corpus, process_document, tokenize, PipelineConfig};
    use crate::kg::ConceptGraph;

    fn graph(o: &SynthOntology) -> ConceptGraph {
        ConceptGraph::load(o.triplet_lines.lines().map(|l| {
            let f: Vec<&str> = l.split('\t').collect();
            (f[0].to_string(), f[1].to_string(), f[2].to_string())
        }))
        .unwrap()
    }

    #[test]
    fn star_hierarchy() {
        let cfg = SynthConfig { n_concepts: 3, depth: 1, n_relations: 0, ..Default::default() };
        let o = generate_ontology(&cfg).unwrap();
        assert_eq!(o.triplet_lines.lines().count(), 2);
        assert!(o.triplet_lines.lines().all(|l| l.ends_with(&format!("\t{}\tPAR", o.root))));
        assert_eq!(o.leaves().len(), 2);
    }

    #[test]
    fn every_non_root_concept_has_a_parent() {
        let cfg = SynthConfig { n_concepts: 40, depth: 3, ..Default::default() };
        let o = generate_ontology(&cfg).unwrap();
        let g = graph(&o);
        let all: Vec<&ConceptId> = o.levels.iter().flatten().collect();
        assert_eq!(all.len(), 40);
        assert_eq!(o.levels.len(), 4);
        for c in all {
            let has_parent = g.triplets().any(|t| &t.subject == c && t.relation.is_parent());
            assert_eq!(has_parent, *c != o.root, "{c}");
        }
    }

    #[test]
    fn siblings_share_prefix_buckets() {
        let o = generate_ontology(&SynthConfig::default()).unwrap();
        let mut by_parent: BTreeMap<&ConceptId, Vec<&ConceptId>> = BTreeMap::new();
        for (c, p) in &o.parent {
            by_parent.entry(p).or_default().push(c);
        }
        for kids in by_parent.values() {
            assert!(kids.iter().all(|k| k.prefix() == kids[0].prefix()));
        }
    }

    #[test]
    fn byte_identical_for_same_seed() {
        let cfg = SynthConfig { docs: 50, ..Default::default() };
        let run = || {
            let o = generate_ontology(&cfg).unwrap();
            let c = generate_corpus(&cfg, &o).unwrap();
            (o.triplet_lines.clone(), o.lexicon_lines.clone(), c.to_text())
        };
        assert_eq!(run(), run());
        let other = SynthConfig { seed: 1, ..cfg.clone() };
        assert_ne!(generate_ontology(&other).unwrap().lexicon_lines, run().1);
    }

    #[test]
    fn config_validation() {
        assert!(generate_ontology(&SynthConfig { sentences_per_doc: 5, ..Default::default() }).is_err());
        assert!(generate_ontology(&SynthConfig { theta: 1.5, ..Default::default() }).is_err());
        assert!(generate_ontology(&SynthConfig { depth: 0, ..Default::default() }).is_err());
    }

    #[test]
    fn full_signal_targets_follow_the_planted_mapping() {
        let cfg = SynthConfig { docs: 100, theta: 1.0, ..Default::default() };
        let o = generate_ontology(&cfg).unwrap();
        let c = generate_corpus(&cfg, &o).unwrap();
        for (doc, truth) in c.documents.iter().zip(&c.planted) {
            let parent = &o.parent[&truth.source];
            let expect = &o.finding_of[parent];
            let target = doc.text.rsplit(" The ").next().unwrap();
            let words: Vec<String> = tokenize(target);
            let phrase = &o.phrases[expect];
            assert_eq!(&words[..phrase.len()], &phrase[..]);
            assert!(truth.findings.iter().all(|(f, planted)| f == expect && *planted));
        }
    }

    #[test]
    fn no_signal_has_no_mutual_information() {
        let run = |theta: f64| {
            let cfg = SynthConfig { docs: 500, theta, seed: 3, ..Default::default() };
            let o = generate_ontology(&cfg).unwrap();
            let c = generate_corpus(&cfg, &o).unwrap();
            let pairs: Vec<(ConceptId, ConceptId)> =
                c.planted.iter().map(|p| (p.source.clone(), p.findings[0].0.clone())).collect();
            let observed = mutual_information(&pairs);
            let mut rng = ChaCha8Rng::seed_from_u64(99);
            let mut shuffled: Vec<f64> = (0..50)
                .map(|_| {
                    let mut targets: Vec<ConceptId> = pairs.iter().map(|p| p.1.clone()).collect();
                    targets.shuffle(&mut rng);
                    let sp: Vec<(ConceptId, ConceptId)> =
                        pairs.iter().map(|p| p.0.clone()).zip(targets).collect();
                    mutual_information(&sp)
                })
                .collect();
            shuffled.sort_by(f64::total_cmp);
            (observed, shuffled[47])
        };
        let (mi0, baseline0) = run(0.0);
        assert!(mi0 < baseline0, "{mi0} vs shuffle {baseline0}");
        let (mi1, baseline1) = run(1.0);
        assert!(mi1 > 2.0 * baseline1);
    }

    #[test]
    fn mutual_information_reference() {
        let dependent = vec![(0, 0), (1, 1), (0, 0), (1, 1)];
        assert!((mutual_information(&dependent) - 2f64.ln()).abs() < 1e-12);
        let independent = vec![(0, 0), (0, 1), (1, 0), (1, 1)];
        assert!(mutual_information(&independent).abs() < 1e-12);
    }

    #[test]
    fn every_document_passes_the_pipeline() {
        for spd in [6, 8] {
            let cfg = SynthConfig { docs: 60, sentences_per_doc: spd, ..Default::default() };
            let o = generate_ontology(&cfg).unwrap();
            let text = generate_corpus(&cfg, &o).unwrap().to_text();
            let docs = parse_corpus(&text).unwrap();
            let pc = PipelineConfig::default();
            let probs = corpus_unigrams(&docs, &pc.verbs);
            let lex = o.lexicon();
            for d in &docs {
                let ex = process_document(d, &lex, &probs, &pc).unwrap();
                assert_eq!(ex.source_concepts.len(), 5);
                assert_eq!(ex.target_concepts.len(), spd - 5);
            }
        }
    }
}
