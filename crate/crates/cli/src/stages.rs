use std::collections::BTreeSet;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use csq_core::concept::{compose_from_prefix, enrich_hierarchical, train_concept_embeddings, EmbeddingTable};
use csq_core::corpus::{
    corpus_unigrams, parse_corpus, parse_examples, process_corpus, write_examples, Example, Lexicon,
};
use csq_core::eval::{export_questionnaire, perplexity};
use csq_core::kg::{load_triplet_file, ConceptGraph};
use csq_core::models::{build_model, train_model, GenerationModel, Vocab};
use csq_core::synth::{generate_corpus, generate_ontology};
use csq_core::word::{train_word_embeddings, SubwordTable};

use crate::config::RunConfig;
use crate::run::{Lock, StageIo};
use crate::CliError;

pub const CORPUS: &str = "corpus.txt";
pub const TRIPLETS: &str = "triplets.tsv";
pub const LEXICON: &str = "lexicon.tsv";
pub const PLANTED: &str = "planted.tsv";
pub const CONCEPTS: &str = "concepts.vec";
pub const CONCEPTS_ENRICHED: &str = "concepts.enriched.vec";
pub const WORDS: &str = "words.vec";
pub const SUBWORDS: &str = "words.subwords";
pub const SPLITS: [&str; 3] = ["train", "valid", "test"];

fn examples_file(split: &str) -> String {
    format!("{split}.examples")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Synth,
    Preprocess,
    TrainEmbed,
    Enrich,
    TrainWord,
    TrainLm,
    Generate,
    EvalPpl,
    ExportQuestionnaire,
}

impl Stage {
    pub const ALL: [Stage; 9] = [
        Stage::Synth,
        Stage::Preprocess,
        Stage::TrainEmbed,
        Stage::Enrich,
        Stage::TrainWord,
        Stage::TrainLm,
        Stage::Generate,
        Stage::EvalPpl,
        Stage::ExportQuestionnaire,
    ];
    pub const NAMES: [&'static str; 9] = [
        "synth",
        "preprocess",
        "train-embed",
        "enrich",
        "train-word",
        "train-lm",
        "generate",
        "eval-ppl",
        "export-questionnaire",
    ];

    pub fn name(self) -> &'static str {
        Self::NAMES[Self::ALL.iter().position(|s| *s == self).expect("listed")]
    }

    pub fn execute(self, cfg: &RunConfig) -> Result<(), CliError> {
        let _lock = Lock::acquire(&cfg.out_dir())?;
        let mut io = StageIo::new(cfg);
        log::info!("{} -> {}", self.name(), cfg.out_dir().display());
        match self {
            Stage::Synth => synth(cfg, &mut io)?,
            Stage::Preprocess => preprocess(cfg, &mut io)?,
            Stage::TrainEmbed => train_embed(cfg, &mut io)?,
            Stage::Enrich => enrich(cfg, &mut io)?,
            Stage::TrainWord => train_word(cfg, &mut io)?,
            Stage::TrainLm => train_lm(cfg, &mut io)?,
            Stage::Generate => generate(cfg, &mut io)?,
            Stage::EvalPpl => eval_ppl(cfg, &mut io)?,
            Stage::ExportQuestionnaire => questionnaire(cfg, &mut io)?,
        }
        let manifest = io.manifest(self.name());
        io.write(&manifest_name(self, cfg)?, &manifest)
    }
}

impl FromStr for Stage {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self, CliError> {
        Self::NAMES
            .iter()
            .position(|n| *n == s)
            .map(|i| Self::ALL[i])
            .ok_or_else(|| CliError::UnknownSubcommand(s.to_string()))
    }
}

/// Manifest file written by `stage`; per-variant and per-split stages get
/// distinct names so runs do not overwrite each other's manifests.
pub fn manifest_name(stage: Stage, cfg: &RunConfig) -> Result<String, CliError> {
    Ok(match stage {
        Stage::TrainLm => format!("manifest.{}.{}.cfg", stage.name(), cfg.variant_slug()?),
        Stage::Generate | Stage::EvalPpl => {
            format!("manifest.{}.{}.{}.cfg", stage.name(), cfg.variant_slug()?, cfg.raw("split"))
        }
        Stage::ExportQuestionnaire => format!("manifest.{}.{}.cfg", stage.name(), cfg.raw("split")),
        _ => format!("manifest.{}.cfg", stage.name()),
    })
}

fn synth(cfg: &RunConfig, io: &mut StageIo) -> Result<(), CliError> {
    let sc = cfg.synth()?;
    let ontology = generate_ontology(&sc)?;
    let corpus = generate_corpus(&sc, &ontology)?;
    let planted: String = corpus
        .planted
        .iter()
        .map(|p| {
            let findings: Vec<String> =
                p.findings.iter().map(|(f, planted)| format!("{f}:{}", u8::from(*planted))).collect();
            format!("{}\t{}\t{}\n", p.id, p.source, findings.join(" "))
        })
        .collect();
    io.write(TRIPLETS, &ontology.triplet_lines)?;
    io.write(LEXICON, &ontology.lexicon_lines)?;
    io.write(CORPUS, &corpus.to_text())?;
    io.write(PLANTED, &planted)
}

fn preprocess(cfg: &RunConfig, io: &mut StageIo) -> Result<(), CliError> {
    let docs = parse_corpus(&io.read(&cfg.path_or("corpus", CORPUS))?)?;
    let lexicon = Lexicon::parse(&io.read(&cfg.path_or("lexicon", LEXICON))?)?;
    let pc = cfg.pipeline()?;
    let probs = corpus_unigrams(&docs, &pc.verbs);
    let mut examples = Vec::new();
    for (doc, result) in docs.iter().zip(process_corpus(&docs, &lexicon, &probs, &pc)) {
        match result {
            Ok(ex) => examples.push(ex),
            Err(e) => log::warn!("skipping {}: {e}", doc.id),
        }
    }
    if examples.is_empty() {
        return Err(CliError::Stage("no document survived preprocessing".into()));
    }
    let valid_fraction: f64 = cfg.get("valid_fraction")?;
    let test_fraction: f64 = cfg.get("test_fraction")?;
    if !(valid_fraction >= 0.0 && test_fraction >= 0.0 && valid_fraction + test_fraction < 1.0) {
        return Err(CliError::Config("valid_fraction + test_fraction must lie in [0, 1)".into()));
    }
    let n = examples.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(cfg.seed()?));
    let n_test = (n as f64 * test_fraction).round() as usize;
    let n_valid = (n as f64 * valid_fraction).round() as usize;
    let mut split_of = vec![0usize; n];
    for (rank, &i) in order.iter().enumerate() {
        split_of[i] = if rank < n_test {
            2
        } else if rank < n_test + n_valid {
            1
        } else {
            0
        };
    }
    for (s, name) in SPLITS.iter().enumerate() {
        let part: Vec<Example> =
            examples.iter().zip(&split_of).filter(|(_, k)| **k == s).map(|(e, _)| e.clone()).collect();
        log::info!("{name}: {} examples", part.len());
        io.write(&examples_file(name), &write_examples(&part))?;
    }
    Ok(())
}

fn read_graph(cfg: &RunConfig, io: &mut StageIo) -> Result<ConceptGraph, CliError> {
    Ok(load_triplet_file(&io.read(&cfg.path_or("triplets", TRIPLETS))?)?)
}

fn train_embed(cfg: &RunConfig, io: &mut StageIo) -> Result<(), CliError> {
    let graph = read_graph(cfg, io)?;
    let (table, log) = train_concept_embeddings(&graph, &cfg.concept_training()?)?;
    let losses: String = log.epoch_losses.iter().enumerate().map(|(i, l)| format!("epoch={} loss={l}\n", i + 1)).collect();
    io.write(CONCEPTS, &table.to_text())?;
    io.write("concepts.log", &losses)
}

fn enrich(cfg: &RunConfig, io: &mut StageIo) -> Result<(), CliError> {
    let graph = read_graph(cfg, io)?;
    let text = io.require(&cfg.out_path(CONCEPTS), Stage::TrainEmbed.name(), "enrich")?;
    let table = EmbeddingTable::from_text(&text)?;
    io.write(CONCEPTS_ENRICHED, &enrich_hierarchical(&table, &graph)?.to_text())
}

fn read_examples(cfg: &RunConfig, io: &mut StageIo, split: &str, why: &str) -> Result<Vec<Example>, CliError> {
    let text = io.require(&cfg.out_path(&examples_file(split)), Stage::Preprocess.name(), why)?;
    Ok(parse_examples(&text)?)
}

fn train_word(cfg: &RunConfig, io: &mut StageIo) -> Result<(), CliError> {
    let examples = read_examples(cfg, io, "train", "train-word")?;
    let sentences: Vec<Vec<String>> =
        examples.iter().flat_map(|e| [e.source_tokens.clone(), e.target_tokens.clone()]).collect();
    let table = train_word_embeddings(&sentences, &cfg.word_training()?)?;
    io.write(WORDS, &table.to_text())?;
    io.write(SUBWORDS, &table.subwords_to_text())
}

/// Frozen tables for the configured variant. Concepts of `examples` absent
/// from the table get their prefix composition when one exists.
fn load_tables(
    cfg: &RunConfig,
    io: &mut StageIo,
    examples: &[Example],
    why: &str,
) -> Result<(SubwordTable, Option<EmbeddingTable>), CliError> {
    let words = SubwordTable::from_text(&io.require(&cfg.out_path(SUBWORDS), Stage::TrainWord.name(), why)?)?;
    let variant = cfg.variant()?;
    if !variant.uses_concepts() {
        return Ok((words, None));
    }
    let (file, producer) = if variant.needs_enriched_table() {
        (CONCEPTS_ENRICHED, Stage::Enrich)
    } else {
        (CONCEPTS, Stage::TrainEmbed)
    };
    let why = format!("{why} --variant {}", cfg.variant_slug()?);
    let mut table = EmbeddingTable::from_text(&io.require(&cfg.out_path(file), producer.name(), &why)?)?;
    if variant.needs_enriched_table() && !table.is_enriched() {
        return Err(CliError::Config(format!("{file} is not hierarchy-enriched")));
    }
    let missing: BTreeSet<_> = examples
        .iter()
        .flat_map(|e| e.source_concepts.iter().chain(&e.target_concepts))
        .filter(|c| !table.contains(c))
        .cloned()
        .collect();
    if !missing.is_empty() {
        let graph = read_graph(cfg, io)?;
        let composed: Vec<_> =
            missing.into_iter().filter_map(|c| compose_from_prefix(&table, &graph, &c).map(|v| (c, v))).collect();
        for (c, v) in composed {
            table.insert(c, v)?;
        }
    }
    Ok((words, Some(table)))
}

fn model_file(cfg: &RunConfig) -> Result<String, CliError> {
    Ok(format!("model.{}.ckpt", cfg.variant_slug()?))
}

fn train_lm(cfg: &RunConfig, io: &mut StageIo) -> Result<(), CliError> {
    let examples = read_examples(cfg, io, "train", "train-lm")?;
    if examples.is_empty() {
        return Err(CliError::Stage("no training examples".into()));
    }
    let (words, concepts) = load_tables(cfg, io, &examples, "train-lm")?;
    let source_vocab = Vocab::build(examples.iter().flat_map(|e| &e.source_tokens));
    let target_vocab = Vocab::build(examples.iter().flat_map(|e| &e.target_tokens));
    let mut model = build_model(cfg.variant()?, source_vocab, target_vocab, words, concepts, &cfg.model()?)?;
    let stats = train_model(&mut model, &examples, &cfg.training()?)?;
    let log: String = stats
        .iter()
        .map(|s| format!("epoch={} mean_token_loss={} tokens={}\n", s.epoch + 1, s.mean_token_loss, s.tokens))
        .collect();
    if let Some(last) = stats.last() {
        log::info!("final mean token loss {:.4}", last.mean_token_loss);
    }
    io.write(&format!("train.{}.log", cfg.variant_slug()?), &log)?;
    io.write(&model_file(cfg)?, &model.to_checkpoint())
}

fn load_model(cfg: &RunConfig, io: &mut StageIo, examples: &[Example], why: &str) -> Result<GenerationModel, CliError> {
    let why = format!("{why} --variant {}", cfg.variant_slug()?);
    let ckpt = io.require(&cfg.out_path(&model_file(cfg)?), Stage::TrainLm.name(), &why)?;
    let (words, concepts) = load_tables(cfg, io, examples, &why)?;
    Ok(GenerationModel::from_checkpoint(&ckpt, words, concepts)?)
}

/// Generated records: `id:` line, one line per sentence, `---` between
/// records.
fn format_generation(id: &str, tokens: &[String]) -> String {
    let mut out = format!("id:{id}\n");
    let mut line: Vec<&str> = Vec::new();
    for t in tokens {
        line.push(t);
        if matches!(t.as_str(), "." | "!" | "?") {
            out.push_str(&line.join(" "));
            out.push('\n');
            line.clear();
        }
    }
    if !line.is_empty() {
        out.push_str(&line.join(" "));
        out.push('\n');
    }
    out
}

fn parse_generations(text: &str) -> Vec<(String, String)> {
    text.split("---\n")
        .filter_map(|rec| {
            let mut lines = rec.lines();
            let id = lines.next()?.strip_prefix("id:")?.to_string();
            Some((id, lines.collect::<Vec<_>>().join(" ")))
        })
        .collect()
}

fn generation_file(slug: &str, split: &str) -> String {
    format!("generated.{slug}.{split}.txt")
}

fn generate(cfg: &RunConfig, io: &mut StageIo) -> Result<(), CliError> {
    let split = cfg.raw("split").to_string();
    let examples = read_examples(cfg, io, &split, "generate")?;
    let model = load_model(cfg, io, &examples, "generate")?;
    let (max_len, beam): (usize, usize) = (cfg.get("max_len")?, cfg.get("beam")?);
    let records: Vec<String> = examples
        .iter()
        .map(|e| Ok(format_generation(&e.id, &model.generate(&e.source_tokens, &e.source_concepts, max_len, beam)?)))
        .collect::<Result<_, CliError>>()?;
    io.write(&generation_file(&cfg.variant_slug()?, &split), &records.join("---\n"))
}

fn eval_ppl(cfg: &RunConfig, io: &mut StageIo) -> Result<(), CliError> {
    let split = cfg.raw("split").to_string();
    let examples = read_examples(cfg, io, &split, "eval-ppl")?;
    let model = load_model(cfg, io, &examples, "eval-ppl")?;
    let report = perplexity(&model, &examples, &split)?;
    println!("{report}");
    io.write(&format!("ppl.{}.{split}.txt", cfg.variant_slug()?), &format!("{report}\n"))
}

fn questionnaire(cfg: &RunConfig, io: &mut StageIo) -> Result<(), CliError> {
    let split = cfg.raw("split").to_string();
    let examples = read_examples(cfg, io, &split, "export-questionnaire")?;
    let mut outputs = Vec::new();
    for name in cfg.raw("questionnaire_models").split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let slug = name.to_lowercase().replace('_', "-");
        let path = cfg.out_path(&generation_file(&slug, &split));
        let why = format!("export-questionnaire with model {slug}");
        let records = parse_generations(&io.require(&path, Stage::Generate.name(), &why)?);
        if records.len() != examples.len() || records.iter().zip(&examples).any(|(r, e)| r.0 != e.id) {
            return Err(CliError::Config(format!("{} does not match {split}.examples", path.display())));
        }
        outputs.push((slug.to_uppercase().replace('-', "_"), records.into_iter().map(|r| r.1).collect()));
    }
    let inputs: Vec<String> = examples.iter().map(|e| e.source_tokens.join(" ")).collect();
    let humans: Vec<String> = examples.iter().map(|e| e.target_tokens.join(" ")).collect();
    let (doc, key) = export_questionnaire(&inputs, &outputs, &humans, cfg.get("questionnaire_items")?, cfg.seed()?)?;
    io.write("questionnaire.md", &doc.render())?;
    io.write("answer_key.csv", &key.to_csv())
}
