//! Attention Seq2Seq continuation models in five variants.
//!
//! Encoders are bidirectional LSTM stacks; the decoder is a unidirectional
//! stack fed `[previous token embedding; attention context]`, with the
//! previous top hidden state as the attention query. Word and concept
//! tables stay frozen; every other parameter trains.

mod generate;
mod train;
mod vocab;

use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::concept::{EmbedError, EmbeddingTable};
use crate::corpus::Example;
use crate::kg::ConceptId;
use crate::neural::checkpoint::{read_checkpoint, write_checkpoint};
use crate::neural::{
    bilstm_encode, AttentionParams, BiLstm, Dropout, Graph, LstmStack, NeuralError, NodeId, ParamId, ParamStore,
    StackState, Tensor,
};
use crate::word::{SubwordTable, WordError};

pub use train::{train_epoch, train_model, EpochStats, TrainRunConfig};
pub use vocab::{Vocab, EOS, PAD, SOS, UNK};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("source sequence is empty")]
    EmptySource,
    #[error(transparent)]
    Neural(#[from] NeuralError),
    #[error(transparent)]
    Word(#[from] WordError),
    #[error(transparent)]
    Embed(#[from] EmbedError),
}

pub type Result<T> = std::result::Result<T, ModelError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ModelVariant {
    Baseline,
    Cs,
    Csd,
    Hcsd,
    HcsdT,
}

impl ModelVariant {
    pub const ALL: [ModelVariant; 5] =
        [ModelVariant::Baseline, ModelVariant::Cs, ModelVariant::Csd, ModelVariant::Hcsd, ModelVariant::HcsdT];

    pub fn uses_concepts(self) -> bool {
        self != ModelVariant::Baseline
    }

    pub fn encoder_count(self) -> usize {
        match self {
            ModelVariant::Baseline | ModelVariant::Cs => 1,
            _ => 2,
        }
    }

    pub fn needs_enriched_table(self) -> bool {
        matches!(self, ModelVariant::Hcsd | ModelVariant::HcsdT)
    }

    /// Whether target concepts join the concept input during training.
    pub fn trains_on_target_concepts(self) -> bool {
        self == ModelVariant::HcsdT
    }
}

impl fmt::Display for ModelVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ModelVariant::Baseline => "BASELINE",
            ModelVariant::Cs => "CS",
            ModelVariant::Csd => "CSD",
            ModelVariant::Hcsd => "HCSD",
            ModelVariant::HcsdT => "HCSD_T",
        })
    }
}

impl FromStr for ModelVariant {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "baseline" | "seq2seq" => Ok(ModelVariant::Baseline),
            "cs" => Ok(ModelVariant::Cs),
            "csd" => Ok(ModelVariant::Csd),
            "hcsd" => Ok(ModelVariant::Hcsd),
            "hcsd-t" => Ok(ModelVariant::HcsdT),
            other => Err(ModelError::Config(format!("unknown variant {other}"))),
        }
    }
}

/// Architecture sizes; `hidden` is per LSTM direction.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub word_dim: usize,
    pub concept_dim: usize,
    pub hidden: usize,
    pub layers: usize,
    pub attention_dim: usize,
    pub init_scale: f64,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig { word_dim: 80, concept_dim: 80, hidden: 400, layers: 3, attention_dim: 400, init_scale: 0.08, seed: 0 }
    }
}

impl ModelConfig {
    fn validate(&self) -> Result<()> {
        if self.word_dim == 0 || self.concept_dim == 0 || self.hidden == 0 || self.layers == 0 || self.attention_dim == 0 {
            return Err(ModelError::Config(format!("all sizes must be positive: {self:?}")));
        }
        if !(self.init_scale.is_finite() && self.init_scale > 0.0) {
            return Err(ModelError::Config(format!("init scale {}", self.init_scale)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
struct Layout {
    encoders: Vec<BiLstm>,
    attention: AttentionParams,
    decoder: LstmStack,
    bridge_w: ParamId,
    bridge_b: ParamId,
    out_w: ParamId,
    out_b: ParamId,
    sos: ParamId,
    /// CS only: boundary embedding and concept-to-word projection.
    sep: Option<ParamId>,
    concept_proj: Option<ParamId>,
    /// Concept variants: vector for concepts missing from the table.
    unk_concept: Option<ParamId>,
}

/// Encoder output for one source.
pub struct Memory {
    pub annotations: Vec<NodeId>,
    keys: NodeId,
    values: NodeId,
    pub init: StackState,
}

#[derive(Debug, Clone)]
pub struct GenerationModel {
    variant: ModelVariant,
    cfg: ModelConfig,
    source_vocab: Vocab,
    target_vocab: Vocab,
    word_table: SubwordTable,
    concept_table: Option<EmbeddingTable>,
    params: ParamStore,
    layout: Layout,
}

fn build_layout(variant: ModelVariant, cfg: &ModelConfig, target_len: usize, params: &mut ParamStore) -> Result<Layout> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let s = cfg.init_scale;
    let (h, l) = (cfg.hidden, cfg.layers);
    let mut encoders = vec![BiLstm::new(params, "enc_word", cfg.word_dim, h, l, s, &mut rng)?];
    if variant.encoder_count() == 2 {
        encoders.push(BiLstm::new(params, "enc_concept", cfg.concept_dim, h, l, s, &mut rng)?);
    }
    let (sep, concept_proj) = if variant == ModelVariant::Cs {
        (
            Some(params.add_uniform("cs.sep", &[cfg.word_dim], s, &mut rng)?),
            Some(params.add_uniform("cs.concept_proj", &[cfg.word_dim, cfg.concept_dim], s, &mut rng)?),
        )
    } else {
        (None, None)
    };
    let unk_concept =
        if variant.uses_concepts() { Some(params.add_uniform("unk_concept", &[cfg.concept_dim], s, &mut rng)?) } else { None };
    let finals = 2 * h * encoders.len();
    let bridge_w = params.add_uniform("bridge.w", &[l * h, finals], s, &mut rng)?;
    let bridge_b = params.add_uniform("bridge.b", &[l * h], s, &mut rng)?;
    let attention = AttentionParams::new(params, "attn", h, 2 * h, cfg.attention_dim, s, &mut rng)?;
    let decoder = LstmStack::new(params, "dec", cfg.word_dim + 2 * h, h, l, s, &mut rng)?;
    let sos = params.add_uniform("dec.sos", &[cfg.word_dim], s, &mut rng)?;
    let out_w = params.add_uniform("out.w", &[target_len, 3 * h], s, &mut rng)?;
    let out_b = params.add_uniform("out.b", &[target_len], s, &mut rng)?;
    Ok(Layout { encoders, attention, decoder, bridge_w, bridge_b, out_w, out_b, sos, sep, concept_proj, unk_concept })
}

/// Validates tables against the variant and initialises every parameter
/// from `cfg.seed`.
pub fn build_model(
    variant: ModelVariant,
    source_vocab: Vocab,
    target_vocab: Vocab,
    word_table: SubwordTable,
    concept_table: Option<EmbeddingTable>,
    cfg: &ModelConfig,
) -> Result<GenerationModel> {
    cfg.validate()?;
    if word_table.dim() != cfg.word_dim {
        return Err(ModelError::Config(format!("word table dim {} != word_dim {}", word_table.dim(), cfg.word_dim)));
    }
    let concept_table = if variant.uses_concepts() {
        let t = concept_table.ok_or_else(|| ModelError::Config(format!("{variant} needs a concept table")))?;
        if t.dim() != cfg.concept_dim {
            return Err(ModelError::Config(format!("concept table dim {} != concept_dim {}", t.dim(), cfg.concept_dim)));
        }
        if variant.needs_enriched_table() && !t.is_enriched() {
            return Err(ModelError::Config(format!("{variant} needs a hierarchy-enriched concept table")));
        }
        Some(t)
    } else {
        None
    };
    let mut params = ParamStore::new();
    let layout = build_layout(variant, cfg, target_vocab.len(), &mut params)?;
    Ok(GenerationModel { variant, cfg: cfg.clone(), source_vocab, target_vocab, word_table, concept_table, params, layout })
}

impl GenerationModel {
    pub fn variant(&self) -> ModelVariant {
        self.variant
    }

    pub fn config(&self) -> &ModelConfig {
        &self.cfg
    }

    pub fn encoder_count(&self) -> usize {
        self.layout.encoders.len()
    }

    pub fn source_vocab(&self) -> &Vocab {
        &self.source_vocab
    }

    pub fn target_vocab(&self) -> &Vocab {
        &self.target_vocab
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    pub fn concept_table(&self) -> Option<&EmbeddingTable> {
        self.concept_table.as_ref()
    }

    pub fn concept_table_mut(&mut self) -> Option<&mut EmbeddingTable> {
        self.concept_table.as_mut()
    }

    /// Rows of the output projection, one per target token.
    pub fn output_classes(&self) -> usize {
        self.params.get(self.layout.out_w).rows()
    }

    /// Parameters of the decoder side: decoder stack, start embedding and
    /// output projection.
    pub fn decoder_params(&self) -> Vec<ParamId> {
        let l = &self.layout;
        let mut ids: Vec<ParamId> = l.decoder.cells.iter().flat_map(|c| [c.w, c.b]).collect();
        ids.extend([l.sos, l.out_w, l.out_b]);
        ids
    }

    /// Concept encoder weights plus the unknown-concept vector.
    pub fn concept_pathway_params(&self) -> Vec<ParamId> {
        let l = &self.layout;
        let mut ids: Vec<ParamId> = l
            .encoders
            .iter()
            .skip(1)
            .flat_map(|e| e.layers.iter().flat_map(|(f, b)| [f.w, f.b, b.w, b.b]))
            .collect();
        ids.extend(l.unk_concept);
        ids.extend(l.concept_proj);
        ids
    }

    fn word_input(&self, g: &mut Graph, token: &str) -> Result<NodeId> {
        Ok(g.vector(self.word_table.word_vector(token)?))
    }

    fn concept_input(&self, g: &mut Graph, c: &ConceptId) -> Result<NodeId> {
        let table = self.concept_table.as_ref().expect("concept variants carry a table");
        Ok(match table.get(c) {
            Some(v) => g.vector(v.to_vec()),
            None => g.param(self.layout.unk_concept.expect("concept variants carry an unk vector")),
        })
    }

    /// Concept sequence the encoder sees.
    fn concept_sequence<'e>(&self, ex: &'e Example, training: bool) -> Vec<&'e ConceptId> {
        let mut seq: Vec<&ConceptId> = ex.source_concepts.iter().collect();
        if training && self.variant.trains_on_target_concepts() {
            seq.extend(ex.target_concepts.iter());
        }
        seq
    }

    /// Annotation memory and initial decoder state.
    pub fn encode(
        &self,
        g: &mut Graph,
        source_tokens: &[String],
        concepts: &[&ConceptId],
        dropout: &mut Dropout,
    ) -> Result<Memory> {
        if source_tokens.is_empty() {
            return Err(ModelError::EmptySource);
        }
        let words: Vec<NodeId> = source_tokens.iter().map(|t| self.word_input(g, t)).collect::<Result<_>>()?;
        let mut encodings = Vec::new();
        match self.variant {
            ModelVariant::Baseline => encodings.push(bilstm_encode(g, &self.layout.encoders[0], &words, dropout)?),
            ModelVariant::Cs => {
                let mut seq = words;
                seq.push(g.param(self.layout.sep.expect("cs layout")));
                let proj = g.param(self.layout.concept_proj.expect("cs layout"));
                for c in concepts {
                    let v = self.concept_input(g, c)?;
                    seq.push(g.matvec(proj, v)?);
                }
                encodings.push(bilstm_encode(g, &self.layout.encoders[0], &seq, dropout)?);
            }
            _ => {
                encodings.push(bilstm_encode(g, &self.layout.encoders[0], &words, dropout)?);
                if !concepts.is_empty() {
                    let cs: Vec<NodeId> = concepts.iter().map(|c| self.concept_input(g, c)).collect::<Result<_>>()?;
                    encodings.push(bilstm_encode(g, &self.layout.encoders[1], &cs, dropout)?);
                }
            }
        }
        let annotations: Vec<NodeId> = encodings.iter().flat_map(|e| e.outputs.iter().copied()).collect();
        let mut finals = Vec::new();
        for e in &encodings {
            finals.extend([e.forward_final, e.backward_final]);
        }
        // a document without concepts contributes zero final states
        let expected = 2 * self.cfg.hidden * self.layout.encoders.len();
        let have = 2 * self.cfg.hidden * encodings.len();
        if have < expected {
            finals.push(g.vector(vec![0.0; expected - have]));
        }
        let finals = g.concat(&finals)?;
        let bw = g.param(self.layout.bridge_w);
        let bb = g.param(self.layout.bridge_b);
        let z = g.matvec(bw, finals)?;
        let z = g.add(z, bb)?;
        let h0 = g.tanh(z);
        let hsz = self.cfg.hidden;
        let mut init = StackState { h: Vec::new(), c: Vec::new() };
        for l in 0..self.cfg.layers {
            init.h.push(g.slice(h0, l * hsz, hsz)?);
            init.c.push(g.vector(vec![0.0; hsz]));
        }
        let values = g.stack_rows(&annotations)?;
        let keys = self.layout.attention.project_keys(g, values)?;
        Ok(Memory { annotations, keys, values, init })
    }

    fn start_input(&self, g: &mut Graph) -> NodeId {
        g.param(self.layout.sos)
    }

    /// One decoder step; returns the next state and output logits.
    fn decode_step(
        &self,
        g: &mut Graph,
        mem: &Memory,
        state: &StackState,
        prev: NodeId,
        dropout: &mut Dropout,
    ) -> Result<(StackState, NodeId)> {
        let (ctx, _) = self.layout.attention.attend(g, state.top(), mem.keys, mem.values)?;
        let x = g.concat(&[prev, ctx])?;
        let next = self.layout.decoder.step(g, x, state, dropout)?;
        let feat = g.concat(&[next.top(), ctx])?;
        let feat = dropout.apply(g, feat)?;
        let w = g.param(self.layout.out_w);
        let b = g.param(self.layout.out_b);
        let logits = g.matvec(w, feat)?;
        Ok((next, g.add(logits, b)?))
    }

    /// Gold output ids: target tokens then `<eos>`.
    pub fn target_ids(&self, target_tokens: &[String]) -> Vec<usize> {
        let mut ids: Vec<usize> = target_tokens.iter().map(|t| self.target_vocab.id(t)).collect();
        ids.push(Vocab::EOS_ID);
        ids
    }

    /// Teacher-forced per-step cross-entropy nodes.
    pub fn step_losses(&self, g: &mut Graph, ex: &Example, training: bool, dropout: &mut Dropout) -> Result<Vec<NodeId>> {
        let concepts = self.concept_sequence(ex, training);
        let mem = self.encode(g, &ex.source_tokens, &concepts, dropout)?;
        let mut state = mem.init.clone();
        let mut prev = self.start_input(g);
        let gold = self.target_ids(&ex.target_tokens);
        let mut losses = Vec::with_capacity(gold.len());
        for (t, &y) in gold.iter().enumerate() {
            let (next, logits) = self.decode_step(g, &mem, &state, prev, dropout)?;
            losses.push(g.cross_entropy(logits, y)?);
            state = next;
            if t < ex.target_tokens.len() {
                prev = self.word_input(g, &ex.target_tokens[t])?;
            }
        }
        Ok(losses)
    }

    /// Summed teacher-forced loss and its token count.
    pub fn loss(&self, g: &mut Graph, ex: &Example, training: bool, dropout: &mut Dropout) -> Result<(NodeId, usize)> {
        let losses = self.step_losses(g, ex, training, dropout)?;
        Ok((g.sum(&losses)?, losses.len()))
    }

    /// Log-probability of each gold output token (including `<eos>`) under
    /// teacher forcing, evaluation mode, source concepts only.
    pub fn target_log_probs(&self, ex: &Example) -> Result<Vec<f64>> {
        let mut g = Graph::new(&self.params);
        let losses = self.step_losses(&mut g, ex, false, &mut Dropout::eval())?;
        Ok(losses.iter().map(|&n| -g.value(n).item()).collect())
    }

    /// Next-token log-distribution after feeding `prefix` (target vocab ids),
    /// recomputed from scratch.
    pub fn step_log_probs(&self, source_tokens: &[String], concepts: &[ConceptId], prefix: &[usize]) -> Result<Vec<f64>> {
        let mut g = Graph::new(&self.params);
        let mut dropout = Dropout::eval();
        let refs: Vec<&ConceptId> = concepts.iter().collect();
        let mem = self.encode(&mut g, source_tokens, &refs, &mut dropout)?;
        let mut state = mem.init.clone();
        let mut prev = self.start_input(&mut g);
        let mut logits = None;
        for t in 0..=prefix.len() {
            let (next, l) = self.decode_step(&mut g, &mem, &state, prev, &mut dropout)?;
            state = next;
            logits = Some(l);
            if t < prefix.len() {
                prev = self.word_input(&mut g, self.target_vocab.token(prefix[t]))?;
            }
        }
        Ok(crate::neural::log_softmax(g.value(logits.expect("at least one step")).data()))
    }

    pub fn to_checkpoint(&self) -> String {
        let c = &self.cfg;
        let meta: Vec<(String, String)> = [
            ("variant", self.variant.to_string()),
            ("word_dim", c.word_dim.to_string()),
            ("concept_dim", c.concept_dim.to_string()),
            ("hidden", c.hidden.to_string()),
            ("layers", c.layers.to_string()),
            ("attention_dim", c.attention_dim.to_string()),
            ("init_scale", format!("{:e}", c.init_scale)),
            ("seed", c.seed.to_string()),
            ("source_vocab", self.source_vocab.tokens().join(" ")),
            ("target_vocab", self.target_vocab.tokens().join(" ")),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect();
        write_checkpoint(&meta, &self.params)
    }

    /// Restores a model from its checkpoint and the frozen tables it was
    /// built with.
    pub fn from_checkpoint(
        text: &str,
        word_table: SubwordTable,
        concept_table: Option<EmbeddingTable>,
    ) -> Result<GenerationModel> {
        let (meta, stored) = read_checkpoint(text)?;
        let get = |k: &str| -> Result<&str> {
            meta.iter()
                .find(|(mk, _)| mk == k)
                .map(|(_, v)| v.as_str())
                .ok_or_else(|| ModelError::Config(format!("checkpoint lacks {k}")))
        };
        let num = |k: &str| -> Result<usize> { get(k)?.parse().map_err(|_| ModelError::Config(format!("bad {k}"))) };
        let vocab = |k: &str| -> Result<Vocab> {
            Vocab::from_tokens(get(k)?.split(' ').map(str::to_string).collect())
                .ok_or_else(|| ModelError::Config(format!("bad {k}")))
        };
        let cfg = ModelConfig {
            word_dim: num("word_dim")?,
            concept_dim: num("concept_dim")?,
            hidden: num("hidden")?,
            layers: num("layers")?,
            attention_dim: num("attention_dim")?,
            init_scale: get("init_scale")?.parse().map_err(|_| ModelError::Config("bad init_scale".into()))?,
            seed: get("seed")?.parse().map_err(|_| ModelError::Config("bad seed".into()))?,
        };
        let variant: ModelVariant = get("variant")?.parse()?;
        let mut model =
            build_model(variant, vocab("source_vocab")?, vocab("target_vocab")?, word_table, concept_table, &cfg)?;
        if stored.len() != model.params.len() {
            return Err(ModelError::Config(format!("checkpoint has {} params, model {}", stored.len(), model.params.len())));
        }
        for (_, name, t) in stored.iter() {
            let id = model.params.lookup(name).ok_or_else(|| ModelError::Config(format!("unexpected param {name}")))?;
            if model.params.get(id).shape() != t.shape() {
                return Err(ModelError::Config(format!("shape mismatch for {name}")));
            }
            *model.params.get_mut(id) = t.clone();
        }
        Ok(model)
    }

    /// Zeroes a parameter in place.
    pub fn zero_param(&mut self, id: ParamId) {
        let shape = self.params.get(id).shape().to_vec();
        *self.params.get_mut(id) = Tensor::zeros(&shape);
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::concept::EmbeddingTable;
    use crate::neural::gradcheck::check_params;
    use crate::word::{train_word_embeddings, WordTrainConfig};
    use rand::Rng;

    pub(crate) fn toks(s: &str) -> Vec<String> {
        s.split_whitespace().map(str::to_string).collect()
    }

    pub(crate) fn cid(n: u32) -> ConceptId {
        ConceptId::from_number(n).unwrap()
    }

    pub(crate) fn desk_cfg() -> ModelConfig {
        ModelConfig { word_dim: 6, concept_dim: 4, hidden: 5, layers: 1, attention_dim: 5, init_scale: 0.08, seed: 3 }
    }

    pub(crate) fn tables(enriched: bool) -> (SubwordTable, EmbeddingTable) {
        let corpus = vec![toks("the lungs are clear today"), toks("heart size is normal")];
        let wcfg = WordTrainConfig { dim: 6, epochs: 2, hash_buckets: 1000, ..Default::default() };
        let words = train_word_embeddings(&corpus, &wcfg).unwrap();
        let mut concepts = EmbeddingTable::new(4);
        for n in 1..=4 {
            concepts.insert(cid(n), vec![0.1 * n as f64, -0.2, 0.3, 0.05 * n as f64]).unwrap();
        }
        concepts.set_enriched(enriched);
        (words, concepts)
    }

    pub(crate) fn example() -> Example {
        Example {
            id: "e".into(),
            source_tokens: toks("the lungs are clear ."),
            source_concepts: vec![cid(1), cid(2), cid(3)],
            target_tokens: toks("heart is normal"),
            target_concepts: vec![cid(4)],
        }
    }

    pub(crate) fn model(variant: ModelVariant) -> GenerationModel {
        let ex = example();
        let (w, c) = tables(variant.needs_enriched_table());
        build_model(variant, Vocab::build(&ex.source_tokens), Vocab::build(&ex.target_tokens), w, Some(c), &desk_cfg())
            .unwrap()
    }

    fn memory_len(m: &GenerationModel, ex: &Example) -> usize {
        let mut g = Graph::new(m.params());
        let concepts: Vec<&ConceptId> = ex.source_concepts.iter().collect();
        m.encode(&mut g, &ex.source_tokens, &concepts, &mut Dropout::eval()).unwrap().annotations.len()
    }

    #[test]
    fn structure_per_variant() {
        let ex = example();
        let expect = [(ModelVariant::Baseline, 1, 5), (ModelVariant::Cs, 1, 9), (ModelVariant::Csd, 2, 8),
            (ModelVariant::Hcsd, 2, 8), (ModelVariant::HcsdT, 2, 8)];
        for (v, encoders, mem) in expect {
            let m = model(v);
            assert_eq!(m.encoder_count(), encoders, "{v}");
            assert_eq!(memory_len(&m, &ex), mem, "{v}");
            assert_eq!(m.output_classes(), m.target_vocab().len());
        }
    }

    #[test]
    fn config_errors() {
        let ex = example();
        let (w, c) = tables(false);
        let sv = Vocab::build(&ex.source_tokens);
        let tv = Vocab::build(&ex.target_tokens);
        let cfg = desk_cfg();
        let err = |v, c: Option<EmbeddingTable>| build_model(v, sv.clone(), tv.clone(), w.clone(), c, &cfg).err();
        assert!(matches!(err(ModelVariant::Cs, None), Some(ModelError::Config(_))));
        assert!(matches!(err(ModelVariant::Hcsd, Some(c.clone())), Some(ModelError::Config(_))));
        assert!(err(ModelVariant::Csd, Some(c.clone())).is_none());
        assert!(err(ModelVariant::Baseline, None).is_none());
        let bad = ModelConfig { word_dim: 7, ..desk_cfg() };
        assert!(build_model(ModelVariant::Baseline, sv, tv, w, None, &bad).is_err());
        let m = model(ModelVariant::Csd);
        let mut g = Graph::new(m.params());
        assert!(matches!(m.encode(&mut g, &[], &[], &mut Dropout::eval()), Err(ModelError::EmptySource)));
    }

    #[test]
    fn variant_names() {
        for v in ModelVariant::ALL {
            assert_eq!(v.to_string().parse::<ModelVariant>().unwrap(), v);
        }
        assert_eq!("hcsd-t".parse::<ModelVariant>().unwrap(), ModelVariant::HcsdT);
        assert!("transformer".parse::<ModelVariant>().is_err());
    }

    #[test]
    fn target_concepts_only_reach_training_encoder() {
        let m = model(ModelVariant::HcsdT);
        let ex = example();
        assert_eq!(m.concept_sequence(&ex, true).len(), 4);
        assert_eq!(m.concept_sequence(&ex, false).len(), 3);
        let csd = model(ModelVariant::Csd);
        assert_eq!(csd.concept_sequence(&ex, true).len(), 3);
    }

    #[test]
    fn end_to_end_decoder_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let ex = Example { target_tokens: toks("heart is normal"), ..example() };
        for v in [ModelVariant::Baseline, ModelVariant::Csd] {
            let mut m = model(v);
            // widen the weights so gradients are well above the noise floor
            for id in m.params().ids().collect::<Vec<_>>() {
                for x in m.params_mut().get_mut(id).data_mut() {
                    *x *= 6.0;
                }
            }
            let decoder = m.decoder_params();
            let coords: Vec<(ParamId, usize)> = (0..20)
                .map(|_| {
                    let id = decoder[rng.gen_range(0..decoder.len())];
                    (id, rng.gen_range(0..m.params().get(id).len()))
                })
                .collect();
            let err = check_params(m.params(), 1e-4, Some(&coords), |g| {
                Ok(m.loss(g, &ex, true, &mut Dropout::eval()).map_err(|e| NeuralError::Shape(e.to_string()))?.0)
            })
            .unwrap();
            assert!(err < 1e-3, "{v}: {err}");
        }
    }

    #[test]
    fn zeroed_concept_pathway_leaves_only_word_information() {
        let mut m = model(ModelVariant::Csd);
        let a = example();
        let b = Example { id: "b".into(), target_tokens: toks("is normal"), source_concepts: vec![cid(4)], ..example() };
        let cfg = train::TrainRunConfig { epochs: 5, lr: 0.02, batch_size: 2, ..Default::default() };
        train_model(&mut m, &[a.clone(), b], &cfg).unwrap();
        let other = vec![cid(4), cid(4), cid(9)];
        let dists = |m: &GenerationModel, concepts: &[ConceptId]| -> Vec<Vec<f64>> {
            (0..3).map(|k| m.step_log_probs(&a.source_tokens, concepts, &[4, 5, 6][..k]).unwrap()).collect()
        };
        assert_ne!(dists(&m, &a.source_concepts), dists(&m, &other));
        for id in m.concept_pathway_params() {
            m.zero_param(id);
        }
        let table = m.concept_table_mut().unwrap();
        let ids: Vec<ConceptId> = table.iter().map(|(c, _)| c.clone()).collect();
        for c in ids {
            table.insert(c, vec![0.0; 4]).unwrap();
        }
        assert_eq!(dists(&m, &a.source_concepts), dists(&m, &other));
    }

    #[test]
    fn checkpoint_round_trip() {
        let m = model(ModelVariant::Cs);
        let (w, c) = tables(false);
        let back = GenerationModel::from_checkpoint(&m.to_checkpoint(), w, Some(c)).unwrap();
        assert_eq!(back.variant(), ModelVariant::Cs);
        assert_eq!(back.to_checkpoint(), m.to_checkpoint());
        let ex = example();
        assert_eq!(back.target_log_probs(&ex).unwrap(), m.target_log_probs(&ex).unwrap());
    }
}
