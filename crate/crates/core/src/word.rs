//! Subword word embeddings.
//!
//! A word is represented by its own vector plus the vectors of its
//! boundary-marked character n-grams (`<word>`, lengths 3 to 6), hashed into
//! a fixed number of buckets. Out-of-vocabulary words are the sum of their
//! known n-gram vectors, so any token gets an embedding. Training is
//! skip-gram with negative sampling.

use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::embedding_io::{read_vectors, write_vectors, VectorFileError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum WordError {
    #[error("cannot train on an empty corpus")]
    EmptyCorpus,
    #[error("empty word")]
    EmptyWord,
    #[error("invalid training config: {0}")]
    Config(String),
    #[error("subword file: {0}")]
    Format(String),
    #[error(transparent)]
    File(#[from] VectorFileError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct WordTrainConfig {
    pub dim: usize,
    pub window: usize,
    pub epochs: usize,
    pub lr: f64,
    pub seed: u64,
    pub hash_buckets: u32,
    pub negatives: usize,
    pub min_n: usize,
    pub max_n: usize,
}

impl Default for WordTrainConfig {
    fn default() -> Self {
        WordTrainConfig {
            dim: 80,
            window: 5,
            epochs: 5,
            lr: 0.05,
            seed: 0,
            hash_buckets: 2_000_000,
            negatives: 5,
            min_n: 3,
            max_n: 6,
        }
    }
}

/// Character n-grams of `<word>` with lengths in `min_n..=max_n`, in order of
/// start position then length.
pub fn char_ngrams(word: &str, min_n: usize, max_n: usize) -> Vec<String> {
    let marked: Vec<char> = format!("<{word}>").chars().collect();
    let mut out = Vec::new();
    for start in 0..marked.len() {
        for n in min_n..=max_n {
            if start + n <= marked.len() {
                out.push(marked[start..start + n].iter().collect());
            }
        }
    }
    out
}

/// 32-bit FNV-1a over the UTF-8 bytes.
pub fn fnv1a(text: &str) -> u32 {
    let mut h: u32 = 2_166_136_261;
    for b in text.bytes() {
        h ^= b as u32;
        h = h.wrapping_mul(16_777_619);
    }
    h
}

#[derive(Debug, Clone, PartialEq)]
pub struct SubwordTable {
    dim: usize,
    min_n: usize,
    max_n: usize,
    hash_buckets: u32,
    /// Only buckets reached by some training word.
    ngram_vectors: BTreeMap<u32, Vec<f64>>,
    own_vectors: BTreeMap<String, Vec<f64>>,
    word_vectors: BTreeMap<String, Vec<f64>>,
}

fn add_into(acc: &mut [f64], v: &[f64]) {
    acc.iter_mut().zip(v).for_each(|(a, b)| *a += b);
}

impl SubwordTable {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn ngram_range(&self) -> (usize, usize) {
        (self.min_n, self.max_n)
    }

    pub fn hash_buckets(&self) -> u32 {
        self.hash_buckets
    }

    pub fn len(&self) -> usize {
        self.word_vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.word_vectors.is_empty()
    }

    pub fn contains(&self, word: &str) -> bool {
        self.word_vectors.contains_key(word)
    }

    pub fn words(&self) -> impl Iterator<Item = &str> {
        self.word_vectors.keys().map(String::as_str)
    }

    pub fn buckets(&self, word: &str) -> Vec<u32> {
        char_ngrams(word, self.min_n, self.max_n)
            .iter()
            .map(|g| fnv1a(g) % self.hash_buckets)
            .collect()
    }

    pub fn ngram_vector(&self, bucket: u32) -> Option<&[f64]> {
        self.ngram_vectors.get(&bucket).map(Vec::as_slice)
    }

    pub fn own_vector(&self, word: &str) -> Option<&[f64]> {
        self.own_vectors.get(word).map(Vec::as_slice)
    }

    /// Sum of the known n-gram vectors of `word`.
    pub fn subword_sum(&self, word: &str) -> Vec<f64> {
        let mut v = vec![0.0; self.dim];
        for b in self.buckets(word) {
            if let Some(ng) = self.ngram_vectors.get(&b) {
                add_into(&mut v, ng);
            }
        }
        v
    }

    /// Cached vector for known words, n-gram composition otherwise.
    pub fn word_vector(&self, word: &str) -> Result<Vec<f64>, WordError> {
        if word.is_empty() {
            return Err(WordError::EmptyWord);
        }
        Ok(match self.word_vectors.get(word) {
            Some(v) => v.clone(),
            None => self.subword_sum(word),
        })
    }

    fn refresh_cache(&mut self) {
        let words: Vec<String> = self.own_vectors.keys().cloned().collect();
        for w in words {
            let mut v = self.subword_sum(&w);
            add_into(&mut v, &self.own_vectors[&w]);
            self.word_vectors.insert(w, v);
        }
    }

    /// Word vector file in the shared text format.
    pub fn to_text(&self) -> String {
        write_vectors(self.dim, &[], self.word_vectors.iter().map(|(k, v)| (k.as_str(), v.as_slice())))
    }

    /// Sidecar holding own-word (`w/…`) and bucket (`b/…`) vectors; the
    /// header carries `hash_buckets min_n max_n` after the dimension.
    pub fn subwords_to_text(&self) -> String {
        let extra = vec![self.hash_buckets.to_string(), self.min_n.to_string(), self.max_n.to_string()];
        let keys: Vec<(String, &Vec<f64>)> = self
            .own_vectors
            .iter()
            .map(|(w, v)| (format!("w/{w}"), v))
            .chain(self.ngram_vectors.iter().map(|(b, v)| (format!("b/{b}"), v)))
            .collect();
        write_vectors(self.dim, &extra, keys.iter().map(|(k, v)| (k.as_str(), v.as_slice())))
    }

    pub fn from_text(subwords: &str) -> Result<Self, WordError> {
        let file = read_vectors(subwords)?;
        let field = |i: usize| -> Result<usize, WordError> {
            file.extra
                .get(i)
                .and_then(|x| x.parse().ok())
                .ok_or_else(|| WordError::Format("header needs hash_buckets min_n max_n".into()))
        };
        let mut table = SubwordTable {
            dim: file.dim,
            hash_buckets: field(0)? as u32,
            min_n: field(1)?,
            max_n: field(2)?,
            ngram_vectors: BTreeMap::new(),
            own_vectors: BTreeMap::new(),
            word_vectors: BTreeMap::new(),
        };
        for (key, v) in file.rows {
            if let Some(w) = key.strip_prefix("w/") {
                table.own_vectors.insert(w.to_string(), v);
            } else if let Some(b) = key.strip_prefix("b/") {
                let b = b.parse().map_err(|_| WordError::Format(format!("bad bucket key {key}")))?;
                table.ngram_vectors.insert(b, v);
            } else {
                return Err(WordError::Format(format!("unknown key {key}")));
            }
        }
        table.refresh_cache();
        Ok(table)
    }
}

/// Negative-sampling loss for one `(input, positive, negatives)` triple,
/// with gradients for the input vector, the positive and each negative.
pub fn sgns_loss_and_grads(input: &[f64], positive: &[f64], negatives: &[&[f64]]) -> (f64, Vec<f64>, Vec<Vec<f64>>) {
    let dot = |a: &[f64], b: &[f64]| -> f64 { a.iter().zip(b).map(|(x, y)| x * y).sum() };
    let sig = |x: f64| 1.0 / (1.0 + (-x).exp());
    let ln_sig = |x: f64| if x >= 0.0 { -(-x).exp().ln_1p() } else { x - x.exp().ln_1p() };
    let mut d_input = vec![0.0; input.len()];
    let mut d_outputs = Vec::with_capacity(negatives.len() + 1);
    let mut loss = 0.0;
    for (k, (out, label)) in std::iter::once((positive, 1.0))
        .chain(negatives.iter().map(|n| (*n, 0.0)))
        .enumerate()
    {
        let z = dot(input, out);
        loss -= if k == 0 { ln_sig(z) } else { ln_sig(-z) };
        let dz = sig(z) - label;
        add_into(&mut d_input, &out.iter().map(|u| dz * u).collect::<Vec<_>>());
        d_outputs.push(input.iter().map(|v| dz * v).collect());
    }
    (loss, d_input, d_outputs)
}

pub fn train_word_embeddings(corpus: &[Vec<String>], cfg: &WordTrainConfig) -> Result<SubwordTable, WordError> {
    if cfg.dim == 0 || cfg.epochs == 0 || cfg.hash_buckets == 0 || cfg.min_n == 0 || cfg.min_n > cfg.max_n {
        return Err(WordError::Config(format!("{cfg:?}")));
    }
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for tok in corpus.iter().flatten() {
        if !tok.is_empty() {
            *counts.entry(tok.as_str()).or_default() += 1;
        }
    }
    if counts.is_empty() {
        return Err(WordError::EmptyCorpus);
    }
    let mut vocab: Vec<(&str, usize)> = counts.into_iter().collect();
    vocab.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
    let index: BTreeMap<&str, usize> = vocab.iter().enumerate().map(|(i, (w, _))| (*w, i)).collect();

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let dim = cfg.dim;
    let scale = 1.0 / dim as f64;
    let mut own: Vec<Vec<f64>> =
        vocab.iter().map(|_| (0..dim).map(|_| rng.gen_range(-scale..scale)).collect()).collect();
    let mut outputs: Vec<Vec<f64>> = vec![vec![0.0; dim]; vocab.len()];

    let bucket_of = |w: &str| -> Vec<u32> {
        char_ngrams(w, cfg.min_n, cfg.max_n).iter().map(|g| fnv1a(g) % cfg.hash_buckets).collect()
    };
    let word_buckets: Vec<Vec<u32>> = vocab.iter().map(|(w, _)| bucket_of(w)).collect();
    let used: BTreeSet<u32> = word_buckets.iter().flatten().copied().collect();
    let mut ngrams: BTreeMap<u32, Vec<f64>> =
        used.into_iter().map(|b| (b, (0..dim).map(|_| rng.gen_range(-scale..scale)).collect())).collect();

    // unigram^0.75 sampling distribution
    let weights: Vec<f64> = vocab.iter().map(|(_, c)| (*c as f64).powf(0.75)).collect();
    let total: f64 = weights.iter().sum();
    let mut cumulative = Vec::with_capacity(weights.len());
    let mut acc = 0.0;
    for w in &weights {
        acc += w / total;
        cumulative.push(acc);
    }
    let sample = |rng: &mut ChaCha8Rng| -> usize {
        let u: f64 = rng.gen();
        cumulative.partition_point(|c| *c < u).min(cumulative.len() - 1)
    };

    let sentences: Vec<Vec<usize>> = corpus
        .iter()
        .map(|s| s.iter().filter(|t| !t.is_empty()).map(|t| index[t.as_str()]).collect())
        .collect();
    for epoch in 0..cfg.epochs {
        let mut loss_sum = 0.0;
        let mut pairs = 0usize;
        for sent in &sentences {
            for (pos, &center) in sent.iter().enumerate() {
                let lo = pos.saturating_sub(cfg.window);
                let hi = (pos + cfg.window + 1).min(sent.len());
                for (ctx_pos, &target) in sent.iter().enumerate().take(hi).skip(lo) {
                    if ctx_pos == pos {
                        continue;
                    }
                    let mut input = own[center].clone();
                    for b in &word_buckets[center] {
                        add_into(&mut input, &ngrams[b]);
                    }
                    let mut negs = Vec::with_capacity(cfg.negatives);
                    // negatives never hit the target or the center word
                    if vocab.len() > 2 {
                        while negs.len() < cfg.negatives {
                            let n = sample(&mut rng);
                            if n != target && n != center {
                                negs.push(n);
                            }
                        }
                    }
                    let neg_vecs: Vec<&[f64]> = negs.iter().map(|&n| outputs[n].as_slice()).collect();
                    let (loss, d_in, d_out) = sgns_loss_and_grads(&input, &outputs[target], &neg_vecs);
                    loss_sum += loss;
                    pairs += 1;
                    for (k, &o) in std::iter::once(&target).chain(&negs).enumerate() {
                        outputs[o].iter_mut().zip(&d_out[k]).for_each(|(u, g)| *u -= cfg.lr * g);
                    }
                    own[center].iter_mut().zip(&d_in).for_each(|(v, g)| *v -= cfg.lr * g);
                    for b in &word_buckets[center] {
                        let row = ngrams.get_mut(b).expect("bucket registered");
                        row.iter_mut().zip(&d_in).for_each(|(v, g)| *v -= cfg.lr * g);
                    }
                }
            }
        }
        if pairs > 0 {
            log::debug!("word epoch {epoch}: loss {:.6}", loss_sum / pairs as f64);
        }
    }

    let mut table = SubwordTable {
        dim,
        min_n: cfg.min_n,
        max_n: cfg.max_n,
        hash_buckets: cfg.hash_buckets,
        ngram_vectors: ngrams,
        own_vectors: vocab.iter().zip(own).map(|((w, _), v)| (w.to_string(), v)).collect(),
        word_vectors: BTreeMap::new(),
    };
    table.refresh_cache();
    Ok(table)
}
