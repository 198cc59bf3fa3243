use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{EmbedError, EmbeddingTable};
use crate::kg::{ConceptGraph, ConceptId, RelationLabel};
use crate::neural::loss::{log_sum_exp, softmax};

#[derive(Debug, Clone, PartialEq)]
pub struct ConceptTrainConfig {
    pub dim: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub seed: u64,
    /// `None` trains the concept head with a full softmax; `Some(k)` uses
    /// `k` uniformly drawn negative objects with a logistic loss.
    pub negative_samples: Option<usize>,
}

impl Default for ConceptTrainConfig {
    fn default() -> Self {
        ConceptTrainConfig { dim: 80, epochs: 10, learning_rate: 0.05, seed: 0, negative_samples: None }
    }
}

impl ConceptTrainConfig {
    pub fn validate(&self) -> Result<(), EmbedError> {
        if self.dim == 0 {
            return Err(EmbedError::Config("dim must be at least 1".into()));
        }
        if self.epochs == 0 {
            return Err(EmbedError::Config("epochs must be at least 1".into()));
        }
        if !self.learning_rate.is_finite() || self.learning_rate <= 0.0 {
            return Err(EmbedError::Config("learning rate must be positive".into()));
        }
        Ok(())
    }
}

fn cross_entropy(logits: &[f64], target: usize) -> Result<f64, EmbedError> {
    if target >= logits.len() {
        return Err(EmbedError::Index { index: target, len: logits.len() });
    }
    Ok(log_sum_exp(logits) - logits[target])
}

/// Mean of the concept-head and relation-head cross-entropies.
pub fn joint_loss(
    concept_logits: &[f64],
    relation_logits: &[f64],
    target_concept: usize,
    target_relation: usize,
) -> Result<f64, EmbedError> {
    let lc = cross_entropy(concept_logits, target_concept)?;
    let lr = cross_entropy(relation_logits, target_relation)?;
    Ok(0.5 * (lc + lr))
}

/// Output layer: one row per observed object concept and per relation.
#[derive(Debug, Clone, PartialEq)]
pub struct JointPredictionHead {
    pub objects: Vec<ConceptId>,
    pub relations: Vec<RelationLabel>,
    /// `[objects × dim]`, row-major.
    pub hidden_to_concept: Vec<f64>,
    /// `[relations × dim]`, row-major.
    pub hidden_to_relation: Vec<f64>,
}

/// One-hot input, linear hidden layer, two softmax heads.
#[derive(Debug, Clone, PartialEq)]
pub struct JointModel {
    pub dim: usize,
    pub concepts: Vec<ConceptId>,
    /// `[concepts × dim]`; row `i` is the embedding of `concepts[i]`.
    pub input: Vec<f64>,
    pub head: JointPredictionHead,
}

#[derive(Debug, Clone, PartialEq)]
pub struct JointGrads {
    pub input_row: Vec<f64>,
    pub concept: Vec<f64>,
    pub relation: Vec<f64>,
}

/// Indexed training triplet: (input row, object row, relation row).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Sample {
    pub subject: usize,
    pub object: usize,
    pub relation: usize,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn ln_sigmoid(x: f64) -> f64 {
    // ln σ(x) = -ln(1 + e^{-x})
    if x >= 0.0 {
        -(-x).exp().ln_1p()
    } else {
        x - x.exp().ln_1p()
    }
}

impl JointModel {
    pub fn init(graph: &ConceptGraph, dim: usize, rng: &mut impl Rng) -> Self {
        let concepts: Vec<ConceptId> = graph.concept_vocab().iter().cloned().collect();
        let objects: Vec<ConceptId> = graph.objects().into_iter().cloned().collect();
        let relations: Vec<RelationLabel> = graph.relation_vocab().iter().cloned().collect();
        let scale = 0.5 / dim as f64;
        let input = (0..concepts.len() * dim).map(|_| rng.gen_range(-scale..scale)).collect();
        JointModel {
            dim,
            head: JointPredictionHead {
                hidden_to_concept: vec![0.0; objects.len() * dim],
                hidden_to_relation: vec![0.0; relations.len() * dim],
                objects,
                relations,
            },
            concepts,
            input,
        }
    }

    pub fn samples(&self, graph: &ConceptGraph) -> Vec<Sample> {
        let cidx: BTreeMap<&ConceptId, usize> = self.concepts.iter().enumerate().map(|(i, c)| (c, i)).collect();
        let oidx: BTreeMap<&ConceptId, usize> = self.head.objects.iter().enumerate().map(|(i, c)| (c, i)).collect();
        let ridx: BTreeMap<&RelationLabel, usize> =
            self.head.relations.iter().enumerate().map(|(i, r)| (r, i)).collect();
        graph
            .triplets()
            .map(|t| Sample { subject: cidx[&t.subject], object: oidx[&t.object], relation: ridx[&t.relation] })
            .collect()
    }

    pub fn hidden(&self, subject: usize) -> &[f64] {
        &self.input[subject * self.dim..(subject + 1) * self.dim]
    }

    fn rows(m: &[f64], dim: usize, h: &[f64]) -> Vec<f64> {
        m.chunks(dim).map(|row| dot(row, h)).collect()
    }

    pub fn logits(&self, subject: usize) -> (Vec<f64>, Vec<f64>) {
        let h = self.hidden(subject);
        (
            Self::rows(&self.head.hidden_to_concept, self.dim, h),
            Self::rows(&self.head.hidden_to_relation, self.dim, h),
        )
    }

    /// Joint loss with full softmax on both heads.
    pub fn loss(&self, s: Sample) -> Result<f64, EmbedError> {
        let (c, r) = self.logits(s.subject);
        joint_loss(&c, &r, s.object, s.relation)
    }

    /// Joint loss where the concept head uses the given negatives.
    pub fn sampled_loss(&self, s: Sample, negatives: &[usize]) -> f64 {
        let h = self.hidden(s.subject);
        let d = self.dim;
        let row = |j: usize| &self.head.hidden_to_concept[j * d..(j + 1) * d];
        let mut lc = -ln_sigmoid(dot(row(s.object), h));
        for &n in negatives {
            lc -= ln_sigmoid(-dot(row(n), h));
        }
        let (_, r) = self.logits(s.subject);
        0.5 * (lc + log_sum_exp(&r) - r[s.relation])
    }

    /// Loss and gradients for one sample. `negatives == None` means full softmax.
    pub fn loss_and_grads(&self, s: Sample, negatives: Option<&[usize]>) -> (f64, JointGrads) {
        let d = self.dim;
        let h = self.hidden(s.subject);
        let mut grads = JointGrads {
            input_row: vec![0.0; d],
            concept: vec![0.0; self.head.hidden_to_concept.len()],
            relation: vec![0.0; self.head.hidden_to_relation.len()],
        };
        let (clog, rlog) = self.logits(s.subject);
        let mut loss = 0.5 * (log_sum_exp(&rlog) - rlog[s.relation]);

        // concept head: dz_j per output row
        let mut dz_c: Vec<(usize, f64)> = Vec::new();
        match negatives {
            None => {
                loss += 0.5 * (log_sum_exp(&clog) - clog[s.object]);
                for (j, p) in softmax(&clog).into_iter().enumerate() {
                    let y = if j == s.object { 1.0 } else { 0.0 };
                    dz_c.push((j, 0.5 * (p - y)));
                }
            }
            Some(neg) => {
                let zp = clog[s.object];
                loss -= 0.5 * ln_sigmoid(zp);
                dz_c.push((s.object, 0.5 * (logistic(zp) - 1.0)));
                for &n in neg {
                    let zn = clog[n];
                    loss -= 0.5 * ln_sigmoid(-zn);
                    dz_c.push((n, 0.5 * logistic(zn)));
                }
            }
        }
        for (j, dz) in dz_c {
            let row = &self.head.hidden_to_concept[j * d..(j + 1) * d];
            for k in 0..d {
                grads.concept[j * d + k] += dz * h[k];
                grads.input_row[k] += dz * row[k];
            }
        }
        for (j, p) in softmax(&rlog).into_iter().enumerate() {
            let y = if j == s.relation { 1.0 } else { 0.0 };
            let dz = 0.5 * (p - y);
            let row = &self.head.hidden_to_relation[j * d..(j + 1) * d];
            for k in 0..d {
                grads.relation[j * d + k] += dz * h[k];
                grads.input_row[k] += dz * row[k];
            }
        }
        (loss, grads)
    }

    fn sgd(&mut self, subject: usize, grads: &JointGrads, lr: f64) {
        let d = self.dim;
        for (w, g) in self.input[subject * d..(subject + 1) * d].iter_mut().zip(&grads.input_row) {
            *w -= lr * g;
        }
        for (w, g) in self.head.hidden_to_concept.iter_mut().zip(&grads.concept) {
            *w -= lr * g;
        }
        for (w, g) in self.head.hidden_to_relation.iter_mut().zip(&grads.relation) {
            *w -= lr * g;
        }
    }

    pub fn table(&self) -> EmbeddingTable {
        let mut table = EmbeddingTable::new(self.dim);
        for (i, c) in self.concepts.iter().enumerate() {
            table.insert(c.clone(), self.hidden(i).to_vec()).expect("dims agree");
        }
        table
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainLog {
    /// Mean training loss of each epoch, measured before each update.
    pub epoch_losses: Vec<f64>,
}

/// Trains the joint concept/relation predictor with plain SGD and returns
/// the input-layer weights as the embedding table.
pub fn train_concept_embeddings(
    graph: &ConceptGraph,
    cfg: &ConceptTrainConfig,
) -> Result<(EmbeddingTable, TrainLog), EmbedError> {
    cfg.validate()?;
    if graph.is_empty() {
        return Err(EmbedError::EmptyGraph);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut model = JointModel::init(graph, cfg.dim, &mut rng);
    let mut samples = model.samples(graph);
    let n_obj = model.head.objects.len();
    let mut log = TrainLog::default();
    let mut negatives = Vec::new();
    for epoch in 0..cfg.epochs {
        samples.shuffle(&mut rng);
        let mut total = 0.0;
        for &s in &samples {
            let neg = match cfg.negative_samples {
                Some(k) if n_obj > 1 => {
                    negatives.clear();
                    while negatives.len() < k {
                        let j = rng.gen_range(0..n_obj);
                        if j != s.object {
                            negatives.push(j);
                        }
                    }
                    Some(negatives.as_slice())
                }
                Some(_) => Some(&[][..]),
                None => None,
            };
            let (loss, grads) = model.loss_and_grads(s, neg);
            total += loss;
            model.sgd(s.subject, &grads, cfg.learning_rate);
        }
        let mean = total / samples.len() as f64;
        log::debug!("concept epoch {epoch}: loss {mean:.6}");
        log.epoch_losses.push(mean);
    }
    Ok((model.table(), log))
}
