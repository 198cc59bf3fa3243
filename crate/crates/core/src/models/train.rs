use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{GenerationModel, ModelError, Result};
use crate::corpus::Example;
use crate::neural::{clip_gradients, Adam, Dropout, Graph, ParamGrads};

/// Optimisation settings; teacher forcing is always on.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainRunConfig {
    pub epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub seed: u64,
    pub keep_prob: f64,
    pub clip: f64,
}

impl Default for TrainRunConfig {
    fn default() -> Self {
        TrainRunConfig { epochs: 10, lr: 1e-3, batch_size: 16, seed: 0, keep_prob: 0.9, clip: 1.0 }
    }
}

impl TrainRunConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(ModelError::Config("epochs must be at least 1".into()));
        }
        if self.batch_size == 0 {
            return Err(ModelError::Config("batch size must be at least 1".into()));
        }
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return Err(ModelError::Config(format!("learning rate {}", self.lr)));
        }
        if !(self.keep_prob > 0.0 && self.keep_prob <= 1.0) {
            return Err(ModelError::Config(format!("keep probability {}", self.keep_prob)));
        }
        if !(self.clip.is_finite() && self.clip > 0.0) {
            return Err(ModelError::Config(format!("clip bound {}", self.clip)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    pub mean_token_loss: f64,
    pub tokens: usize,
}

fn mix(seed: u64, a: u64, b: u64) -> u64 {
    // splitmix64 finaliser over the combined key
    let mut z = seed ^ a.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ b.wrapping_mul(0xC2B2_AE3D_27D4_EB4F);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// One pass over `examples` in a seeded order. Each batch minimises the
/// mean per-token cross-entropy; gradients are clipped elementwise before
/// the Adam step. Per-example graphs run in parallel and are reduced in
/// batch order.
pub fn train_epoch(
    model: &mut GenerationModel,
    opt: &mut Adam,
    examples: &[Example],
    cfg: &TrainRunConfig,
    epoch: usize,
) -> Result<EpochStats> {
    cfg.validate()?;
    let mut order: Vec<usize> = (0..examples.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(mix(cfg.seed, epoch as u64, 0)));
    let mut loss_sum = 0.0;
    let mut tokens = 0usize;
    for batch in order.chunks(cfg.batch_size) {
        let model_ref = &*model;
        let results: Vec<Result<(f64, usize, ParamGrads)>> = batch
            .par_iter()
            .map(|&i| {
                let mut dropout = Dropout::train(cfg.keep_prob, mix(cfg.seed, epoch as u64, i as u64 + 1))?;
                let mut g = Graph::new(model_ref.params());
                let (loss, n) = model_ref.loss(&mut g, &examples[i], true, &mut dropout)?;
                let grads = g.backward(loss)?;
                Ok((g.value(loss).item(), n, g.param_grads(&grads)))
            })
            .collect();
        let mut total = ParamGrads::zeros_like(model.params());
        let mut batch_tokens = 0usize;
        for r in results {
            let (l, n, grads) = r?;
            loss_sum += l;
            batch_tokens += n;
            total.merge(&grads);
        }
        tokens += batch_tokens;
        total.scale(1.0 / batch_tokens as f64);
        clip_gradients(&mut total, -cfg.clip, cfg.clip);
        opt.step(model.params_mut(), &total)?;
    }
    let mean = if tokens == 0 { 0.0 } else { loss_sum / tokens as f64 };
    log::debug!("{} epoch {epoch}: mean token loss {mean:.6}", model.variant());
    Ok(EpochStats { epoch, mean_token_loss: mean, tokens })
}

/// Runs `cfg.epochs` epochs with a fresh Adam state.
pub fn train_model(model: &mut GenerationModel, examples: &[Example], cfg: &TrainRunConfig) -> Result<Vec<EpochStats>> {
    cfg.validate()?;
    let mut opt = Adam::new(model.params(), cfg.lr);
    (0..cfg.epochs).map(|e| train_epoch(model, &mut opt, examples, cfg, e)).collect()
}

#[cfg(test)]
mod tests {
    use super::super::tests::{example, model};
    use super::super::ModelVariant;
    use super::*;

    #[test]
    fn zero_epochs_rejected() {
        let mut m = model(ModelVariant::Baseline);
        let cfg = TrainRunConfig { epochs: 0, ..Default::default() };
        assert!(matches!(train_model(&mut m, &[example()], &cfg), Err(ModelError::Config(_))));
        assert!(TrainRunConfig { keep_prob: 0.0, ..Default::default() }.validate().is_err());
    }

    #[test]
    fn same_seed_same_trajectory() {
        let cfg = TrainRunConfig { epochs: 3, lr: 0.01, batch_size: 2, seed: 5, ..Default::default() };
        let data = vec![example(), Example { id: "b".into(), target_tokens: vec!["is".into()], ..example() }];
        let mut a = model(ModelVariant::HcsdT);
        let mut b = model(ModelVariant::HcsdT);
        let la = train_model(&mut a, &data, &cfg).unwrap();
        let lb = train_model(&mut b, &data, &cfg).unwrap();
        assert_eq!(la, lb);
        assert_eq!(a.to_checkpoint(), b.to_checkpoint());
    }

    #[test]
    fn loss_decreases_on_repeated_example() {
        let mut m = model(ModelVariant::Csd);
        let cfg = TrainRunConfig { epochs: 30, lr: 0.02, batch_size: 1, ..Default::default() };
        let stats = train_model(&mut m, &[example()], &cfg).unwrap();
        assert!(stats.last().unwrap().mean_token_loss < stats[0].mean_token_loss);
    }
}
