use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Graph, NeuralError, NodeId, Result, Tensor};

/// Inverted dropout: kept entries are scaled by `1 / keep_prob`.
pub fn apply_dropout<R: Rng>(x: &Tensor, keep_prob: f64, rng: Option<&mut R>) -> Result<Tensor> {
    check_keep(keep_prob)?;
    let Some(rng) = rng else { return Ok(x.clone()) };
    if keep_prob == 1.0 {
        return Ok(x.clone());
    }
    let data = x
        .data()
        .iter()
        .map(|v| if rng.gen::<f64>() < keep_prob { v / keep_prob } else { 0.0 })
        .collect();
    Tensor::new(x.shape().to_vec(), data)
}

fn check_keep(keep_prob: f64) -> Result<()> {
    if keep_prob > 0.0 && keep_prob <= 1.0 {
        Ok(())
    } else {
        Err(NeuralError::ProbabilityRange(keep_prob))
    }
}

/// Dropout source for graph construction; `rng == None` is evaluation mode.
#[derive(Debug, Clone)]
pub struct Dropout {
    keep_prob: f64,
    rng: Option<ChaCha8Rng>,
}

impl Dropout {
    pub fn train(keep_prob: f64, seed: u64) -> Result<Self> {
        check_keep(keep_prob)?;
        Ok(Dropout { keep_prob, rng: Some(ChaCha8Rng::seed_from_u64(seed)) })
    }

    pub fn eval() -> Self {
        Dropout { keep_prob: 1.0, rng: None }
    }

    pub fn is_training(&self) -> bool {
        self.rng.is_some()
    }

    pub fn apply(&mut self, g: &mut Graph, x: NodeId) -> Result<NodeId> {
        let keep = self.keep_prob;
        match &mut self.rng {
            Some(rng) if keep < 1.0 => {
                let mask = (0..g.value(x).len())
                    .map(|_| if rng.gen::<f64>() < keep { 1.0 / keep } else { 0.0 })
                    .collect();
                g.mask(x, mask)
            }
            _ => Ok(x),
        }
    }
}
