use super::{NeuralError, Result};

pub fn log_sum_exp(logits: &[f64]) -> f64 {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    max + logits.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|x| (x - max).exp()).collect();
    let z: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / z).collect()
}

pub fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let lse = log_sum_exp(logits);
    logits.iter().map(|x| x - lse).collect()
}

/// `-log softmax(logits)[target]`, stabilised by max subtraction.
pub fn softmax_cross_entropy(logits: &[f64], target: usize) -> Result<f64> {
    if target >= logits.len() {
        return Err(NeuralError::Index { index: target, len: logits.len() });
    }
    Ok(log_sum_exp(logits) - logits[target])
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn uniform_logits_give_log_k() {
        for k in [1usize, 2, 7, 50] {
            let loss = softmax_cross_entropy(&vec![0.3; k], k - 1).unwrap();
            assert!((loss - (k as f64).ln()).abs() < 1e-12);
        }
    }

    #[test]
    fn shift_invariance_and_range() {
        let logits = [1.0, -2.0, 0.5];
        let shifted: Vec<f64> = logits.iter().map(|x| x + 1000.0).collect();
        let a = softmax_cross_entropy(&logits, 2).unwrap();
        let b = softmax_cross_entropy(&shifted, 2).unwrap();
        assert!((a - b).abs() < 1e-12);
        assert!(matches!(softmax_cross_entropy(&logits, 3), Err(NeuralError::Index { .. })));
    }

    // Reference evaluates log(Σ exp) with compensated summation of exactly
    // representable terms and no max shift.
    fn reference_ce(logits: &[f64], target: usize) -> f64 {
        let (mut sum, mut comp) = (0.0f64, 0.0f64);
        for &x in logits {
            let y = x.exp() - comp;
            let t = sum + y;
            comp = (t - sum) - y;
            sum = t;
        }
        sum.ln() - logits[target]
    }

    #[test]
    fn matches_reference_on_random_instances() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..200 {
            let k = rng.gen_range(2..20);
            let logits: Vec<f64> = (0..k).map(|_| rng.gen_range(-5.0..5.0)).collect();
            let t = rng.gen_range(0..k);
            let got = softmax_cross_entropy(&logits, t).unwrap();
            assert!((got - reference_ce(&logits, t)).abs() < 1e-10);
        }
    }
}
