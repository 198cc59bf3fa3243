use super::{NeuralError, ParamGrads, ParamStore, Result};

/// Clamps every gradient component into `[lo, hi]`.
pub fn clip_gradients(grads: &mut ParamGrads, lo: f64, hi: f64) {
    for g in grads.iter_mut() {
        for x in g.iter_mut() {
            *x = x.clamp(lo, hi);
        }
    }
}

/// Adam with bias-corrected moments. Parameters without a gradient are
/// treated as having a zero gradient.
#[derive(Debug, Clone)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(params: &ParamStore, lr: f64) -> Self {
        let zeros: Vec<Vec<f64>> = params.iter().map(|(_, _, t)| vec![0.0; t.len()]).collect();
        Adam { lr, beta1: 0.9, beta2: 0.999, eps: 1e-8, step: 0, m: zeros.clone(), v: zeros }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    pub fn step(&mut self, params: &mut ParamStore, grads: &ParamGrads) -> Result<()> {
        if grads.len() != params.len() || self.m.len() != params.len() {
            return Err(NeuralError::Shape(format!(
                "optimizer tracks {} params, store has {}, grads {}",
                self.m.len(),
                params.len(),
                grads.len()
            )));
        }
        self.step += 1;
        let t = self.step as i32;
        let (b1, b2) = (self.beta1, self.beta2);
        let c1 = 1.0 - b1.powi(t);
        let c2 = 1.0 - b2.powi(t);
        for id in params.ids().collect::<Vec<_>>() {
            let i = id.index();
            let value = params.get_mut(id).data_mut();
            if let Some(g) = grads.get(id) {
                if g.len() != value.len() {
                    return Err(NeuralError::Shape(format!("gradient size {} for {}", g.len(), value.len())));
                }
            }
            let (m, v) = (&mut self.m[i], &mut self.v[i]);
            let g = grads.get(id);
            for k in 0..value.len() {
                let gk = g.map_or(0.0, |g| g[k]);
                m[k] = b1 * m[k] + (1.0 - b1) * gk;
                v[k] = b2 * v[k] + (1.0 - b2) * gk * gk;
                let mh = m[k] / c1;
                let vh = v[k] / c2;
                value[k] -= self.lr * mh / (vh.sqrt() + self.eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neural::{ParamId, Tensor};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn store(values: Vec<f64>) -> (ParamStore, ParamId) {
        let mut p = ParamStore::new();
        let id = p.add("w", Tensor::vector(values)).unwrap();
        (p, id)
    }

    #[test]
    fn zero_gradient_leaves_params() {
        let (mut p, id) = store(vec![0.3, -0.4]);
        let before = p.clone();
        let mut adam = Adam::new(&p, 1e-3);
        let mut grads = ParamGrads::zeros_like(&p);
        grads.accumulate(id, &[0.0, 0.0]);
        for _ in 0..5 {
            adam.step(&mut p, &grads).unwrap();
        }
        assert_eq!(p, before);
    }

    // Scalar Adam written out term by term.
    fn scalar_adam(theta: f64, grads: &[f64], lr: f64) -> f64 {
        let (mut m, mut v, mut th) = (0.0, 0.0, theta);
        for (t, g) in grads.iter().enumerate() {
            let t = (t + 1) as i32;
            m = 0.9 * m + 0.1 * g;
            v = 0.999 * v + 0.001 * g * g;
            let mh = m / (1.0 - 0.9f64.powi(t));
            let vh = v / (1.0 - 0.999f64.powi(t));
            th -= lr * mh / (vh.sqrt() + 1e-8);
        }
        th
    }

    #[test]
    fn matches_scalar_reference() {
        let (mut p, id) = store(vec![0.5]);
        let mut adam = Adam::new(&p, 0.01);
        let seq = [0.3, -1.2, 0.05, 2.0];
        for g in seq {
            let mut grads = ParamGrads::zeros_like(&p);
            grads.accumulate(id, &[g]);
            adam.step(&mut p, &grads).unwrap();
        }
        assert!((p.get(id).data()[0] - scalar_adam(0.5, &seq, 0.01)).abs() < 1e-15);
        // first step moves by about lr against the gradient sign
        let (mut q, qid) = store(vec![0.0, 0.0]);
        let mut adam = Adam::new(&q, 0.01);
        let mut grads = ParamGrads::zeros_like(&q);
        grads.accumulate(qid, &[3.0, -0.2]);
        adam.step(&mut q, &grads).unwrap();
        let d = q.get(qid).data();
        assert!((d[0] + 0.01).abs() < 1e-9 && (d[1] - 0.01).abs() < 1e-9);
    }

    #[test]
    fn clipping() {
        let (p, id) = store(vec![0.0; 4]);
        let mut grads = ParamGrads::zeros_like(&p);
        grads.accumulate(id, &[2.5, -0.3, -7.0, 1.0]);
        clip_gradients(&mut grads, -1.0, 1.0);
        assert_eq!(grads.get(id).unwrap(), &[1.0, -0.3, -1.0, 1.0]);

        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let raw: Vec<f64> = (0..500).map(|_| rng.gen_range(-4.0..4.0)).collect();
        let (p, id) = store(vec![0.0; 500]);
        let mut grads = ParamGrads::zeros_like(&p);
        grads.accumulate(id, &raw);
        clip_gradients(&mut grads, -1.0, 1.0);
        for (c, r) in grads.get(id).unwrap().iter().zip(&raw) {
            assert_eq!(*c, r.clamp(-1.0, 1.0));
        }
        assert!(grads.max_abs() <= 1.0);
    }

    #[test]
    fn rejects_mismatched_store() {
        let (mut p, _) = store(vec![0.0]);
        let mut adam = Adam::new(&p, 0.1);
        p.add("extra", Tensor::vector(vec![1.0])).unwrap();
        let grads = ParamGrads::zeros_like(&p);
        assert!(adam.step(&mut p, &grads).is_err());
    }
}
