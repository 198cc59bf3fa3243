use super::{GenerationModel, Memory, ModelError, Result, Vocab};
use crate::kg::ConceptId;
use crate::neural::{log_softmax, Dropout, Graph, NodeId, StackState};

struct Hypothesis {
    tokens: Vec<usize>,
    log_prob: f64,
    state: StackState,
    prev: NodeId,
}

/// Index of the largest entry; the lowest index wins ties.
fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate() {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

impl GenerationModel {
    /// Decodes from `<sos>` until `<eos>` or `max_len` tokens. Width 1 is
    /// greedy argmax; wider beams return the completed hypothesis with the
    /// highest cumulative log-probability (no length normalisation).
    pub fn generate(
        &self,
        source_tokens: &[String],
        source_concepts: &[ConceptId],
        max_len: usize,
        beam_width: usize,
    ) -> Result<Vec<String>> {
        if beam_width == 0 {
            return Err(ModelError::Config("beam width must be at least 1".into()));
        }
        if max_len == 0 {
            return Err(ModelError::Config("max length must be at least 1".into()));
        }
        let mut g = Graph::new(self.params());
        let mut dropout = Dropout::eval();
        let refs: Vec<&ConceptId> = source_concepts.iter().collect();
        let mem = self.encode(&mut g, source_tokens, &refs, &mut dropout)?;
        let ids = if beam_width == 1 {
            self.greedy(&mut g, &mem, max_len)?
        } else {
            self.beam(&mut g, &mem, max_len, beam_width)?
        };
        Ok(ids.into_iter().map(|i| self.target_vocab().token(i).to_string()).collect())
    }

    fn greedy(&self, g: &mut Graph, mem: &Memory, max_len: usize) -> Result<Vec<usize>> {
        let mut dropout = Dropout::eval();
        let mut state = mem.init.clone();
        let mut prev = self.start_input(g);
        let mut out = Vec::new();
        while out.len() < max_len {
            let (next, logits) = self.decode_step(g, mem, &state, prev, &mut dropout)?;
            let y = argmax(g.value(logits).data());
            if y == Vocab::EOS_ID {
                break;
            }
            out.push(y);
            state = next;
            prev = self.word_input(g, self.target_vocab().token(y))?;
        }
        Ok(out)
    }

    fn beam(&self, g: &mut Graph, mem: &Memory, max_len: usize, width: usize) -> Result<Vec<usize>> {
        let mut dropout = Dropout::eval();
        let start = self.start_input(g);
        let mut live = vec![Hypothesis { tokens: Vec::new(), log_prob: 0.0, state: mem.init.clone(), prev: start }];
        let mut done: Vec<(Vec<usize>, f64)> = Vec::new();
        for _ in 0..=max_len {
            if live.is_empty() {
                break;
            }
            let mut candidates: Vec<(usize, usize, f64)> = Vec::new();
            let mut stepped = Vec::with_capacity(live.len());
            for (h, hyp) in live.iter().enumerate() {
                let (next, logits) = self.decode_step(g, mem, &hyp.state, hyp.prev, &mut dropout)?;
                let lp = log_softmax(g.value(logits).data());
                for (y, l) in lp.iter().enumerate() {
                    candidates.push((h, y, hyp.log_prob + l));
                }
                stepped.push(next);
            }
            // full-length hypotheses may only end
            candidates.retain(|&(h, y, _)| y == Vocab::EOS_ID || live[h].tokens.len() < max_len);
            candidates.sort_by(|a, b| b.2.total_cmp(&a.2).then(a.0.cmp(&b.0)).then(a.1.cmp(&b.1)));
            let mut next_live = Vec::new();
            for (h, y, lp) in candidates.into_iter().take(width) {
                let hyp = &live[h];
                if y == Vocab::EOS_ID {
                    done.push((hyp.tokens.clone(), lp));
                } else {
                    let mut tokens = hyp.tokens.clone();
                    tokens.push(y);
                    let prev = self.word_input(g, self.target_vocab().token(y))?;
                    next_live.push(Hypothesis { tokens, log_prob: lp, state: stepped[h].clone(), prev });
                }
            }
            live = next_live;
            let best_done = done.iter().map(|d| d.1).fold(f64::NEG_INFINITY, f64::max);
            // log-probabilities only fall, so no live hypothesis can overtake
            if live.iter().all(|h| h.log_prob <= best_done) {
                break;
            }
        }
        let best = done.into_iter().fold(None::<(Vec<usize>, f64)>, |acc, d| match acc {
            Some(a) if a.1 >= d.1 => Some(a),
            _ => Some(d),
        });
        match best {
            Some((tokens, _)) => Ok(tokens),
            None => Ok(live.into_iter().next().map(|h| h.tokens).unwrap_or_default()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::super::tests::{example, model};
    use super::super::{train_model, ModelVariant, TrainRunConfig};
    use super::*;

    /// Re-decodes by recomputing the full prefix at every step.
    fn argmax_oracle(m: &GenerationModel, src: &[String], concepts: &[ConceptId], max_len: usize) -> Vec<String> {
        let mut prefix: Vec<usize> = Vec::new();
        while prefix.len() < max_len {
            let lp = m.step_log_probs(src, concepts, &prefix).unwrap();
            let mut best = 0;
            for i in 1..lp.len() {
                if lp[i] > lp[best] {
                    best = i;
                }
            }
            if best == Vocab::EOS_ID {
                break;
            }
            prefix.push(best);
        }
        prefix.iter().map(|&i| m.target_vocab().token(i).to_string()).collect()
    }

    #[test]
    fn greedy_matches_step_by_step_argmax() {
        for v in ModelVariant::ALL {
            let m = model(v);
            let ex = example();
            let got = m.generate(&ex.source_tokens, &ex.source_concepts, 6, 1).unwrap();
            assert_eq!(got, argmax_oracle(&m, &ex.source_tokens, &ex.source_concepts, 6), "{v}");
            assert!(m.generate(&ex.source_tokens, &ex.source_concepts, 1, 1).unwrap().len() <= 1);
            assert!(m.generate(&ex.source_tokens, &ex.source_concepts, 1, 3).unwrap().len() <= 1);
        }
    }

    #[test]
    fn argument_errors() {
        let m = model(ModelVariant::Cs);
        let ex = example();
        assert!(matches!(m.generate(&[], &ex.source_concepts, 3, 1), Err(ModelError::EmptySource)));
        assert!(matches!(m.generate(&ex.source_tokens, &[], 3, 0), Err(ModelError::Config(_))));
        assert!(matches!(m.generate(&ex.source_tokens, &[], 0, 1), Err(ModelError::Config(_))));
    }

    /// Scores every sequence of up to `max_len` tokens ending in `<eos>`.
    fn exhaustive_best(m: &GenerationModel, src: &[String], concepts: &[ConceptId], max_len: usize) -> (Vec<usize>, f64) {
        let v = m.target_vocab().len();
        let mut best = (Vec::new(), f64::NEG_INFINITY);
        let mut frontier: Vec<(Vec<usize>, f64)> = vec![(Vec::new(), 0.0)];
        for _ in 0..=max_len {
            let mut next = Vec::new();
            for (prefix, lp) in &frontier {
                let dist = m.step_log_probs(src, concepts, prefix).unwrap();
                let end = lp + dist[Vocab::EOS_ID];
                if end > best.1 {
                    best = (prefix.clone(), end);
                }
                if prefix.len() < max_len {
                    for y in (0..v).filter(|&y| y != Vocab::EOS_ID) {
                        let mut p = prefix.clone();
                        p.push(y);
                        next.push((p, lp + dist[y]));
                    }
                }
            }
            frontier = next;
        }
        best
    }

    #[test]
    fn wide_beam_finds_the_exhaustive_optimum_on_short_outputs() {
        let m = model(ModelVariant::Baseline);
        let ex = example();
        let (tokens, _) = exhaustive_best(&m, &ex.source_tokens, &ex.source_concepts, 2);
        let wide = m.generate(&ex.source_tokens, &ex.source_concepts, 2, 64).unwrap();
        let expect: Vec<String> = tokens.iter().map(|&i| m.target_vocab().token(i).to_string()).collect();
        assert_eq!(wide, expect);
    }

    #[test]
    fn memorised_pair_is_reproduced() {
        let mut m = model(ModelVariant::Csd);
        let ex = example();
        let cfg = TrainRunConfig { epochs: 60, lr: 0.02, batch_size: 1, seed: 1, ..Default::default() };
        train_model(&mut m, std::slice::from_ref(&ex), &cfg).unwrap();
        let out = m.generate(&ex.source_tokens, &ex.source_concepts, 10, 1).unwrap();
        assert_eq!(out, ex.target_tokens);
        assert_eq!(m.generate(&ex.source_tokens, &ex.source_concepts, 10, 3).unwrap(), ex.target_tokens);
    }
}
