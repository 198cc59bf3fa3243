//! Additive (Bahdanau) attention: `s_i = vᵀ tanh(W_q q + W_k k_i)`.

use rand::Rng;

use super::{Graph, NeuralError, NodeId, ParamId, ParamStore, Result};

#[derive(Debug, Clone)]
pub struct AttentionParams {
    pub w_query: ParamId,
    pub w_key: ParamId,
    pub v: ParamId,
    pub inner: usize,
}

impl AttentionParams {
    pub fn new<R: Rng>(
        params: &mut ParamStore,
        name: &str,
        query_dim: usize,
        key_dim: usize,
        inner: usize,
        init_scale: f64,
        rng: &mut R,
    ) -> Result<Self> {
        Ok(AttentionParams {
            w_query: params.add_uniform(format!("{name}.w_query"), &[inner, query_dim], init_scale, rng)?,
            w_key: params.add_uniform(format!("{name}.w_key"), &[inner, key_dim], init_scale, rng)?,
            v: params.add_uniform(format!("{name}.v"), &[inner], init_scale, rng)?,
            inner,
        })
    }

    /// Projects a key matrix `[n × key_dim]` once per source sequence.
    pub fn project_keys(&self, g: &mut Graph, keys: NodeId) -> Result<NodeId> {
        let wk = g.param(self.w_key);
        g.rows_matvec(keys, wk)
    }

    /// Attends over pre-projected keys; returns `(context, weights)`.
    pub fn attend(
        &self,
        g: &mut Graph,
        query: NodeId,
        projected_keys: NodeId,
        values: NodeId,
    ) -> Result<(NodeId, NodeId)> {
        let wq = g.param(self.w_query);
        let v = g.param(self.v);
        let q = g.matvec(wq, query)?;
        let scores = g.additive_scores(projected_keys, q, v)?;
        let weights = g.softmax(scores);
        let context = g.weighted_rows(weights, values)?;
        Ok((context, weights))
    }
}

/// Full attention over `keys` and `values` given as sequences of vectors.
pub fn additive_attention(
    g: &mut Graph,
    params: &AttentionParams,
    query: NodeId,
    keys: &[NodeId],
    values: &[NodeId],
) -> Result<(NodeId, NodeId)> {
    if keys.is_empty() {
        return Err(NeuralError::EmptyKeys);
    }
    if keys.len() != values.len() {
        return Err(NeuralError::Shape(format!("{} keys but {} values", keys.len(), values.len())));
    }
    let k = g.stack_rows(keys)?;
    let vmat = g.stack_rows(values)?;
    let pk = params.project_keys(g, k)?;
    params.attend(g, query, pk, vmat)
}
