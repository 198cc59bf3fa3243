//! LSTM cells, unidirectional stacks and multi-layer bidirectional encoders.
//!
//! Each cell owns one fused weight matrix `W[4H × (in + H)]` over the
//! concatenated `[x; h_prev]` and a bias `b[4H]`. Gate order is input,
//! forget, candidate, output.

use rand::Rng;

use super::{Dropout, Graph, NeuralError, NodeId, ParamId, ParamStore, Result};

#[derive(Debug, Clone)]
pub struct LstmCell {
    pub w: ParamId,
    pub b: ParamId,
    pub input: usize,
    pub hidden: usize,
}

impl LstmCell {
    pub fn new<R: Rng>(
        params: &mut ParamStore,
        name: &str,
        input: usize,
        hidden: usize,
        init_scale: f64,
        rng: &mut R,
    ) -> Result<Self> {
        let w = params.add_uniform(format!("{name}.w"), &[4 * hidden, input + hidden], init_scale, rng)?;
        let b = params.add_uniform(format!("{name}.b"), &[4 * hidden], init_scale, rng)?;
        Ok(LstmCell { w, b, input, hidden })
    }
}

/// One gated update; returns `(h, c)`.
pub fn lstm_step(
    g: &mut Graph,
    cell: &LstmCell,
    x: NodeId,
    h_prev: NodeId,
    c_prev: NodeId,
) -> Result<(NodeId, NodeId)> {
    let hsz = cell.hidden;
    if g.value(x).len() != cell.input || g.value(h_prev).len() != hsz || g.value(c_prev).len() != hsz {
        return Err(NeuralError::Shape(format!(
            "lstm step expects x[{}], h[{hsz}], c[{hsz}]; got {}, {}, {}",
            cell.input,
            g.value(x).len(),
            g.value(h_prev).len(),
            g.value(c_prev).len()
        )));
    }
    let w = g.param(cell.w);
    let b = g.param(cell.b);
    let xh = g.concat(&[x, h_prev])?;
    let z = g.matvec(w, xh)?;
    let z = g.add(z, b)?;
    let zi = g.slice(z, 0, hsz)?;
    let zf = g.slice(z, hsz, hsz)?;
    let zg = g.slice(z, 2 * hsz, hsz)?;
    let zo = g.slice(z, 3 * hsz, hsz)?;
    let i = g.sigmoid(zi);
    let f = g.sigmoid(zf);
    let cand = g.tanh(zg);
    let o = g.sigmoid(zo);
    let keep = g.mul(f, c_prev)?;
    let write = g.mul(i, cand)?;
    let c = g.add(keep, write)?;
    let tc = g.tanh(c);
    let h = g.mul(o, tc)?;
    Ok((h, c))
}

/// Stack of unidirectional cells, used by the decoder.
#[derive(Debug, Clone)]
pub struct LstmStack {
    pub cells: Vec<LstmCell>,
}

#[derive(Debug, Clone)]
pub struct StackState {
    pub h: Vec<NodeId>,
    pub c: Vec<NodeId>,
}

impl StackState {
    pub fn top(&self) -> NodeId {
        *self.h.last().expect("non-empty stack")
    }
}

impl LstmStack {
    pub fn new<R: Rng>(
        params: &mut ParamStore,
        name: &str,
        input: usize,
        hidden: usize,
        layers: usize,
        init_scale: f64,
        rng: &mut R,
    ) -> Result<Self> {
        let cells = (0..layers)
            .map(|l| {
                let inp = if l == 0 { input } else { hidden };
                LstmCell::new(params, &format!("{name}.l{l}"), inp, hidden, init_scale, rng)
            })
            .collect::<Result<_>>()?;
        Ok(LstmStack { cells })
    }

    pub fn hidden(&self) -> usize {
        self.cells[0].hidden
    }

    pub fn layers(&self) -> usize {
        self.cells.len()
    }

    /// Advances every layer by one step; dropout sits between layers.
    pub fn step(
        &self,
        g: &mut Graph,
        x: NodeId,
        state: &StackState,
        dropout: &mut Dropout,
    ) -> Result<StackState> {
        let mut input = x;
        let mut next = StackState { h: Vec::new(), c: Vec::new() };
        for (l, cell) in self.cells.iter().enumerate() {
            let (h, c) = lstm_step(g, cell, input, state.h[l], state.c[l])?;
            next.h.push(h);
            next.c.push(c);
            input = if l + 1 < self.cells.len() { dropout.apply(g, h)? } else { h };
        }
        Ok(next)
    }
}

#[derive(Debug, Clone)]
pub struct BiLstm {
    /// `(forward, backward)` cells per layer.
    pub layers: Vec<(LstmCell, LstmCell)>,
}

#[derive(Debug, Clone)]
pub struct BiEncoding {
    /// Per position `[h_fwd; h_bwd]` of the top layer.
    pub outputs: Vec<NodeId>,
    /// Forward state after the last position, top layer.
    pub forward_final: NodeId,
    /// Backward state after the first position, top layer.
    pub backward_final: NodeId,
}

impl BiLstm {
    pub fn new<R: Rng>(
        params: &mut ParamStore,
        name: &str,
        input: usize,
        hidden: usize,
        layers: usize,
        init_scale: f64,
        rng: &mut R,
    ) -> Result<Self> {
        let mut out = Vec::with_capacity(layers);
        for l in 0..layers {
            let inp = if l == 0 { input } else { 2 * hidden };
            let fwd = LstmCell::new(params, &format!("{name}.l{l}.fwd"), inp, hidden, init_scale, rng)?;
            let bwd = LstmCell::new(params, &format!("{name}.l{l}.bwd"), inp, hidden, init_scale, rng)?;
            out.push((fwd, bwd));
        }
        Ok(BiLstm { layers: out })
    }

    pub fn hidden(&self) -> usize {
        self.layers[0].0.hidden
    }

    pub fn input(&self) -> usize {
        self.layers[0].0.input
    }

    pub fn output_dim(&self) -> usize {
        2 * self.hidden()
    }
}

fn run_direction(g: &mut Graph, cell: &LstmCell, inputs: &[NodeId], reverse: bool) -> Result<Vec<NodeId>> {
    let zeros = vec![0.0; cell.hidden];
    let mut h = g.vector(zeros.clone());
    let mut c = g.vector(zeros);
    let mut out = vec![h; inputs.len()];
    let order: Vec<usize> = if reverse {
        (0..inputs.len()).rev().collect()
    } else {
        (0..inputs.len()).collect()
    };
    for t in order {
        let (nh, nc) = lstm_step(g, cell, inputs[t], h, c)?;
        out[t] = nh;
        h = nh;
        c = nc;
    }
    Ok(out)
}

/// Runs the stacked bidirectional encoder over `inputs`.
pub fn bilstm_encode(
    g: &mut Graph,
    encoder: &BiLstm,
    inputs: &[NodeId],
    dropout: &mut Dropout,
) -> Result<BiEncoding> {
    if inputs.is_empty() {
        return Err(NeuralError::EmptySequence);
    }
    let mut layer_input = inputs.to_vec();
    let mut fwd = Vec::new();
    let mut bwd = Vec::new();
    for (l, (fcell, bcell)) in encoder.layers.iter().enumerate() {
        fwd = run_direction(g, fcell, &layer_input, false)?;
        bwd = run_direction(g, bcell, &layer_input, true)?;
        let mut next = Vec::with_capacity(inputs.len());
        for t in 0..inputs.len() {
            let joined = g.concat(&[fwd[t], bwd[t]])?;
            next.push(if l + 1 < encoder.layers.len() { dropout.apply(g, joined)? } else { joined });
        }
        layer_input = next;
    }
    Ok(BiEncoding {
        outputs: layer_input,
        forward_final: *fwd.last().expect("non-empty"),
        backward_final: bwd[0],
    })
}
