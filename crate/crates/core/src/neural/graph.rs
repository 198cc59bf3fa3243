//! Tape of recorded operations with reverse-mode gradients.
//!
//! Every operation appends a node holding its forward value. `backward`
//! walks the tape from the loss node down to the first node in exact
//! reverse recording order, accumulating gradients additively.

use std::collections::HashMap;

use super::{NeuralError, ParamGrads, ParamId, ParamStore, Result, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct NodeId(usize);

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Param,
    MatVec(NodeId, NodeId),
    RowsMatVec(NodeId, NodeId),
    Add(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Scale(NodeId, f64),
    Mask(NodeId, Vec<f64>),
    Sigmoid(NodeId),
    Tanh(NodeId),
    Concat(Vec<NodeId>),
    Slice(NodeId, usize),
    Row(NodeId, usize),
    StackRows(Vec<NodeId>),
    AdditiveScores { keys: NodeId, query: NodeId, v: NodeId },
    Softmax(NodeId),
    WeightedRows(NodeId, NodeId),
    CrossEntropy(NodeId, usize),
    Sum(Vec<NodeId>),
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
}

/// Gradients of one backward pass, indexed by node.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
}

impl Gradients {
    pub fn get(&self, id: NodeId) -> Option<&[f64]> {
        self.grads.get(id.0).and_then(|g| g.as_deref())
    }
}

pub struct Graph<'p> {
    params: &'p ParamStore,
    nodes: Vec<Node>,
    param_nodes: HashMap<ParamId, NodeId>,
}

fn shape_err<T>(msg: String) -> Result<T> {
    Err(NeuralError::Shape(msg))
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl<'p> Graph<'p> {
    pub fn new(params: &'p ParamStore) -> Self {
        Graph { params, nodes: Vec::new(), param_nodes: HashMap::new() }
    }

    pub fn params(&self) -> &'p ParamStore {
        self.params
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op) -> NodeId {
        debug_assert!(value.is_finite(), "non-finite value produced by {op:?}");
        self.nodes.push(Node { value, op });
        NodeId(self.nodes.len() - 1)
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].value
    }

    fn data(&self, id: NodeId) -> &[f64] {
        self.nodes[id.0].value.data()
    }

    pub fn constant(&mut self, value: Tensor) -> NodeId {
        self.push(value, Op::Leaf)
    }

    pub fn vector(&mut self, data: Vec<f64>) -> NodeId {
        self.constant(Tensor::vector(data))
    }

    /// Inserts a parameter leaf; repeated calls return the same node.
    pub fn param(&mut self, id: ParamId) -> NodeId {
        if let Some(&n) = self.param_nodes.get(&id) {
            return n;
        }
        let value = self.params.get(id).clone();
        let n = self.push(value, Op::Param);
        self.param_nodes.insert(id, n);
        n
    }

    /// `W[m×n] · x[n]`.
    pub fn matvec(&mut self, w: NodeId, x: NodeId) -> Result<NodeId> {
        let (wt, xt) = (self.value(w), self.value(x));
        if wt.shape().len() != 2 || wt.cols() != xt.len() {
            return shape_err(format!("matvec {:?} · {:?}", wt.shape(), xt.shape()));
        }
        let (m, n) = (wt.rows(), wt.cols());
        let (wd, xd) = (wt.data(), xt.data());
        let out: Vec<f64> = (0..m)
            .map(|i| wd[i * n..(i + 1) * n].iter().zip(xd).map(|(a, b)| a * b).sum())
            .collect();
        Ok(self.push(Tensor::vector(out), Op::MatVec(w, x)))
    }

    /// Maps every row of `m[n×d]` through `w[k×d]`, giving `[n×k]`.
    pub fn rows_matvec(&mut self, m: NodeId, w: NodeId) -> Result<NodeId> {
        let (mt, wt) = (self.value(m), self.value(w));
        if mt.shape().len() != 2 || wt.shape().len() != 2 || wt.cols() != mt.cols() {
            return shape_err(format!("rows_matvec {:?} by {:?}", mt.shape(), wt.shape()));
        }
        let (n, d, k) = (mt.rows(), mt.cols(), wt.rows());
        let (md, wd) = (mt.data(), wt.data());
        let mut out = vec![0.0; n * k];
        for i in 0..n {
            let row = &md[i * d..(i + 1) * d];
            for j in 0..k {
                out[i * k + j] = wd[j * d..(j + 1) * d].iter().zip(row).map(|(a, b)| a * b).sum();
            }
        }
        Ok(self.push(Tensor::matrix(n, k, out)?, Op::RowsMatVec(m, w)))
    }

    fn same_shape(&self, a: NodeId, b: NodeId, what: &str) -> Result<()> {
        if self.value(a).shape() != self.value(b).shape() {
            return shape_err(format!(
                "{what} {:?} vs {:?}",
                self.value(a).shape(),
                self.value(b).shape()
            ));
        }
        Ok(())
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.same_shape(a, b, "add")?;
        let out: Vec<f64> = self.data(a).iter().zip(self.data(b)).map(|(x, y)| x + y).collect();
        let shape = self.value(a).shape().to_vec();
        Ok(self.push(Tensor::new(shape, out)?, Op::Add(a, b)))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.same_shape(a, b, "mul")?;
        let out: Vec<f64> = self.data(a).iter().zip(self.data(b)).map(|(x, y)| x * y).collect();
        let shape = self.value(a).shape().to_vec();
        Ok(self.push(Tensor::new(shape, out)?, Op::Mul(a, b)))
    }

    pub fn scale(&mut self, a: NodeId, factor: f64) -> NodeId {
        let t = self.value(a);
        let out = t.data().iter().map(|x| x * factor).collect();
        let value = Tensor::new(t.shape().to_vec(), out).expect("same shape");
        self.push(value, Op::Scale(a, factor))
    }

    /// Elementwise product with a constant mask.
    pub fn mask(&mut self, a: NodeId, mask: Vec<f64>) -> Result<NodeId> {
        let t = self.value(a);
        if mask.len() != t.len() {
            return shape_err(format!("mask of {} over {:?}", mask.len(), t.shape()));
        }
        let out = t.data().iter().zip(&mask).map(|(x, m)| x * m).collect();
        let value = Tensor::new(t.shape().to_vec(), out)?;
        Ok(self.push(value, Op::Mask(a, mask)))
    }

    pub fn sigmoid(&mut self, a: NodeId) -> NodeId {
        let t = self.value(a);
        let out = t.data().iter().map(|&x| sigmoid(x)).collect();
        let value = Tensor::new(t.shape().to_vec(), out).expect("same shape");
        self.push(value, Op::Sigmoid(a))
    }

    pub fn tanh(&mut self, a: NodeId) -> NodeId {
        let t = self.value(a);
        let out = t.data().iter().map(|x| x.tanh()).collect();
        let value = Tensor::new(t.shape().to_vec(), out).expect("same shape");
        self.push(value, Op::Tanh(a))
    }

    /// Concatenates rank-1 values.
    pub fn concat(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        if parts.is_empty() {
            return shape_err("concat of nothing".into());
        }
        let mut out = Vec::new();
        for &p in parts {
            out.extend_from_slice(self.data(p));
        }
        Ok(self.push(Tensor::vector(out), Op::Concat(parts.to_vec())))
    }

    pub fn slice(&mut self, a: NodeId, start: usize, len: usize) -> Result<NodeId> {
        let d = self.data(a);
        if len == 0 || start + len > d.len() {
            return shape_err(format!("slice {start}..{} of {}", start + len, d.len()));
        }
        let out = d[start..start + len].to_vec();
        Ok(self.push(Tensor::vector(out), Op::Slice(a, start)))
    }

    /// Row `i` of a matrix as a vector.
    pub fn row(&mut self, m: NodeId, i: usize) -> Result<NodeId> {
        let t = self.value(m);
        if t.shape().len() != 2 || i >= t.rows() {
            return shape_err(format!("row {i} of {:?}", t.shape()));
        }
        let out = t.row(i).to_vec();
        Ok(self.push(Tensor::vector(out), Op::Row(m, i)))
    }

    /// Stacks equal-length vectors into a matrix, one per row.
    pub fn stack_rows(&mut self, rows: &[NodeId]) -> Result<NodeId> {
        let Some(&first) = rows.first() else {
            return shape_err("stack of nothing".into());
        };
        let d = self.value(first).len();
        let mut out = Vec::with_capacity(rows.len() * d);
        for &r in rows {
            if self.value(r).len() != d {
                return shape_err(format!("stack rows of {} and {}", d, self.value(r).len()));
            }
            out.extend_from_slice(self.data(r));
        }
        let value = Tensor::matrix(rows.len(), d, out)?;
        Ok(self.push(value, Op::StackRows(rows.to_vec())))
    }

    /// `s_i = Σ_j v_j · tanh(keys_ij + query_j)` for `keys[n×a]`.
    pub fn additive_scores(&mut self, keys: NodeId, query: NodeId, v: NodeId) -> Result<NodeId> {
        let (kt, qt, vt) = (self.value(keys), self.value(query), self.value(v));
        let a = kt.cols();
        if kt.shape().len() != 2 || qt.len() != a || vt.len() != a {
            return shape_err(format!(
                "additive scores keys {:?} query {:?} v {:?}",
                kt.shape(),
                qt.shape(),
                vt.shape()
            ));
        }
        let (qd, vd) = (qt.data(), vt.data());
        let out: Vec<f64> = (0..kt.rows())
            .map(|i| {
                kt.row(i)
                    .iter()
                    .zip(qd)
                    .zip(vd)
                    .map(|((k, q), w)| w * (k + q).tanh())
                    .sum()
            })
            .collect();
        Ok(self.push(Tensor::vector(out), Op::AdditiveScores { keys, query, v }))
    }

    pub fn softmax(&mut self, a: NodeId) -> NodeId {
        let out = super::loss::softmax(self.data(a));
        self.push(Tensor::vector(out), Op::Softmax(a))
    }

    /// `Σ_i w_i · m_i` over the rows of `m[n×d]`.
    pub fn weighted_rows(&mut self, w: NodeId, m: NodeId) -> Result<NodeId> {
        let (wt, mt) = (self.value(w), self.value(m));
        if mt.shape().len() != 2 || wt.len() != mt.rows() {
            return shape_err(format!("weighted rows {:?} over {:?}", wt.shape(), mt.shape()));
        }
        let d = mt.cols();
        let mut out = vec![0.0; d];
        for (i, &wi) in wt.data().iter().enumerate() {
            for (o, x) in out.iter_mut().zip(mt.row(i)) {
                *o += wi * x;
            }
        }
        Ok(self.push(Tensor::vector(out), Op::WeightedRows(w, m)))
    }

    /// `-log softmax(logits)[target]` as a scalar node.
    pub fn cross_entropy(&mut self, logits: NodeId, target: usize) -> Result<NodeId> {
        let loss = super::loss::softmax_cross_entropy(self.data(logits), target)?;
        Ok(self.push(Tensor::scalar(loss), Op::CrossEntropy(logits, target)))
    }

    /// Sum of scalar nodes.
    pub fn sum(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        if parts.is_empty() {
            return shape_err("sum of nothing".into());
        }
        let mut total = 0.0;
        for &p in parts {
            if self.value(p).len() != 1 {
                return shape_err(format!("sum over non-scalar {:?}", self.value(p).shape()));
            }
            total += self.value(p).item();
        }
        Ok(self.push(Tensor::scalar(total), Op::Sum(parts.to_vec())))
    }

    /// Reverse pass from a scalar node.
    pub fn backward(&self, loss: NodeId) -> Result<Gradients> {
        if self.value(loss).len() != 1 {
            return shape_err(format!("backward from non-scalar {:?}", self.value(loss).shape()));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(vec![1.0]);

        fn acc(grads: &mut [Option<Vec<f64>>], id: NodeId, len: usize) -> &mut Vec<f64> {
            grads[id.0].get_or_insert_with(|| vec![0.0; len])
        }

        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            match &node.op {
                Op::Leaf | Op::Param => {}
                Op::MatVec(w, x) => {
                    let wt = self.value(*w);
                    let (m, n) = (wt.rows(), wt.cols());
                    let xd = self.data(*x).to_vec();
                    {
                        let gw = acc(&mut grads, *w, m * n);
                        for i in 0..m {
                            let gi = g[i];
                            if gi != 0.0 {
                                for (gwj, xj) in gw[i * n..(i + 1) * n].iter_mut().zip(&xd) {
                                    *gwj += gi * xj;
                                }
                            }
                        }
                    }
                    let wd = wt.data();
                    let gx = acc(&mut grads, *x, n);
                    for i in 0..m {
                        let gi = g[i];
                        if gi != 0.0 {
                            for (gxj, wij) in gx.iter_mut().zip(&wd[i * n..(i + 1) * n]) {
                                *gxj += gi * wij;
                            }
                        }
                    }
                }
                Op::RowsMatVec(m, w) => {
                    let (mt, wt) = (self.value(*m), self.value(*w));
                    let (n, d, k) = (mt.rows(), mt.cols(), wt.rows());
                    {
                        let gw = acc(&mut grads, *w, k * d);
                        for i in 0..n {
                            let row = mt.row(i);
                            for j in 0..k {
                                let gij = g[i * k + j];
                                for (a, b) in gw[j * d..(j + 1) * d].iter_mut().zip(row) {
                                    *a += gij * b;
                                }
                            }
                        }
                    }
                    let gm = acc(&mut grads, *m, n * d);
                    for i in 0..n {
                        for j in 0..k {
                            let gij = g[i * k + j];
                            for (a, b) in gm[i * d..(i + 1) * d].iter_mut().zip(wt.row(j)) {
                                *a += gij * b;
                            }
                        }
                    }
                }
                Op::Add(a, b) => {
                    for &p in [a, b] {
                        acc(&mut grads, p, g.len()).iter_mut().zip(&g).for_each(|(x, y)| *x += y);
                    }
                }
                Op::Mul(a, b) => {
                    let (ad, bd) = (self.data(*a), self.data(*b));
                    let ga = acc(&mut grads, *a, g.len());
                    for ((x, gi), bi) in ga.iter_mut().zip(&g).zip(bd) {
                        *x += gi * bi;
                    }
                    let gb = acc(&mut grads, *b, g.len());
                    for ((x, gi), ai) in gb.iter_mut().zip(&g).zip(ad) {
                        *x += gi * ai;
                    }
                }
                Op::Scale(a, f) => {
                    acc(&mut grads, *a, g.len()).iter_mut().zip(&g).for_each(|(x, y)| *x += f * y);
                }
                Op::Mask(a, mask) => {
                    let ga = acc(&mut grads, *a, g.len());
                    for ((x, gi), m) in ga.iter_mut().zip(&g).zip(mask) {
                        *x += gi * m;
                    }
                }
                Op::Sigmoid(a) => {
                    let y = node.value.data();
                    let ga = acc(&mut grads, *a, g.len());
                    for ((x, gi), yi) in ga.iter_mut().zip(&g).zip(y) {
                        *x += gi * yi * (1.0 - yi);
                    }
                }
                Op::Tanh(a) => {
                    let y = node.value.data();
                    let ga = acc(&mut grads, *a, g.len());
                    for ((x, gi), yi) in ga.iter_mut().zip(&g).zip(y) {
                        *x += gi * (1.0 - yi * yi);
                    }
                }
                Op::Concat(parts) => {
                    let mut offset = 0;
                    for &p in parts {
                        let len = self.value(p).len();
                        let gp = acc(&mut grads, p, len);
                        for (x, y) in gp.iter_mut().zip(&g[offset..offset + len]) {
                            *x += y;
                        }
                        offset += len;
                    }
                }
                Op::Slice(a, start) => {
                    let len = self.value(*a).len();
                    let ga = acc(&mut grads, *a, len);
                    for (x, y) in ga[*start..*start + g.len()].iter_mut().zip(&g) {
                        *x += y;
                    }
                }
                Op::Row(m, i) => {
                    let mt = self.value(*m);
                    let c = mt.cols();
                    let gm = acc(&mut grads, *m, mt.len());
                    for (x, y) in gm[i * c..(i + 1) * c].iter_mut().zip(&g) {
                        *x += y;
                    }
                }
                Op::StackRows(rows) => {
                    let d = node.value.cols();
                    for (i, &r) in rows.iter().enumerate() {
                        let gr = acc(&mut grads, r, d);
                        for (x, y) in gr.iter_mut().zip(&g[i * d..(i + 1) * d]) {
                            *x += y;
                        }
                    }
                }
                Op::AdditiveScores { keys, query, v } => {
                    let (kt, qd, vd) = (self.value(*keys), self.data(*query), self.data(*v));
                    let (n, a) = (kt.rows(), kt.cols());
                    let mut gk = vec![0.0; n * a];
                    let mut gq = vec![0.0; a];
                    let mut gv = vec![0.0; a];
                    for i in 0..n {
                        let gi = g[i];
                        for j in 0..a {
                            let t = (kt.row(i)[j] + qd[j]).tanh();
                            gv[j] += gi * t;
                            let du = gi * vd[j] * (1.0 - t * t);
                            gk[i * a + j] += du;
                            gq[j] += du;
                        }
                    }
                    for (p, gp) in [(*keys, gk), (*query, gq), (*v, gv)] {
                        let slot = acc(&mut grads, p, gp.len());
                        slot.iter_mut().zip(&gp).for_each(|(x, y)| *x += y);
                    }
                }
                Op::Softmax(a) => {
                    let y = node.value.data();
                    let dot: f64 = g.iter().zip(y).map(|(gi, yi)| gi * yi).sum();
                    let ga = acc(&mut grads, *a, g.len());
                    for ((x, gi), yi) in ga.iter_mut().zip(&g).zip(y) {
                        *x += yi * (gi - dot);
                    }
                }
                Op::WeightedRows(w, m) => {
                    let (wd, mt) = (self.data(*w).to_vec(), self.value(*m));
                    let (n, d) = (mt.rows(), mt.cols());
                    let gw: Vec<f64> = (0..n)
                        .map(|i| mt.row(i).iter().zip(&g).map(|(a, b)| a * b).sum())
                        .collect();
                    acc(&mut grads, *w, n).iter_mut().zip(&gw).for_each(|(x, y)| *x += y);
                    let gm = acc(&mut grads, *m, n * d);
                    for (i, wi) in wd.iter().enumerate() {
                        for (x, gj) in gm[i * d..(i + 1) * d].iter_mut().zip(&g) {
                            *x += wi * gj;
                        }
                    }
                }
                Op::CrossEntropy(logits, target) => {
                    let p = super::loss::softmax(self.data(*logits));
                    let gl = acc(&mut grads, *logits, p.len());
                    for (k, (x, pk)) in gl.iter_mut().zip(&p).enumerate() {
                        let y = if k == *target { 1.0 } else { 0.0 };
                        *x += g[0] * (pk - y);
                    }
                }
                Op::Sum(parts) => {
                    for &p in parts {
                        acc(&mut grads, p, 1)[0] += g[0];
                    }
                }
            }
            grads[idx] = Some(g);
        }
        Ok(Gradients { grads })
    }

    /// Collects gradients of every parameter leaf in this graph.
    pub fn param_grads(&self, grads: &Gradients) -> ParamGrads {
        let mut out = ParamGrads::zeros_like(self.params);
        for (&pid, &node) in &self.param_nodes {
            if let Some(g) = grads.get(node) {
                out.accumulate(pid, g);
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neural::gradcheck::{check_inputs, random_vector};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn matvec_values() {
        let params = ParamStore::new();
        let mut g = Graph::new(&params);
        let w = g.constant(Tensor::matrix(2, 3, vec![1., 2., 3., 4., 5., 6.]).unwrap());
        let x = g.vector(vec![1., 0., -1.]);
        let y = g.matvec(w, x).unwrap();
        assert_eq!(g.value(y).data(), &[-2., -2.]);
        assert!(g.matvec(x, w).is_err());
    }

    #[test]
    fn ops_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..10 {
            let inputs = vec![
                Tensor::matrix(3, 4, random_vector(&mut rng, 12, 1.0)).unwrap(),
                Tensor::vector(random_vector(&mut rng, 4, 1.0)),
                Tensor::vector(random_vector(&mut rng, 3, 1.0)),
                Tensor::vector(random_vector(&mut rng, 3, 1.0)),
            ];
            let err = check_inputs(&inputs, 1e-4, |g, ids| {
                let h = g.matvec(ids[0], ids[1])?;
                let s = g.sigmoid(h);
                let t = g.tanh(ids[2]);
                let m = g.mul(s, t)?;
                let a = g.add(m, ids[3])?;
                let c = g.concat(&[a, ids[1]])?;
                let sl = g.slice(c, 1, 5)?;
                let sc = g.scale(sl, 0.7);
                let mk = g.mask(sc, vec![1.0, 0.0, 2.0, 1.0, 1.0])?;
                let sm = g.softmax(mk);
                let keys = g.stack_rows(&[ids[2], ids[3], t])?;
                let mixed = g.weighted_rows(ids[3], keys)?;
                let proj = g.rows_matvec(ids[0], ids[0]);
                let proj = proj?;
                let r = g.row(proj, 1)?;
                let sc2 = g.additive_scores(keys, mixed, mixed)?;
                let e1 = g.cross_entropy(sm, 2)?;
                let e2 = g.cross_entropy(sc2, 0)?;
                let e3 = g.cross_entropy(r, 1)?;
                g.sum(&[e1, e2, e3])
            })
            .unwrap();
            assert!(err < 1e-3, "relative error {err}");
        }
    }

    #[test]
    fn param_leaves_are_shared() {
        let mut params = ParamStore::new();
        let w = params.add("w", Tensor::vector(vec![2.0])).unwrap();
        let mut g = Graph::new(&params);
        let a = g.param(w);
        let b = g.param(w);
        assert_eq!(a, b);
        let y = g.mul(a, b).unwrap();
        let s = g.sum(&[y]).unwrap();
        let grads = g.backward(s).unwrap();
        assert_eq!(g.param_grads(&grads).get(w).unwrap(), &[4.0]);
    }
}
