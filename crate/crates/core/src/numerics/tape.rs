//! Reverse-mode differentiation over whole tensors.
//!
//! Values are computed eagerly as nodes are pushed, so graph construction can
//! branch on intermediate values (batch-hard mining picks its hardest pairs
//! that way). Nodes only ever reference earlier nodes; one reverse sweep
//! visits each reachable node exactly once.

use std::collections::BTreeMap;

use super::ops::{self, COSINE_EPS};
use super::Tensor;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Param(String),
    MatVec(Var, Var),
    Sigmoid(Var),
    Mul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Scale(Var, f64),
    AddScalar(Var),
    ScaleBy(Var, Var),
    Sum(Vec<Var>),
    Mean(Vec<Var>),
    SpatialMean(Var),
    ChannelScale(Var, Var),
    Dot(Var, Var),
    Cosine(Var, Var),
    CosineMatrix(Vec<Var>),
    RowMean(Var),
    ContrastiveWeights(Var),
    WeightedMean(Vec<Var>, Var),
    Pick(Var, usize),
    Relu(Var),
    Stack(Vec<Var>),
    CrossEntropy(Var, usize),
}

#[derive(Debug, Clone)]
struct Node {
    op: Op,
    value: Tensor,
}

/// Single-use recording of one forward computation.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Named tensors: learnable weights, or their gradients.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamStore {
    entries: Vec<(String, Tensor)>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Inserts or replaces `name`.
    pub fn insert(&mut self, name: impl Into<String>, value: Tensor) {
        let name = name.into();
        match self.entries.iter_mut().find(|(n, _)| *n == name) {
            Some(slot) => slot.1 = value,
            None => self.entries.push((name, value)),
        }
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.entries.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.entries.iter_mut().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    pub fn require(&self, name: &str) -> Result<&Tensor> {
        self.get(name)
            .ok_or_else(|| Error::Contract(format!("missing parameter `{name}`")))
    }

    pub fn contains(&self, name: &str) -> bool {
        self.get(name).is_some()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|(n, _)| n.as_str())
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.entries.iter().map(|(n, t)| (n.as_str(), t))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Tensor)> {
        self.entries.iter_mut().map(|(n, t)| (n.as_str(), t))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn num_scalars(&self) -> usize {
        self.entries.iter().map(|(_, t)| t.len()).sum()
    }

    /// Same names and shapes, all zero.
    pub fn zeros_like(&self) -> Self {
        Self {
            entries: self
                .entries
                .iter()
                .map(|(n, t)| (n.clone(), Tensor::zeros(t.shape())))
                .collect(),
        }
    }
}

/// Gradients of one scalar root with respect to every leaf of the tape.
#[derive(Debug, Clone)]
pub struct Gradients {
    leaves: BTreeMap<Var, Tensor>,
    params: ParamStore,
}

impl Gradients {
    /// Gradient for a leaf (constant or parameter). Zero if the root does not
    /// depend on it.
    pub fn wrt(&self, var: Var) -> Option<&Tensor> {
        self.leaves.get(&var)
    }

    /// Gradients of all named parameters, keyed like the store they came from.
    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn into_params(self) -> ParamStore {
        self.params
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    /// Value of a single-element node.
    pub fn scalar(&self, v: Var) -> f64 {
        self.nodes[v.0].value.data()[0]
    }

    fn push(&mut self, op: Op, value: Tensor) -> Var {
        self.nodes.push(Node { op, value });
        Var(self.nodes.len() - 1)
    }

    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(Op::Leaf, value)
    }

    /// Leaf whose gradient is reported under `name`.
    pub fn param(&mut self, name: impl Into<String>, value: Tensor) -> Var {
        self.push(Op::Param(name.into()), value)
    }

    /// Registers `name` from `store`.
    pub fn param_from(&mut self, store: &ParamStore, name: &str) -> Result<Var> {
        let value = store.require(name)?.clone();
        Ok(self.param(name, value))
    }

    pub fn matvec(&mut self, w: Var, x: Var) -> Result<Var> {
        let y = ops::matvec(self.value(w), self.value(x))?;
        Ok(self.push(Op::MatVec(w, x), y))
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let y = ops::sigmoid_map(self.value(x));
        self.push(Op::Sigmoid(x), y)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let y = self.value(a).zip_map(self.value(b), "mul", |x, y| x * y)?;
        Ok(self.push(Op::Mul(a, b), y))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let y = self.value(a).zip_map(self.value(b), "add", |x, y| x + y)?;
        Ok(self.push(Op::Add(a, b), y))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let y = self.value(a).zip_map(self.value(b), "sub", |x, y| x - y)?;
        Ok(self.push(Op::Sub(a, b), y))
    }

    pub fn scale(&mut self, a: Var, k: f64) -> Var {
        let y = self.value(a).scale(k);
        self.push(Op::Scale(a, k), y)
    }

    pub fn add_scalar(&mut self, a: Var, k: f64) -> Var {
        let y = self.value(a).map(|v| v + k);
        self.push(Op::AddScalar(a), y)
    }

    /// Vector times a single-element node.
    pub fn scale_by(&mut self, v: Var, s: Var) -> Result<Var> {
        let k = self
            .value(s)
            .item()
            .ok_or_else(|| Error::dim("scale_by", self.value(v).shape(), self.value(s).shape()))?;
        let y = self.value(v).scale(k);
        Ok(self.push(Op::ScaleBy(v, s), y))
    }

    pub fn sum(&mut self, xs: &[Var]) -> Result<Var> {
        let first = xs
            .first()
            .ok_or_else(|| Error::Precondition("sum over an empty list".into()))?;
        let mut acc = self.value(*first).clone();
        for x in &xs[1..] {
            let v = self.value(*x);
            if v.shape() != acc.shape() {
                return Err(Error::dim("sum", acc.shape(), v.shape()));
            }
            acc.add_assign(v);
        }
        Ok(self.push(Op::Sum(xs.to_vec()), acc))
    }

    /// Mean over a list, with the same canonical summation as
    /// [`ops::temporal_mean`].
    pub fn mean(&mut self, xs: &[Var]) -> Result<Var> {
        let values: Vec<Tensor> = xs.iter().map(|x| self.value(*x).clone()).collect();
        let y = ops::temporal_mean(&values)?;
        Ok(self.push(Op::Mean(xs.to_vec()), y))
    }

    pub fn spatial_mean(&mut self, map: Var) -> Result<Var> {
        let y = ops::spatial_mean(self.value(map))?;
        Ok(self.push(Op::SpatialMean(map), y))
    }

    /// `C×H×W` map times per-channel weights.
    pub fn channel_scale(&mut self, map: Var, weights: Var) -> Result<Var> {
        let y = channel_scale(self.value(map), self.value(weights))?;
        Ok(self.push(Op::ChannelScale(map, weights), y))
    }

    pub fn dot(&mut self, a: Var, b: Var) -> Result<Var> {
        let y = self.value(a).dot(self.value(b))?;
        Ok(self.push(Op::Dot(a, b), Tensor::scalar(y)))
    }

    pub fn cosine(&mut self, a: Var, b: Var) -> Result<Var> {
        let y = ops::cosine(self.value(a), self.value(b))?;
        Ok(self.push(Op::Cosine(a, b), Tensor::scalar(y)))
    }

    /// `T×T` matrix of pairwise cosines with an exact unit diagonal.
    pub fn cosine_matrix(&mut self, xs: &[Var]) -> Result<Var> {
        let values: Vec<&Tensor> = xs.iter().map(|x| self.value(*x)).collect();
        let y = cosine_matrix(&values)?;
        Ok(self.push(Op::CosineMatrix(xs.to_vec()), y))
    }

    pub fn row_mean(&mut self, m: Var) -> Result<Var> {
        let y = row_mean(self.value(m))?;
        Ok(self.push(Op::RowMean(m), y))
    }

    /// `w_t = s_t (2 − mean of the other scores)`.
    pub fn contrastive_weights(&mut self, s: Var) -> Result<Var> {
        let y = contrastive_weights(self.value(s).data())?;
        Ok(self.push(Op::ContrastiveWeights(s), Tensor::vector(y)))
    }

    /// `(1/T) Σ w_t f_t`.
    pub fn weighted_mean(&mut self, xs: &[Var], w: Var) -> Result<Var> {
        let values: Vec<&Tensor> = xs.iter().map(|x| self.value(*x)).collect();
        let y = weighted_mean(&values, self.value(w).data())?;
        Ok(self.push(Op::WeightedMean(xs.to_vec(), w), y))
    }

    /// Element `index` of the flattened value, as a scalar node.
    pub fn pick(&mut self, x: Var, index: usize) -> Result<Var> {
        let v = self.value(x);
        let y = *v
            .data()
            .get(index)
            .ok_or_else(|| Error::Precondition(format!("pick index {index} out of {}", v.len())))?;
        Ok(self.push(Op::Pick(x, index), Tensor::scalar(y)))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let y = self.value(x).map(|v| v.max(0.0));
        self.push(Op::Relu(x), y)
    }

    /// Vector of single-element nodes.
    pub fn stack(&mut self, xs: &[Var]) -> Result<Var> {
        let data = xs
            .iter()
            .map(|x| {
                let v = self.value(*x);
                v.item().ok_or_else(|| Error::dim("stack", &[1], v.shape()))
            })
            .collect::<Result<Vec<f64>>>()?;
        if data.is_empty() {
            return Err(Error::Precondition("stack of zero scalars".into()));
        }
        Ok(self.push(Op::Stack(xs.to_vec()), Tensor::vector(data)))
    }

    /// Softmax cross-entropy of `logits` against class `target`.
    pub fn cross_entropy(&mut self, logits: Var, target: usize) -> Result<Var> {
        let z = self.value(logits);
        if target >= z.len() {
            return Err(Error::Precondition(format!(
                "target class {target} out of {} logits",
                z.len()
            )));
        }
        let y = log_sum_exp(z.data()) - z.data()[target];
        Ok(self.push(Op::CrossEntropy(logits, target), Tensor::scalar(y)))
    }

    /// Gradient of a scalar `root` with respect to every leaf.
    pub fn backward(&self, root: Var) -> Result<Gradients> {
        let root_value = &self.nodes[root.0].value;
        if root_value.len() != 1 {
            return Err(Error::Contract(format!(
                "backward needs a scalar root, got shape {:?}",
                root_value.shape()
            )));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; root.0 + 1];
        grads[root.0] = Some(vec![1.0]);

        for idx in (0..=root.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            match &node.op {
                Op::Leaf | Op::Param(_) => {
                    grads[idx] = Some(g);
                }
                op => self.propagate(op, &node.value, &g, &mut grads),
            }
        }

        let mut leaves = BTreeMap::new();
        let mut params = ParamStore::new();
        for (idx, node) in self.nodes.iter().enumerate() {
            let (Op::Leaf | Op::Param(_)) = &node.op else { continue };
            let shape = node.value.shape().to_vec();
            let grad = match grads.get_mut(idx).and_then(Option::take) {
                Some(g) => Tensor::new(shape, g)?,
                None => Tensor::zeros(&shape),
            };
            if let Op::Param(name) = &node.op {
                match params.get_mut(name) {
                    Some(existing) => existing.add_assign(&grad),
                    None => params.insert(name.clone(), grad.clone()),
                }
            }
            leaves.insert(Var(idx), grad);
        }
        Ok(Gradients { leaves, params })
    }

    fn propagate(&self, op: &Op, out: &Tensor, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let val = |v: &Var| self.nodes[v.0].value.data();
        match op {
            Op::Leaf | Op::Param(_) => unreachable!(),
            Op::MatVec(w, x) => {
                let wt = &self.nodes[w.0].value;
                let xv = val(x);
                let cols = xv.len();
                let slot = accum(grads, *w, wt.len());
                for (i, &gi) in g.iter().enumerate() {
                    if gi != 0.0 {
                        for (s, &xj) in slot[i * cols..(i + 1) * cols].iter_mut().zip(xv) {
                            *s += gi * xj;
                        }
                    }
                }
                let gx = ops::matvec_transposed(wt, g);
                add_into(accum(grads, *x, cols), &gx);
            }
            Op::Sigmoid(x) => {
                let y = out.data();
                let slot = accum(grads, *x, y.len());
                for ((s, &gi), &yi) in slot.iter_mut().zip(g).zip(y) {
                    *s += gi * yi * (1.0 - yi);
                }
            }
            Op::Mul(a, b) => {
                let (av, bv) = (val(a).to_vec(), val(b).to_vec());
                let sa = accum(grads, *a, av.len());
                for ((s, &gi), &bi) in sa.iter_mut().zip(g).zip(&bv) {
                    *s += gi * bi;
                }
                let sb = accum(grads, *b, bv.len());
                for ((s, &gi), &ai) in sb.iter_mut().zip(g).zip(&av) {
                    *s += gi * ai;
                }
            }
            Op::Add(a, b) => {
                add_into(accum(grads, *a, g.len()), g);
                add_into(accum(grads, *b, g.len()), g);
            }
            Op::Sub(a, b) => {
                add_into(accum(grads, *a, g.len()), g);
                let sb = accum(grads, *b, g.len());
                for (s, &gi) in sb.iter_mut().zip(g) {
                    *s -= gi;
                }
            }
            Op::Scale(a, k) => {
                let sa = accum(grads, *a, g.len());
                for (s, &gi) in sa.iter_mut().zip(g) {
                    *s += k * gi;
                }
            }
            Op::AddScalar(a) => add_into(accum(grads, *a, g.len()), g),
            Op::ScaleBy(v, s) => {
                let k = val(s)[0];
                let vv = val(v);
                let gs: f64 = g.iter().zip(vv).map(|(a, b)| a * b).sum();
                let sv = accum(grads, *v, g.len());
                for (slot, &gi) in sv.iter_mut().zip(g) {
                    *slot += k * gi;
                }
                accum(grads, *s, 1)[0] += gs;
            }
            Op::Sum(xs) => {
                for x in xs {
                    add_into(accum(grads, *x, g.len()), g);
                }
            }
            Op::Mean(xs) => {
                let inv = 1.0 / xs.len() as f64;
                for x in xs {
                    let sx = accum(grads, *x, g.len());
                    for (s, &gi) in sx.iter_mut().zip(g) {
                        *s += gi * inv;
                    }
                }
            }
            Op::SpatialMean(map) => {
                let shape = self.nodes[map.0].value.shape();
                let area = shape[1] * shape[2];
                let inv = 1.0 / area as f64;
                let sm = accum(grads, *map, shape[0] * area);
                for (plane, &gc) in sm.chunks_exact_mut(area).zip(g) {
                    for s in plane {
                        *s += gc * inv;
                    }
                }
            }
            Op::ChannelScale(map, w) => {
                let m = val(map).to_vec();
                let wv = val(w).to_vec();
                let area = m.len() / wv.len();
                let sm = accum(grads, *map, m.len());
                for (c, (plane, gplane)) in sm.chunks_exact_mut(area).zip(g.chunks_exact(area)).enumerate() {
                    for (s, &gi) in plane.iter_mut().zip(gplane) {
                        *s += gi * wv[c];
                    }
                }
                let sw = accum(grads, *w, wv.len());
                for (c, (mplane, gplane)) in m.chunks_exact(area).zip(g.chunks_exact(area)).enumerate() {
                    sw[c] += mplane.iter().zip(gplane).map(|(a, b)| a * b).sum::<f64>();
                }
            }
            Op::Dot(a, b) => {
                let (av, bv) = (val(a).to_vec(), val(b).to_vec());
                let sa = accum(grads, *a, av.len());
                for (s, &bi) in sa.iter_mut().zip(&bv) {
                    *s += g[0] * bi;
                }
                let sb = accum(grads, *b, bv.len());
                for (s, &ai) in sb.iter_mut().zip(&av) {
                    *s += g[0] * ai;
                }
            }
            Op::Cosine(a, b) => {
                let (ga, gb) = cosine_grads(val(a), val(b), g[0]);
                add_into(accum(grads, *a, ga.len()), &ga);
                add_into(accum(grads, *b, gb.len()), &gb);
            }
            Op::CosineMatrix(xs) => {
                let t = xs.len();
                for i in 0..t {
                    for j in 0..t {
                        if i == j {
                            continue;
                        }
                        let gij = g[i * t + j];
                        if gij == 0.0 {
                            continue;
                        }
                        let (ga, gb) = cosine_grads(val(&xs[i]), val(&xs[j]), gij);
                        add_into(accum(grads, xs[i], ga.len()), &ga);
                        add_into(accum(grads, xs[j], gb.len()), &gb);
                    }
                }
            }
            Op::RowMean(m) => {
                let cols = self.nodes[m.0].value.shape()[1];
                let inv = 1.0 / cols as f64;
                let sm = accum(grads, *m, g.len() * cols);
                for (row, &gi) in sm.chunks_exact_mut(cols).zip(g) {
                    for s in row {
                        *s += gi * inv;
                    }
                }
            }
            Op::ContrastiveWeights(s) => {
                let sv = val(s);
                let t = sv.len();
                let others = 1.0 / (t - 1) as f64;
                let total: f64 = sv.iter().sum();
                // ∂w_t/∂s_t = 2 − mean(others), ∂w_t/∂s_i = −s_t/(T−1)
                let cross: f64 = g.iter().zip(sv).map(|(gt, st)| gt * st).sum::<f64>() * others;
                let updates: Vec<f64> = (0..t)
                    .map(|i| {
                        let own = g[i] * (2.0 - (total - sv[i]) * others);
                        own - (cross - g[i] * sv[i] * others)
                    })
                    .collect();
                add_into(accum(grads, *s, t), &updates);
            }
            Op::WeightedMean(xs, w) => {
                let inv = 1.0 / xs.len() as f64;
                let wv = val(w).to_vec();
                let mut gw = vec![0.0; wv.len()];
                for (t, x) in xs.iter().enumerate() {
                    let xv = val(x);
                    gw[t] = inv * xv.iter().zip(g).map(|(a, b)| a * b).sum::<f64>();
                    let sx = accum(grads, *x, g.len());
                    for (s, &gi) in sx.iter_mut().zip(g) {
                        *s += inv * wv[t] * gi;
                    }
                }
                add_into(accum(grads, *w, gw.len()), &gw);
            }
            Op::Pick(x, index) => {
                let n = self.nodes[x.0].value.len();
                accum(grads, *x, n)[*index] += g[0];
            }
            Op::Relu(x) => {
                let xv = val(x).to_vec();
                let sx = accum(grads, *x, xv.len());
                for ((s, &gi), &xi) in sx.iter_mut().zip(g).zip(&xv) {
                    if xi > 0.0 {
                        *s += gi;
                    }
                }
            }
            Op::Stack(xs) => {
                for (x, &gi) in xs.iter().zip(g) {
                    accum(grads, *x, 1)[0] += gi;
                }
            }
            Op::CrossEntropy(logits, target) => {
                let z = val(logits).to_vec();
                let lse = log_sum_exp(&z);
                let sz = accum(grads, *logits, z.len());
                for (k, (s, &zk)) in sz.iter_mut().zip(&z).enumerate() {
                    let p = (zk - lse).exp();
                    let onehot = if k == *target { 1.0 } else { 0.0 };
                    *s += g[0] * (p - onehot);
                }
            }
        }
    }
}

fn accum(grads: &mut [Option<Vec<f64>>], v: Var, len: usize) -> &mut Vec<f64> {
    grads[v.0].get_or_insert_with(|| vec![0.0; len])
}

fn add_into(slot: &mut [f64], g: &[f64]) {
    for (s, &gi) in slot.iter_mut().zip(g) {
        *s += gi;
    }
}

fn cosine_grads(a: &[f64], b: &[f64], g: f64) -> (Vec<f64>, Vec<f64>) {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na2: f64 = a.iter().map(|x| x * x).sum();
    let nb2: f64 = b.iter().map(|x| x * x).sum();
    let (na, nb) = (na2.sqrt(), nb2.sqrt());
    let raw = dot / (na * nb);
    if !(-1.0..=1.0).contains(&raw) {
        // clamped: locally constant
        return (vec![0.0; a.len()], vec![0.0; b.len()]);
    }
    let inv = 1.0 / (na * nb);
    let ga = a.iter().zip(b).map(|(&ai, &bi)| g * (bi * inv - raw * ai / na2)).collect();
    let gb = a.iter().zip(b).map(|(&ai, &bi)| g * (ai * inv - raw * bi / nb2)).collect();
    (ga, gb)
}

pub(crate) fn log_sum_exp(z: &[f64]) -> f64 {
    let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    m + z.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
}

pub(crate) fn channel_scale(map: &Tensor, weights: &Tensor) -> Result<Tensor> {
    let &[c, h, w] = map.shape() else {
        return Err(Error::dim("channel_scale", map.shape(), weights.shape()));
    };
    if weights.rank() != 1 || weights.len() != c {
        return Err(Error::dim("channel_scale", map.shape(), weights.shape()));
    }
    let area = h * w;
    let mut out = map.clone();
    for (plane, &k) in out.data_mut().chunks_exact_mut(area).zip(weights.data()) {
        for v in plane {
            *v *= k;
        }
    }
    Ok(out)
}

pub(crate) fn cosine_matrix(xs: &[&Tensor]) -> Result<Tensor> {
    let t = xs.len();
    if t == 0 {
        return Err(Error::Precondition("similarity matrix of zero frames".into()));
    }
    for (i, x) in xs.iter().enumerate() {
        if x.len() != xs[0].len() {
            return Err(Error::dim("cosine_matrix", xs[0].shape(), x.shape()));
        }
        if x.norm() < COSINE_EPS {
            return Err(Error::Degenerate(format!(
                "frame {i} embeds to a vector with norm below {COSINE_EPS}"
            )));
        }
    }
    let mut data = vec![0.0; t * t];
    for i in 0..t {
        data[i * t + i] = 1.0;
        for j in (i + 1)..t {
            let c = ops::cosine(xs[i], xs[j])?;
            data[i * t + j] = c;
            data[j * t + i] = c;
        }
    }
    Tensor::matrix(t, t, data)
}

pub(crate) fn row_mean(m: &Tensor) -> Result<Tensor> {
    let &[rows, cols] = m.shape() else {
        return Err(Error::Precondition(format!("row mean of shape {:?}", m.shape())));
    };
    let mut buf = vec![0.0; cols];
    let data = m
        .data()
        .chunks_exact(cols)
        .map(|row| {
            buf.copy_from_slice(row);
            ops::canonical_sum(&mut buf) / cols as f64
        })
        .collect::<Vec<f64>>();
    debug_assert_eq!(data.len(), rows);
    Ok(Tensor::vector(data))
}

pub(crate) fn contrastive_weights(s: &[f64]) -> Result<Vec<f64>> {
    let t = s.len();
    if t < 2 {
        return Err(Error::Contract(format!(
            "contrastive weights need at least two frames, got {t}"
        )));
    }
    let mut sorted = s.to_vec();
    let total = ops::canonical_sum(&mut sorted);
    let others = (t - 1) as f64;
    Ok(s.iter().map(|&st| st * (2.0 - (total - st) / others)).collect())
}

pub(crate) fn weighted_mean(xs: &[&Tensor], w: &[f64]) -> Result<Tensor> {
    if xs.is_empty() {
        return Err(Error::Precondition("aggregate of zero frames".into()));
    }
    if xs.len() != w.len() {
        return Err(Error::dim("aggregate", &[xs.len()], &[w.len()]));
    }
    let d = xs[0].len();
    let mut column = vec![0.0; xs.len()];
    let inv = 1.0 / xs.len() as f64;
    let mut out = Vec::with_capacity(d);
    for k in 0..d {
        for ((slot, x), &wt) in column.iter_mut().zip(xs).zip(w) {
            if x.len() != d {
                return Err(Error::dim("aggregate", xs[0].shape(), x.shape()));
            }
            *slot = wt * x.data()[k];
        }
        out.push(ops::canonical_sum(&mut column) * inv);
    }
    Tensor::new(xs[0].shape().to_vec(), out)
}
