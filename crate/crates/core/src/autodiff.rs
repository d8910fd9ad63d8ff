//! Minimal reverse-mode differentiation over dense `f64` matrices.
//!
//! A [`Tape`] records operations on [`Var`] handles while computing values
//! eagerly; [`Tape::backward`] walks the record in reverse and returns
//! gradients for every [`ParamStore`] entry that took part.

use std::collections::BTreeMap;
use std::ops::Range;

use ndarray::{s, Array2, Axis};
use rand::Rng;
use rand_distr::{Distribution, Normal, Uniform};
use serde::{Deserialize, Serialize};

pub type Matrix = Array2<f64>;

/// Model component that owns a parameter; freezing works per component.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Component {
    Encoder,
    MentionDetector,
    AntecedentLinker,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ParamId(pub usize);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Param {
    pub name: String,
    pub component: Component,
    pub value: Matrix,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ParamStore {
    params: Vec<Param>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: &str, component: Component, value: Matrix) -> ParamId {
        assert!(
            self.params.iter().all(|p| p.name != name),
            "duplicate parameter {name}"
        );
        self.params.push(Param {
            name: name.to_string(),
            component,
            value,
        });
        ParamId(self.params.len() - 1)
    }

    pub fn zeros(&mut self, name: &str, component: Component, rows: usize, cols: usize) -> ParamId {
        self.add(name, component, Matrix::zeros((rows, cols)))
    }

    /// Glorot-uniform initialization.
    pub fn glorot<R: Rng>(
        &mut self,
        name: &str,
        component: Component,
        rows: usize,
        cols: usize,
        rng: &mut R,
    ) -> ParamId {
        let limit = (6.0 / (rows + cols) as f64).sqrt();
        let dist = Uniform::new_inclusive(-limit, limit);
        let value = Matrix::from_shape_simple_fn((rows, cols), || dist.sample(rng));
        self.add(name, component, value)
    }

    pub fn normal<R: Rng>(
        &mut self,
        name: &str,
        component: Component,
        rows: usize,
        cols: usize,
        std: f64,
        rng: &mut R,
    ) -> ParamId {
        let dist = Normal::new(0.0, std).expect("finite std");
        let value = Matrix::from_shape_simple_fn((rows, cols), || dist.sample(rng));
        self.add(name, component, value)
    }

    pub fn get(&self, id: ParamId) -> &Param {
        &self.params[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Param {
        &mut self.params[id.0]
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.params.iter().position(|p| p.name == name).map(ParamId)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Param)> {
        self.params.iter().enumerate().map(|(i, p)| (ParamId(i), p))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (ParamId, &mut Param)> {
        self.params.iter_mut().enumerate().map(|(i, p)| (ParamId(i), p))
    }

    pub fn scalar_count(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }
}

/// Gradients keyed by parameter; absent entries are zero.
#[derive(Debug, Clone, Default)]
pub struct Grads {
    grads: BTreeMap<ParamId, Matrix>,
}

impl Grads {
    pub fn get(&self, id: ParamId) -> Option<&Matrix> {
        self.grads.get(&id)
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Matrix)> {
        self.grads.iter().map(|(k, v)| (*k, v))
    }

    pub fn accumulate(&mut self, id: ParamId, g: &Matrix) {
        match self.grads.get_mut(&id) {
            Some(acc) => *acc += g,
            None => {
                self.grads.insert(id, g.clone());
            }
        }
    }

    pub fn merge(&mut self, other: Grads) {
        for (id, g) in other.grads {
            match self.grads.get_mut(&id) {
                Some(acc) => *acc += &g,
                None => {
                    self.grads.insert(id, g);
                }
            }
        }
    }

    pub fn global_norm(&self) -> f64 {
        self.grads
            .values()
            .map(|g| g.iter().map(|x| x * x).sum::<f64>())
            .sum::<f64>()
            .sqrt()
    }

    pub fn scale(&mut self, c: f64) {
        for g in self.grads.values_mut() {
            g.mapv_inplace(|x| x * c);
        }
    }

    pub fn retain(&mut self, mut keep: impl FnMut(ParamId) -> bool) {
        self.grads.retain(|id, _| keep(*id));
    }

    pub fn is_empty(&self) -> bool {
        self.grads.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

/// One anaphor's antecedent list inside an [`Op::AntecedentNll`] score
/// column: candidate rows `pairs`, which of them are correct, and whether
/// the dummy antecedent (fixed score 0) is correct.
#[derive(Debug, Clone)]
pub struct AntecedentGroup {
    pub pairs: Range<usize>,
    pub correct: Vec<bool>,
    pub dummy_correct: bool,
}

#[derive(Debug, Clone)]
enum Op {
    Param(ParamId),
    Const,
    MatMul(Var, Var),
    MatMulBT(Var, Var),
    Add(Var, Var),
    AddRow(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Tanh(Var),
    SoftmaxRows(Var),
    GatherRows(Var, Vec<usize>),
    HCat(Vec<Var>),
    VCat(Vec<Var>),
    SpanAttend {
        tokens: Var,
        scores: Var,
        spans: Vec<(usize, usize)>,
    },
    BceWithLogits(Var, Vec<f64>),
    SoftmaxXentMean(Var, Vec<usize>),
    AntecedentNll(Var, Vec<AntecedentGroup>),
}

struct Node {
    value: Option<Matrix>,
    op: Op,
}

pub struct Tape<'p> {
    store: &'p ParamStore,
    nodes: Vec<Node>,
    param_vars: BTreeMap<ParamId, Var>,
}

fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn log_sum_exp(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let max = values.clone().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + values.map(|v| (v - max).exp()).sum::<f64>().ln()
}

fn softmax_slice(values: &[f64]) -> Vec<f64> {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = values.iter().map(|v| (v - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// Per-group antecedent probabilities: entry 0 is the dummy, then one per
/// candidate row.
pub fn antecedent_probabilities(scores: &[f64], groups: &[AntecedentGroup]) -> Vec<Vec<f64>> {
    groups
        .iter()
        .map(|g| {
            let mut all = Vec::with_capacity(g.pairs.len() + 1);
            all.push(0.0);
            all.extend_from_slice(&scores[g.pairs.clone()]);
            softmax_slice(&all)
        })
        .collect()
}

impl<'p> Tape<'p> {
    pub fn new(store: &'p ParamStore) -> Self {
        Tape {
            store,
            nodes: Vec::new(),
            param_vars: BTreeMap::new(),
        }
    }

    pub fn store(&self) -> &'p ParamStore {
        self.store
    }

    fn push(&mut self, value: Matrix, op: Op) -> Var {
        self.nodes.push(Node {
            value: Some(value),
            op,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Matrix {
        let node = &self.nodes[v.0];
        match (&node.value, &node.op) {
            (Some(m), _) => m,
            (None, Op::Param(id)) => &self.store.get(*id).value,
            _ => unreachable!("only parameter nodes borrow their value"),
        }
    }

    pub fn scalar(&self, v: Var) -> f64 {
        let m = self.value(v);
        debug_assert_eq!(m.dim(), (1, 1));
        m[[0, 0]]
    }

    /// Parameter leaf; repeated calls return the same node.
    pub fn param(&mut self, id: ParamId) -> Var {
        if let Some(v) = self.param_vars.get(&id) {
            return *v;
        }
        self.nodes.push(Node {
            value: None,
            op: Op::Param(id),
        });
        let v = Var(self.nodes.len() - 1);
        self.param_vars.insert(id, v);
        v
    }

    pub fn constant(&mut self, value: Matrix) -> Var {
        self.push(value, Op::Const)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).dot(self.value(b));
        self.push(v, Op::MatMul(a, b))
    }

    /// `a · bᵀ`
    pub fn matmul_bt(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).dot(&self.value(b).t());
        self.push(v, Op::MatMulBT(a, b))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a) + self.value(b);
        self.push(v, Op::Add(a, b))
    }

    /// Adds a `1 × n` row to every row of `a`.
    pub fn add_row(&mut self, a: Var, row: Var) -> Var {
        let r = self.value(row);
        assert_eq!(r.nrows(), 1, "add_row expects a single row");
        let v = self.value(a) + r;
        self.push(v, Op::AddRow(a, row))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a) * self.value(b);
        self.push(v, Op::Mul(a, b))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let v = self.value(a) * c;
        self.push(v, Op::Scale(a, c))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let v = self.value(a).mapv(f64::tanh);
        self.push(v, Op::Tanh(a))
    }

    pub fn softmax_rows(&mut self, a: Var) -> Var {
        let mut v = self.value(a).clone();
        for mut row in v.rows_mut() {
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            row.mapv_inplace(|x| (x - max).exp());
            let total = row.sum();
            row.mapv_inplace(|x| x / total);
        }
        self.push(v, Op::SoftmaxRows(a))
    }

    pub fn gather_rows(&mut self, a: Var, idx: Vec<usize>) -> Var {
        let v = self.value(a).select(Axis(0), &idx);
        self.push(v, Op::GatherRows(a, idx))
    }

    pub fn hcat(&mut self, parts: Vec<Var>) -> Var {
        let views: Vec<_> = parts.iter().map(|p| self.value(*p).view()).collect();
        let v = ndarray::concatenate(Axis(1), &views).expect("hcat row counts differ");
        self.push(v, Op::HCat(parts))
    }

    pub fn vcat(&mut self, parts: Vec<Var>) -> Var {
        let views: Vec<_> = parts.iter().map(|p| self.value(*p).view()).collect();
        let v = ndarray::concatenate(Axis(0), &views).expect("vcat column counts differ");
        self.push(v, Op::VCat(parts))
    }

    /// For each inclusive `(start, end)` range, the softmax(`scores`)-weighted
    /// sum of the `tokens` rows in that range.
    pub fn span_attend(&mut self, tokens: Var, scores: Var, spans: Vec<(usize, usize)>) -> Var {
        let h = self.value(tokens);
        let s = self.value(scores);
        let mut out = Matrix::zeros((spans.len(), h.ncols()));
        for (n, &(start, end)) in spans.iter().enumerate() {
            let logits: Vec<f64> = (start..=end).map(|t| s[[t, 0]]).collect();
            let alpha = softmax_slice(&logits);
            let mut row = out.row_mut(n);
            for (k, t) in (start..=end).enumerate() {
                row.scaled_add(alpha[k], &h.row(t));
            }
        }
        self.push(out, Op::SpanAttend { tokens, scores, spans })
    }

    /// Summed binary cross-entropy of sigmoid(`logits`) against `targets`.
    pub fn bce_with_logits(&mut self, logits: Var, targets: Vec<f64>) -> Var {
        let z = self.value(logits);
        assert_eq!(z.len(), targets.len());
        let loss: f64 = z
            .iter()
            .zip(&targets)
            .map(|(&z, &t)| softplus(z) - t * z)
            .sum();
        self.push(Matrix::from_elem((1, 1), loss), Op::BceWithLogits(logits, targets))
    }

    /// Mean over rows of softmax cross-entropy against target column ids.
    pub fn softmax_xent_mean(&mut self, logits: Var, targets: Vec<usize>) -> Var {
        let z = self.value(logits);
        assert_eq!(z.nrows(), targets.len());
        let mut total = 0.0;
        for (row, &t) in z.rows().into_iter().zip(&targets) {
            total += log_sum_exp(row.iter().copied()) - row[t];
        }
        let loss = if targets.is_empty() {
            0.0
        } else {
            total / targets.len() as f64
        };
        self.push(Matrix::from_elem((1, 1), loss), Op::SoftmaxXentMean(logits, targets))
    }

    /// Σ over groups of −log Σ_{correct} P, where P is the softmax over the
    /// dummy (score 0) and the group's rows of the `scores` column.
    pub fn antecedent_nll(&mut self, scores: Var, groups: Vec<AntecedentGroup>) -> Var {
        let s = self.value(scores);
        let col: Vec<f64> = s.iter().copied().collect();
        let mut loss = 0.0;
        for g in &groups {
            let all = std::iter::once(0.0).chain(col[g.pairs.clone()].iter().copied());
            let correct = std::iter::once(0.0)
                .filter(|_| g.dummy_correct)
                .chain(
                    col[g.pairs.clone()]
                        .iter()
                        .zip(&g.correct)
                        .filter(|(_, c)| **c)
                        .map(|(v, _)| *v),
                );
            loss += log_sum_exp(all) - log_sum_exp(correct);
        }
        self.push(Matrix::from_elem((1, 1), loss), Op::AntecedentNll(scores, groups))
    }

    /// Sum of several `1 × 1` values.
    pub fn sum_scalars(&mut self, parts: &[Var]) -> Var {
        let mut iter = parts.iter();
        let first = *iter.next().expect("at least one scalar");
        iter.fold(first, |acc, p| self.add(acc, *p))
    }

    pub fn backward(&self, root: Var) -> Grads {
        let mut grads: Vec<Option<Matrix>> = vec![None; root.0 + 1];
        grads[root.0] = Some(Matrix::ones(self.value(root).raw_dim()));
        let mut out = Grads::default();

        fn acc(grads: &mut [Option<Matrix>], v: Var, g: Matrix) {
            match &mut grads[v.0] {
                Some(existing) => *existing += &g,
                slot @ None => *slot = Some(g),
            }
        }

        for i in (0..=root.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            match &self.nodes[i].op {
                Op::Param(id) => out.accumulate(*id, &g),
                Op::Const => {}
                Op::MatMul(a, b) => {
                    let ga = g.dot(&self.value(*b).t());
                    let gb = self.value(*a).t().dot(&g);
                    acc(&mut grads, *a, ga);
                    acc(&mut grads, *b, gb);
                }
                Op::MatMulBT(a, b) => {
                    let ga = g.dot(self.value(*b));
                    let gb = g.t().dot(self.value(*a));
                    acc(&mut grads, *a, ga);
                    acc(&mut grads, *b, gb);
                }
                Op::Add(a, b) => {
                    acc(&mut grads, *b, g.clone());
                    acc(&mut grads, *a, g);
                }
                Op::AddRow(a, r) => {
                    let gr = g.sum_axis(Axis(0)).insert_axis(Axis(0));
                    acc(&mut grads, *r, gr);
                    acc(&mut grads, *a, g);
                }
                Op::Mul(a, b) => {
                    let ga = &g * self.value(*b);
                    let gb = &g * self.value(*a);
                    acc(&mut grads, *a, ga);
                    acc(&mut grads, *b, gb);
                }
                Op::Scale(a, c) => acc(&mut grads, *a, g * *c),
                Op::Tanh(a) => {
                    let y = self.nodes[i].value.as_ref().expect("tanh value");
                    let ga = &g * &y.mapv(|v| 1.0 - v * v);
                    acc(&mut grads, *a, ga);
                }
                Op::SoftmaxRows(a) => {
                    let y = self.nodes[i].value.as_ref().expect("softmax value");
                    let mut ga = Matrix::zeros(y.raw_dim());
                    for ((yr, gr), mut out_r) in y.rows().into_iter().zip(g.rows()).zip(ga.rows_mut()) {
                        let dot: f64 = yr.iter().zip(gr.iter()).map(|(a, b)| a * b).sum();
                        for ((o, &yv), &gv) in out_r.iter_mut().zip(yr.iter()).zip(gr.iter()) {
                            *o = yv * (gv - dot);
                        }
                    }
                    acc(&mut grads, *a, ga);
                }
                Op::GatherRows(a, idx) => {
                    let mut ga = Matrix::zeros(self.value(*a).raw_dim());
                    for (k, &r) in idx.iter().enumerate() {
                        let mut row = ga.row_mut(r);
                        row += &g.row(k);
                    }
                    acc(&mut grads, *a, ga);
                }
                Op::HCat(parts) => {
                    let mut col = 0;
                    for p in parts {
                        let w = self.value(*p).ncols();
                        acc(&mut grads, *p, g.slice(s![.., col..col + w]).to_owned());
                        col += w;
                    }
                }
                Op::VCat(parts) => {
                    let mut row = 0;
                    for p in parts {
                        let h = self.value(*p).nrows();
                        acc(&mut grads, *p, g.slice(s![row..row + h, ..]).to_owned());
                        row += h;
                    }
                }
                Op::SpanAttend { tokens, scores, spans } => {
                    let h = self.value(*tokens);
                    let sc = self.value(*scores);
                    let mut gh = Matrix::zeros(h.raw_dim());
                    let mut gs = Matrix::zeros(sc.raw_dim());
                    for (n, &(start, end)) in spans.iter().enumerate() {
                        let logits: Vec<f64> = (start..=end).map(|t| sc[[t, 0]]).collect();
                        let alpha = softmax_slice(&logits);
                        let gn = g.row(n);
                        let galpha: Vec<f64> = (start..=end)
                            .map(|t| gn.iter().zip(h.row(t).iter()).map(|(a, b)| a * b).sum())
                            .collect();
                        let mean: f64 = alpha.iter().zip(&galpha).map(|(a, b)| a * b).sum();
                        for (k, t) in (start..=end).enumerate() {
                            gh.row_mut(t).scaled_add(alpha[k], &gn);
                            gs[[t, 0]] += alpha[k] * (galpha[k] - mean);
                        }
                    }
                    acc(&mut grads, *tokens, gh);
                    acc(&mut grads, *scores, gs);
                }
                Op::BceWithLogits(z, targets) => {
                    let up = g[[0, 0]];
                    let zv = self.value(*z);
                    let mut gz = Matrix::zeros(zv.raw_dim());
                    for ((o, &zi), &t) in gz.iter_mut().zip(zv.iter()).zip(targets) {
                        *o = up * (sigmoid(zi) - t);
                    }
                    acc(&mut grads, *z, gz);
                }
                Op::SoftmaxXentMean(z, targets) => {
                    if targets.is_empty() {
                        continue;
                    }
                    let up = g[[0, 0]] / targets.len() as f64;
                    let zv = self.value(*z);
                    let mut gz = Matrix::zeros(zv.raw_dim());
                    for ((zr, mut gr), &t) in zv.rows().into_iter().zip(gz.rows_mut()).zip(targets) {
                        let p = softmax_slice(zr.as_slice().expect("contiguous row"));
                        for (o, pv) in gr.iter_mut().zip(p) {
                            *o = up * pv;
                        }
                        gr[t] -= up;
                    }
                    acc(&mut grads, *z, gz);
                }
                Op::AntecedentNll(sv, groups) => {
                    let up = g[[0, 0]];
                    let s = self.value(*sv);
                    let col: Vec<f64> = s.iter().copied().collect();
                    let mut gs = Matrix::zeros(s.raw_dim());
                    let probs = antecedent_probabilities(&col, groups);
                    for (grp, p_all) in groups.iter().zip(probs) {
                        let correct_mass: f64 = grp
                            .correct
                            .iter()
                            .zip(&p_all[1..])
                            .filter(|(c, _)| **c)
                            .map(|(_, p)| p)
                            .sum::<f64>()
                            + if grp.dummy_correct { p_all[0] } else { 0.0 };
                        for (k, row) in grp.pairs.clone().enumerate() {
                            let p_correct = if grp.correct[k] {
                                p_all[k + 1] / correct_mass
                            } else {
                                0.0
                            };
                            gs[[row, 0]] += up * (p_all[k + 1] - p_correct);
                        }
                    }
                    acc(&mut grads, *sv, gs);
                }
            }
        }
        out
    }
}


#[cfg(test)]
mod tests {
    use super::gradcheck::max_relative_error;
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn store_with(shapes: &[(&str, usize, usize)]) -> (ParamStore, Vec<ParamId>) {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let mut store = ParamStore::new();
        let ids = shapes
            .iter()
            .map(|(n, r, c)| store.normal(n, Component::Encoder, *r, *c, 0.7, &mut rng))
            .collect();
        (store, ids)
    }

    #[test]
    fn dense_ops_match_finite_differences() {
        let (mut store, ids) = store_with(&[("a", 4, 3), ("b", 3, 5), ("r", 1, 5), ("c", 4, 5)]);
        let err = max_relative_error(&mut store, &ids, |st| {
            let mut t = Tape::new(st);
            let (a, b, r, c) = (
                t.param(ParamId(0)),
                t.param(ParamId(1)),
                t.param(ParamId(2)),
                t.param(ParamId(3)),
            );
            let ab = t.matmul(a, b);
            let x = t.add_row(ab, r);
            let x = t.tanh(x);
            let y = t.mul(x, c);
            let y = t.scale(y, 0.5);
            let z = t.matmul_bt(y, c);
            let z = t.softmax_rows(z);
            let rows = t.gather_rows(z, vec![0, 2, 2, 3]);
            let both = t.hcat(vec![rows, rows]);
            let stacked = t.vcat(vec![both, both]);
            let loss = t.bce_with_logits(
                stacked,
                (0..stacked_len()).map(|i| (i % 2) as f64).collect(),
            );
            (t.scalar(loss), t.backward(loss))
        });
        assert!(err < 1e-6, "relative error {err}");
    }

    fn stacked_len() -> usize {
        2 * 4 * 8
    }

    #[test]
    fn span_attention_matches_finite_differences() {
        let (mut store, ids) = store_with(&[("h", 6, 3), ("s", 6, 1)]);
        let err = max_relative_error(&mut store, &ids, |st| {
            let mut t = Tape::new(st);
            let h = t.param(ParamId(0));
            let s = t.param(ParamId(1));
            let out = t.span_attend(h, s, vec![(0, 0), (1, 4), (2, 5), (5, 5)]);
            let out = t.tanh(out);
            let loss = t.softmax_xent_mean(out, vec![0, 2, 1, 1]);
            (t.scalar(loss), t.backward(loss))
        });
        assert!(err < 1e-6, "relative error {err}");
    }

    #[test]
    fn span_attention_weights_sum_to_one() {
        let (store, _) = store_with(&[("h", 5, 2), ("s", 5, 1)]);
        let mut t = Tape::new(&store);
        let s = t.param(ParamId(1));
        // With constant token vectors the attended vector equals that constant
        // only if the weights sum to one.
        let ones = t.constant(Matrix::ones((5, 2)));
        let out = t.span_attend(ones, s, vec![(0, 4), (1, 3), (2, 2)]);
        for v in t.value(out).iter() {
            assert!((v - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn antecedent_nll_matches_finite_differences() {
        let (mut store, ids) = store_with(&[("s", 6, 1)]);
        let groups = vec![
            AntecedentGroup {
                pairs: 0..0,
                correct: vec![],
                dummy_correct: true,
            },
            AntecedentGroup {
                pairs: 0..2,
                correct: vec![true, false],
                dummy_correct: false,
            },
            AntecedentGroup {
                pairs: 2..6,
                correct: vec![true, false, true, false],
                dummy_correct: false,
            },
        ];
        let err = max_relative_error(&mut store, &ids, |st| {
            let mut t = Tape::new(st);
            let s = t.param(ParamId(0));
            let loss = t.antecedent_nll(s, groups.clone());
            (t.scalar(loss), t.backward(loss))
        });
        assert!(err < 1e-6, "relative error {err}");
    }

    #[test]
    fn antecedent_nll_two_span_cluster_is_ln2() {
        let store = ParamStore::new();
        let mut t = Tape::new(&store);
        let s = t.constant(Matrix::zeros((1, 1)));
        let loss = t.antecedent_nll(
            s,
            vec![
                AntecedentGroup {
                    pairs: 0..0,
                    correct: vec![],
                    dummy_correct: true,
                },
                AntecedentGroup {
                    pairs: 0..1,
                    correct: vec![true],
                    dummy_correct: false,
                },
            ],
        );
        assert!((t.scalar(loss) - std::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn bce_at_half_probability_is_ln2_per_item() {
        let store = ParamStore::new();
        let mut t = Tape::new(&store);
        let z = t.constant(Matrix::zeros((7, 1)));
        let loss = t.bce_with_logits(z, vec![1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0]);
        assert!((t.scalar(loss) - 7.0 * std::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn shared_param_nodes_accumulate() {
        let (store, _) = store_with(&[("a", 2, 2)]);
        let mut t = Tape::new(&store);
        let a = t.param(ParamId(0));
        let a2 = t.param(ParamId(0));
        assert_eq!(a, a2);
        let y = t.add(a, a2);
        let loss = t.bce_with_logits(y, vec![0.0; 4]);
        let g = t.backward(loss);
        let expected = t.value(a).mapv(|v| 2.0 * sigmoid(2.0 * v));
        for (x, e) in g.get(ParamId(0)).unwrap().iter().zip(expected.iter()) {
            assert!((x - e).abs() < 1e-12);
        }
    }
}
