//! Reverse-mode automatic differentiation over dense matrices.
//!
//! A [`Tape`] records every operation of one forward evaluation. Calling
//! [`Tape::backward`] on a scalar result walks the record in reverse and
//! returns the gradient of every parameter leaf that was read.

use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use super::params::{ParamId, ParameterStore};
use super::tensor::{gemm, Tensor};
use super::NetError;
use crate::geom::Mat3;

static NEXT_TAPE: AtomicU64 = AtomicU64::new(1);

/// Handle to a value recorded on a tape.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var {
    tape: u64,
    idx: usize,
}

/// Row-sparse linear map: output row `i` is `sum_j w_ij * input_row_j`.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseRows {
    offsets: Vec<usize>,
    entries: Vec<(usize, f64)>,
    source_rows: usize,
}

impl SparseRows {
    pub fn new(source_rows: usize) -> Self {
        Self {
            offsets: vec![0],
            entries: Vec::new(),
            source_rows,
        }
    }

    /// Appends one output row. Panics on an out-of-range source index.
    pub fn push_row(&mut self, entries: impl IntoIterator<Item = (usize, f64)>) {
        for (j, w) in entries {
            assert!(j < self.source_rows, "sparse source row {j} out of range");
            self.entries.push((j, w));
        }
        self.offsets.push(self.entries.len());
    }

    pub fn rows(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn source_rows(&self) -> usize {
        self.source_rows
    }

    pub fn row(&self, i: usize) -> &[(usize, f64)] {
        &self.entries[self.offsets[i]..self.offsets[i + 1]]
    }

    pub fn apply(&self, input: &Tensor) -> Tensor {
        assert_eq!(input.rows(), self.source_rows);
        let c = input.cols();
        let mut out = Tensor::zeros(self.rows(), c);
        for i in 0..self.rows() {
            let dst = out.row_mut(i);
            for &(j, w) in self.row(i) {
                for (d, s) in dst.iter_mut().zip(input.row(j)) {
                    *d += w * s;
                }
            }
        }
        out
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    Param,
    MatMul(usize, usize),
    AddBias(usize, usize),
    Add(usize, usize),
    Relu(usize),
    Concat(Vec<usize>),
    SliceCols(usize, usize),
    Gather(usize, Arc<Vec<usize>>),
    GroupMax { input: usize, argmax: Vec<usize> },
    Sparse(usize, Arc<SparseRows>),
    Scale(usize, f64),
    AddConst(usize),
    RowLinear3(usize, Arc<Vec<Mat3>>),
    NormalizeRows(usize),
    MeanSqNorm(usize),
    ScalarWithGrad(usize, Tensor),
    WeightedSum(Vec<(usize, f64)>),
}

struct Node {
    value: Tensor,
    op: Op,
}

/// Gradients of one backward pass, keyed by parameter.
#[derive(Debug, Clone)]
pub struct Gradients {
    pub(crate) by_param: Vec<(ParamId, Tensor)>,
}

impl Gradients {
    pub fn get(&self, id: ParamId) -> Option<&Tensor> {
        self.by_param.iter().find(|(p, _)| *p == id).map(|(_, t)| t)
    }
}

pub struct Tape {
    id: u64,
    nodes: Vec<Node>,
    params: HashMap<ParamId, Var>,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

impl Tape {
    pub fn new() -> Self {
        Self {
            id: NEXT_TAPE.fetch_add(1, Ordering::Relaxed),
            nodes: Vec::new(),
            params: HashMap::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var {
            tape: self.id,
            idx: self.nodes.len() - 1,
        }
    }

    fn idx(&self, v: Var) -> usize {
        assert_eq!(v.tape, self.id, "variable belongs to a different tape");
        v.idx
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[self.idx(v)].value
    }

    /// Records a constant input.
    pub fn constant(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf)
    }

    /// Reads a parameter; repeated reads share one leaf.
    pub fn param(&mut self, store: &ParameterStore, id: ParamId) -> Var {
        if let Some(v) = self.params.get(&id) {
            return *v;
        }
        let v = self.push(store.value(id).clone(), Op::Param);
        self.params.insert(id, v);
        v
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let (ia, ib) = (self.idx(a), self.idx(b));
        let (av, bv) = (&self.nodes[ia].value, &self.nodes[ib].value);
        let mut out = Tensor::zeros(av.rows(), bv.cols());
        gemm(av, false, bv, false, &mut out, false);
        self.push(out, Op::MatMul(ia, ib))
    }

    /// Adds a `1 x c` bias row to every row of `a`.
    pub fn add_bias(&mut self, a: Var, bias: Var) -> Var {
        let (ia, ib) = (self.idx(a), self.idx(bias));
        let b = self.nodes[ib].value.row(0).to_vec();
        let mut out = self.nodes[ia].value.clone();
        assert_eq!(out.cols(), b.len(), "bias width mismatch");
        for r in 0..out.rows() {
            for (x, y) in out.row_mut(r).iter_mut().zip(&b) {
                *x += y;
            }
        }
        self.push(out, Op::AddBias(ia, ib))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let (ia, ib) = (self.idx(a), self.idx(b));
        let mut out = self.nodes[ia].value.clone();
        assert_eq!(
            out.shape(),
            self.nodes[ib].value.shape(),
            "add shape mismatch"
        );
        out.add_assign(&self.nodes[ib].value);
        self.push(out, Op::Add(ia, ib))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let ia = self.idx(a);
        let mut out = self.nodes[ia].value.clone();
        out.data_mut().iter_mut().for_each(|x| {
            if *x <= 0.0 {
                *x = 0.0
            }
        });
        self.push(out, Op::Relu(ia))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        let ids: Vec<usize> = parts.iter().map(|&v| self.idx(v)).collect();
        let rows = self.nodes[ids[0]].value.rows();
        for &i in &ids {
            assert_eq!(self.nodes[i].value.rows(), rows, "concat row mismatch");
        }
        let cols: usize = ids.iter().map(|&i| self.nodes[i].value.cols()).sum();
        let mut out = Tensor::zeros(rows, cols);
        for r in 0..rows {
            let mut off = 0;
            for &i in &ids {
                let src = self.nodes[i].value.row(r);
                out.row_mut(r)[off..off + src.len()].copy_from_slice(src);
                off += src.len();
            }
        }
        self.push(out, Op::Concat(ids))
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, width: usize) -> Var {
        let ia = self.idx(a);
        let src = &self.nodes[ia].value;
        assert!(start + width <= src.cols());
        let mut out = Tensor::zeros(src.rows(), width);
        for r in 0..src.rows() {
            out.row_mut(r)
                .copy_from_slice(&src.row(r)[start..start + width]);
        }
        self.push(out, Op::SliceCols(ia, start))
    }

    pub fn gather_rows(&mut self, a: Var, index: Arc<Vec<usize>>) -> Var {
        let ia = self.idx(a);
        let src = &self.nodes[ia].value;
        let mut out = Tensor::zeros(index.len(), src.cols());
        for (r, &j) in index.iter().enumerate() {
            out.row_mut(r).copy_from_slice(src.row(j));
        }
        self.push(out, Op::Gather(ia, index))
    }

    /// Max over consecutive groups of `group` rows, per column. Ties pick the
    /// first row of the group.
    pub fn group_max(&mut self, a: Var, group: usize) -> Var {
        let ia = self.idx(a);
        let src = &self.nodes[ia].value;
        assert!(
            group > 0 && src.rows() % group == 0,
            "rows not divisible by group size"
        );
        let n = src.rows() / group;
        let c = src.cols();
        let mut out = Tensor::zeros(n, c);
        let mut argmax = vec![0; n * c];
        for g in 0..n {
            for ch in 0..c {
                let mut best = g * group;
                let mut val = src.get(best, ch);
                for r in g * group + 1..(g + 1) * group {
                    let v = src.get(r, ch);
                    if v > val {
                        val = v;
                        best = r;
                    }
                }
                out.data_mut()[g * c + ch] = val;
                argmax[g * c + ch] = best;
            }
        }
        self.push(out, Op::GroupMax { input: ia, argmax })
    }

    pub fn sparse(&mut self, a: Var, mix: Arc<SparseRows>) -> Var {
        let ia = self.idx(a);
        let out = mix.apply(&self.nodes[ia].value);
        self.push(out, Op::Sparse(ia, mix))
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let ia = self.idx(a);
        let mut out = self.nodes[ia].value.clone();
        out.data_mut().iter_mut().for_each(|x| *x *= s);
        self.push(out, Op::Scale(ia, s))
    }

    /// `a + constant`; the constant receives no gradient.
    pub fn add_const(&mut self, a: Var, constant: &Tensor) -> Var {
        let ia = self.idx(a);
        let mut out = self.nodes[ia].value.clone();
        assert_eq!(out.shape(), constant.shape(), "add_const shape mismatch");
        out.add_assign(constant);
        self.push(out, Op::AddConst(ia))
    }

    /// Multiplies row `i` (width 3) by the constant matrix `mats[i]`.
    pub fn row_linear3(&mut self, a: Var, mats: Arc<Vec<Mat3>>) -> Var {
        let ia = self.idx(a);
        let src = &self.nodes[ia].value;
        assert_eq!(src.cols(), 3);
        assert_eq!(src.rows(), mats.len());
        let mut out = Tensor::zeros(src.rows(), 3);
        for (r, m) in mats.iter().enumerate() {
            let x = src.row(r);
            let dst = out.row_mut(r);
            for i in 0..3 {
                dst[i] = m[(i, 0)] * x[0] + m[(i, 1)] * x[1] + m[(i, 2)] * x[2];
            }
        }
        self.push(out, Op::RowLinear3(ia, mats))
    }

    pub fn normalize_rows(&mut self, a: Var) -> Var {
        let ia = self.idx(a);
        let mut out = self.nodes[ia].value.clone();
        for r in 0..out.rows() {
            let row = out.row_mut(r);
            let n = row.iter().map(|x| x * x).sum::<f64>().sqrt();
            row.iter_mut().for_each(|x| *x /= n);
        }
        self.push(out, Op::NormalizeRows(ia))
    }

    /// `(1/rows) * sum_i |row_i|^2` as a `1 x 1` tensor.
    pub fn mean_sq_norm(&mut self, a: Var) -> Var {
        let ia = self.idx(a);
        let src = &self.nodes[ia].value;
        let v = if src.rows() == 0 {
            0.0
        } else {
            src.sum_sq() / src.rows() as f64
        };
        self.push(Tensor::scalar(v), Op::MeanSqNorm(ia))
    }

    /// Records a scalar function of `a` whose gradient with respect to `a`
    /// was computed by the caller (piecewise-smooth losses with fixed
    /// combinatorial structure, such as nearest-neighbour assignments).
    pub fn scalar_with_grad(&mut self, a: Var, value: f64, grad: Tensor) -> Var {
        let ia = self.idx(a);
        assert_eq!(
            grad.shape(),
            self.nodes[ia].value.shape(),
            "local gradient shape mismatch"
        );
        self.push(Tensor::scalar(value), Op::ScalarWithGrad(ia, grad))
    }

    pub fn weighted_sum(&mut self, terms: &[(Var, f64)]) -> Var {
        let mut v = 0.0;
        let mut ids = Vec::with_capacity(terms.len());
        for &(t, w) in terms {
            let i = self.idx(t);
            v += w * self.nodes[i].value.item();
            ids.push((i, w));
        }
        self.push(Tensor::scalar(v), Op::WeightedSum(ids))
    }

    /// Gradients of the scalar `loss` with respect to every parameter read
    /// on this tape.
    pub fn backward(&self, loss: Var) -> Result<Gradients, NetError> {
        if loss.tape != self.id || loss.idx >= self.nodes.len() {
            return Err(NetError::NoForward);
        }
        if self.nodes[loss.idx].value.shape() != (1, 1) {
            return Err(NetError::NonScalarLoss(self.nodes[loss.idx].value.shape()));
        }
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.idx] = Some(Tensor::scalar(1.0));

        for i in (0..=loss.idx).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            match &node.op {
                Op::Leaf => {}
                Op::Param => {
                    grads[i] = Some(g);
                }
                Op::MatMul(a, b) => {
                    let (av, bv) = (&self.nodes[*a].value, &self.nodes[*b].value);
                    let mut ga = Tensor::zeros(av.rows(), av.cols());
                    gemm(&g, false, bv, true, &mut ga, false);
                    let mut gb = Tensor::zeros(bv.rows(), bv.cols());
                    gemm(av, true, &g, false, &mut gb, false);
                    accumulate(&mut grads, *a, ga);
                    accumulate(&mut grads, *b, gb);
                }
                Op::AddBias(a, b) => {
                    let mut gb = Tensor::zeros(1, g.cols());
                    for r in 0..g.rows() {
                        for (x, y) in gb.row_mut(0).iter_mut().zip(g.row(r)) {
                            *x += y;
                        }
                    }
                    accumulate(&mut grads, *b, gb);
                    accumulate(&mut grads, *a, g);
                }
                Op::Add(a, b) => {
                    accumulate(&mut grads, *b, g.clone());
                    accumulate(&mut grads, *a, g);
                }
                Op::Relu(a) => {
                    let mut ga = g;
                    for (x, y) in ga.data_mut().iter_mut().zip(node.value.data()) {
                        if *y <= 0.0 {
                            *x = 0.0;
                        }
                    }
                    accumulate(&mut grads, *a, ga);
                }
                Op::Concat(ids) => {
                    let mut off = 0;
                    for &p in ids {
                        let w = self.nodes[p].value.cols();
                        let mut gp = Tensor::zeros(g.rows(), w);
                        for r in 0..g.rows() {
                            gp.row_mut(r).copy_from_slice(&g.row(r)[off..off + w]);
                        }
                        off += w;
                        accumulate(&mut grads, p, gp);
                    }
                }
                Op::SliceCols(a, start) => {
                    let src = &self.nodes[*a].value;
                    let mut ga = Tensor::zeros(src.rows(), src.cols());
                    for r in 0..g.rows() {
                        ga.row_mut(r)[*start..*start + g.cols()].copy_from_slice(g.row(r));
                    }
                    accumulate(&mut grads, *a, ga);
                }
                Op::Gather(a, index) => {
                    let src = &self.nodes[*a].value;
                    let mut ga = Tensor::zeros(src.rows(), src.cols());
                    for (r, &j) in index.iter().enumerate() {
                        for (x, y) in ga.row_mut(j).iter_mut().zip(g.row(r)) {
                            *x += y;
                        }
                    }
                    accumulate(&mut grads, *a, ga);
                }
                Op::GroupMax { input, argmax } => {
                    let src = &self.nodes[*input].value;
                    let c = src.cols();
                    let mut ga = Tensor::zeros(src.rows(), c);
                    for (k, &row) in argmax.iter().enumerate() {
                        ga.data_mut()[row * c + k % c] += g.data()[k];
                    }
                    accumulate(&mut grads, *input, ga);
                }
                Op::Sparse(a, mix) => {
                    let src = &self.nodes[*a].value;
                    let mut ga = Tensor::zeros(src.rows(), src.cols());
                    for r in 0..mix.rows() {
                        for &(j, w) in mix.row(r) {
                            for (x, y) in ga.row_mut(j).iter_mut().zip(g.row(r)) {
                                *x += w * y;
                            }
                        }
                    }
                    accumulate(&mut grads, *a, ga);
                }
                Op::Scale(a, s) => {
                    let mut ga = g;
                    ga.data_mut().iter_mut().for_each(|x| *x *= s);
                    accumulate(&mut grads, *a, ga);
                }
                Op::AddConst(a) => accumulate(&mut grads, *a, g),
                Op::RowLinear3(a, mats) => {
                    let mut ga = Tensor::zeros(g.rows(), 3);
                    for (r, m) in mats.iter().enumerate() {
                        let y = g.row(r);
                        let dst = ga.row_mut(r);
                        for j in 0..3 {
                            dst[j] = m[(0, j)] * y[0] + m[(1, j)] * y[1] + m[(2, j)] * y[2];
                        }
                    }
                    accumulate(&mut grads, *a, ga);
                }
                Op::NormalizeRows(a) => {
                    let src = &self.nodes[*a].value;
                    let mut ga = Tensor::zeros(src.rows(), src.cols());
                    for r in 0..src.rows() {
                        let n = src.row(r).iter().map(|x| x * x).sum::<f64>().sqrt();
                        let y = node.value.row(r);
                        let gy = g.row(r);
                        let dot: f64 = y.iter().zip(gy).map(|(p, q)| p * q).sum();
                        for ((d, yv), gv) in ga.row_mut(r).iter_mut().zip(y).zip(gy) {
                            *d = (gv - yv * dot) / n;
                        }
                    }
                    accumulate(&mut grads, *a, ga);
                }
                Op::MeanSqNorm(a) => {
                    let src = &self.nodes[*a].value;
                    let s = 2.0 * g.item() / src.rows().max(1) as f64;
                    let mut ga = src.clone();
                    ga.data_mut().iter_mut().for_each(|x| *x *= s);
                    accumulate(&mut grads, *a, ga);
                }
                Op::ScalarWithGrad(a, local) => {
                    let s = g.item();
                    let mut ga = local.clone();
                    ga.data_mut().iter_mut().for_each(|x| *x *= s);
                    accumulate(&mut grads, *a, ga);
                }
                Op::WeightedSum(terms) => {
                    for &(t, w) in terms {
                        accumulate(&mut grads, t, Tensor::scalar(w * g.item()));
                    }
                }
            }
        }

        let mut by_param: Vec<(ParamId, Tensor)> = self
            .params
            .iter()
            .filter(|(_, v)| v.idx <= loss.idx)
            .map(|(&id, v)| {
                let shape = self.nodes[v.idx].value.shape();
                let g = grads[v.idx]
                    .take()
                    .unwrap_or_else(|| Tensor::zeros(shape.0, shape.1));
                (id, g)
            })
            .collect();
        by_param.sort_by_key(|(id, _)| *id);
        Ok(Gradients { by_param })
    }
}

fn accumulate(grads: &mut [Option<Tensor>], i: usize, g: Tensor) {
    match &mut grads[i] {
        Some(existing) => existing.add_assign(&g),
        slot @ None => *slot = Some(g),
    }
}
