use std::borrow::Cow;

use super::kernels;
use super::{Real, Tensor, COSINE_EPS};
use crate::error::{Error, Result};

/// Handle to a value recorded on a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(pub(super) usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PoolKind {
    Max,
    Mean,
}

#[derive(Debug)]
pub(super) enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddRow(Var, Var),
    ScaleRows(Var, Var),
    Scale(Var, Real),
    MulConst(Var, Vec<Real>),
    Tanh(Var),
    Sigmoid(Var),
    Sum(Var),
    L2Norm(Var),
    Cosine(Var, Var),
    ConcatCols(Vec<Var>),
    ConcatRows(Vec<Var>),
    SliceCols {
        input: Var,
        start: usize,
    },
    SliceRows {
        input: Var,
        start: usize,
    },
    Reshape(Var),
    MaskedSoftmax {
        input: Var,
        mask: Vec<bool>,
    },
    Pool {
        input: Var,
        kind: PoolKind,
        mask: Vec<bool>,
        argmax: Vec<usize>,
    },
    Pick {
        input: Var,
        index: usize,
    },
    LogClamp {
        input: Var,
        floor: Real,
    },
    Gather {
        table: Var,
        indices: Vec<usize>,
    },
    LstmCell {
        z: Var,
        c_prev: Var,
    },
    MpCosine {
        p: Var,
        q: Var,
        w: Var,
    },
}

pub(super) struct Node<'p> {
    pub value: Cow<'p, Tensor>,
    pub op: Op,
    pub requires_grad: bool,
}

/// A single-use tape. Values are recorded in creation order; [`Graph::backward`]
/// replays the recorded rules in reverse. Parameters are borrowed, not copied.
#[derive(Default)]
pub struct Graph<'p> {
    pub(super) nodes: Vec<Node<'p>>,
}

fn dim_err(op: &'static str, a: &Tensor, b: &Tensor) -> Error {
    Error::Dimension {
        op,
        lhs: a.shape().to_vec(),
        rhs: b.shape().to_vec(),
    }
}

impl<'p> Graph<'p> {
    pub fn new() -> Self {
        Graph { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Cow<'p, Tensor>, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn push_op(&mut self, value: Tensor, op: Op, inputs: &[Var]) -> Var {
        let rg = inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        self.push(Cow::Owned(value), op, rg)
    }

    /// Records an owned leaf.
    pub fn input(&mut self, value: Tensor, requires_grad: bool) -> Var {
        self.push(Cow::Owned(value), Op::Leaf, requires_grad)
    }

    pub fn constant(&mut self, value: Tensor) -> Var {
        self.input(value, false)
    }

    /// Borrowed leaf that receives a gradient.
    pub fn param(&mut self, value: &'p Tensor) -> Var {
        self.push(Cow::Borrowed(value), Op::Leaf, true)
    }

    /// Borrowed leaf without a gradient (frozen tables).
    pub fn frozen(&mut self, value: &'p Tensor) -> Var {
        self.push(Cow::Borrowed(value), Op::Leaf, false)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.rank() != 2 || tb.rank() != 2 || ta.shape()[1] != tb.shape()[0] {
            return Err(dim_err("matmul", ta, tb));
        }
        let (m, k, n) = (ta.shape()[0], ta.shape()[1], tb.shape()[1]);
        let mut out = vec![0.0; m * n];
        kernels::gemm_nn(ta.data(), tb.data(), &mut out, m, k, n);
        Ok(self.push_op(
            Tensor::from_parts(vec![m, n], out),
            Op::MatMul(a, b),
            &[a, b],
        ))
    }

    fn zip_same(
        &mut self,
        name: &'static str,
        a: Var,
        b: Var,
        f: impl Fn(Real, Real) -> Real,
        op: Op,
    ) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() != tb.shape() {
            return Err(dim_err(name, ta, tb));
        }
        let data = ta
            .data()
            .iter()
            .zip(tb.data())
            .map(|(&x, &y)| f(x, y))
            .collect();
        let shape = ta.shape().to_vec();
        Ok(self.push_op(Tensor::from_parts(shape, data), op, &[a, b]))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_same("add", a, b, |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_same("sub", a, b, |x, y| x - y, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_same("mul", a, b, |x, y| x * y, Op::Mul(a, b))
    }

    /// Adds vector `v` (length c) to every row of `m` (r×c).
    pub fn add_row(&mut self, m: Var, v: Var) -> Result<Var> {
        let (tm, tv) = (self.value(m), self.value(v));
        if tm.rank() != 2 || tv.len() != tm.cols() {
            return Err(dim_err("add_row", tm, tv));
        }
        let c = tm.cols();
        let mut data = tm.data().to_vec();
        for row in data.chunks_mut(c) {
            for (x, &b) in row.iter_mut().zip(tv.data()) {
                *x += b;
            }
        }
        let shape = tm.shape().to_vec();
        Ok(self.push_op(Tensor::from_parts(shape, data), Op::AddRow(m, v), &[m, v]))
    }

    /// Multiplies row `i` of `m` (r×c) by `s[i]`.
    pub fn scale_rows(&mut self, m: Var, s: Var) -> Result<Var> {
        let (tm, ts) = (self.value(m), self.value(s));
        if tm.rank() != 2 || ts.len() != tm.rows() {
            return Err(dim_err("scale_rows", tm, ts));
        }
        let c = tm.cols();
        let mut data = tm.data().to_vec();
        for (row, &k) in data.chunks_mut(c).zip(ts.data()) {
            row.iter_mut().for_each(|x| *x *= k);
        }
        let shape = tm.shape().to_vec();
        Ok(self.push_op(
            Tensor::from_parts(shape, data),
            Op::ScaleRows(m, s),
            &[m, s],
        ))
    }

    pub fn scale(&mut self, a: Var, k: Real) -> Var {
        let t = self.value(a);
        let data = t.data().iter().map(|x| x * k).collect();
        let shape = t.shape().to_vec();
        self.push_op(Tensor::from_parts(shape, data), Op::Scale(a, k), &[a])
    }

    /// Elementwise product with a constant of the same size (dropout masks).
    pub fn mul_const(&mut self, a: Var, k: Vec<Real>) -> Result<Var> {
        let t = self.value(a);
        if k.len() != t.len() {
            return Err(Error::Dimension {
                op: "mul_const",
                lhs: t.shape().to_vec(),
                rhs: vec![k.len()],
            });
        }
        let data = t.data().iter().zip(&k).map(|(x, m)| x * m).collect();
        let shape = t.shape().to_vec();
        Ok(self.push_op(Tensor::from_parts(shape, data), Op::MulConst(a, k), &[a]))
    }

    fn map(&mut self, a: Var, f: impl Fn(Real) -> Real, op: Op) -> Var {
        let t = self.value(a);
        let data = t.data().iter().map(|&x| f(x)).collect();
        let shape = t.shape().to_vec();
        self.push_op(Tensor::from_parts(shape, data), op, &[a])
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.map(a, Real::tanh, Op::Tanh(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.map(a, kernels::sigmoid, Op::Sigmoid(a))
    }

    /// `ln(max(x, floor))` elementwise; the gradient is zero where clamped.
    pub fn log_clamp(&mut self, a: Var, floor: Real) -> Var {
        self.map(a, |x| x.max(floor).ln(), Op::LogClamp { input: a, floor })
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).data().iter().sum();
        self.push_op(Tensor::scalar(s), Op::Sum(a), &[a])
    }

    pub fn l2_norm(&mut self, a: Var) -> Var {
        let t = self.value(a);
        let s = kernels::dot(t.data(), t.data()).sqrt();
        self.push_op(Tensor::scalar(s), Op::L2Norm(a), &[a])
    }

    /// Cosine similarity of two equally sized tensors, flattened.
    pub fn cosine(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.len() != tb.len() {
            return Err(dim_err("cosine", ta, tb));
        }
        let (c, _, _) = kernels::cosine_parts(ta.data(), tb.data());
        Ok(self.push_op(Tensor::scalar(c), Op::Cosine(a, b), &[a, b]))
    }

    /// Concatenates along the last axis. Inputs are all vectors or all
    /// matrices with a common row count.
    pub fn concat_cols(&mut self, inputs: &[Var]) -> Result<Var> {
        let first = inputs
            .first()
            .ok_or_else(|| Error::invalid("concat_cols of nothing"))?;
        let t0 = self.value(*first);
        let rank = t0.rank();
        let rows = t0.rows();
        let mut widths = Vec::with_capacity(inputs.len());
        for &v in inputs {
            let t = self.value(v);
            if t.rank() != rank || !(rank == 1 || rank == 2) || t.rows() != rows {
                return Err(dim_err("concat_cols", t0, t));
            }
            widths.push(t.cols());
        }
        let total: usize = widths.iter().sum();
        let mut data = Vec::with_capacity(rows * total);
        for r in 0..rows {
            for &v in inputs {
                data.extend_from_slice(self.value(v).row(r));
            }
        }
        let shape = if rank == 1 {
            vec![total]
        } else {
            vec![rows, total]
        };
        Ok(self.push_op(
            Tensor::from_parts(shape, data),
            Op::ConcatCols(inputs.to_vec()),
            inputs,
        ))
    }

    /// Stacks rows. Vector inputs count as one row each.
    pub fn concat_rows(&mut self, inputs: &[Var]) -> Result<Var> {
        let first = inputs
            .first()
            .ok_or_else(|| Error::invalid("concat_rows of nothing"))?;
        let t0 = self.value(*first);
        let cols = t0.cols();
        let mut rows = 0;
        for &v in inputs {
            let t = self.value(v);
            if t.rank() > 2 || t.rank() == 0 || t.cols() != cols {
                return Err(dim_err("concat_rows", t0, t));
            }
            rows += t.rows();
        }
        let mut data = Vec::with_capacity(rows * cols);
        for &v in inputs {
            data.extend_from_slice(self.value(v).data());
        }
        Ok(self.push_op(
            Tensor::from_parts(vec![rows, cols], data),
            Op::ConcatRows(inputs.to_vec()),
            inputs,
        ))
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        let t = self.value(a);
        if t.rank() != 2 || len == 0 || start + len > t.cols() {
            return Err(Error::Dimension {
                op: "slice_cols",
                lhs: t.shape().to_vec(),
                rhs: vec![start, len],
            });
        }
        let c = t.cols();
        let data = t
            .data()
            .chunks(c)
            .flat_map(|row| row[start..start + len].iter().copied())
            .collect();
        let rows = t.rows();
        Ok(self.push_op(
            Tensor::from_parts(vec![rows, len], data),
            Op::SliceCols { input: a, start },
            &[a],
        ))
    }

    pub fn slice_rows(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        let t = self.value(a);
        if t.rank() != 2 || len == 0 || start + len > t.rows() {
            return Err(Error::Dimension {
                op: "slice_rows",
                lhs: t.shape().to_vec(),
                rhs: vec![start, len],
            });
        }
        let c = t.cols();
        let data = t.data()[start * c..(start + len) * c].to_vec();
        Ok(self.push_op(
            Tensor::from_parts(vec![len, c], data),
            Op::SliceRows { input: a, start },
            &[a],
        ))
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        let t = self.value(a).clone().reshaped(shape.to_vec())?;
        Ok(self.push_op(t, Op::Reshape(a), &[a]))
    }

    /// Softmax over a vector; masked entries are exactly zero.
    pub fn masked_softmax(&mut self, a: Var, mask: &[bool]) -> Result<Var> {
        let t = self.value(a);
        if t.rank() != 1 || mask.len() != t.len() {
            return Err(Error::Dimension {
                op: "masked_softmax",
                lhs: t.shape().to_vec(),
                rhs: vec![mask.len()],
            });
        }
        let max = t
            .data()
            .iter()
            .zip(mask)
            .filter(|(_, &m)| m)
            .map(|(&x, _)| x)
            .fold(Real::NEG_INFINITY, Real::max);
        if max == Real::NEG_INFINITY {
            return Err(Error::invalid("masked_softmax with every position masked"));
        }
        let mut data: Vec<Real> = t
            .data()
            .iter()
            .zip(mask)
            .map(|(&x, &m)| if m { (x - max).exp() } else { 0.0 })
            .collect();
        let z: Real = data.iter().sum();
        data.iter_mut().for_each(|x| *x /= z);
        let shape = t.shape().to_vec();
        Ok(self.push_op(
            Tensor::from_parts(shape, data),
            Op::MaskedSoftmax {
                input: a,
                mask: mask.to_vec(),
            },
            &[a],
        ))
    }

    /// Pools over the second-to-last axis, considering only rows whose mask is
    /// set. `[.., n, l] → [.., l]`. Max routes its gradient to the earliest
    /// maximal row.
    pub fn pool(&mut self, a: Var, mask: &[bool], kind: PoolKind) -> Result<Var> {
        let t = self.value(a);
        let r = t.rank();
        if r < 2 || t.shape()[r - 2] != mask.len() {
            return Err(Error::Dimension {
                op: "pool",
                lhs: t.shape().to_vec(),
                rhs: vec![mask.len()],
            });
        }
        let live = mask.iter().filter(|&&m| m).count();
        if live == 0 {
            return Err(Error::invalid("pool with every row masked"));
        }
        let n = mask.len();
        let l = t.shape()[r - 1];
        let outer: usize = t.shape()[..r - 2].iter().product();
        let mut data = vec![0.0; outer * l];
        let mut argmax = Vec::new();
        match kind {
            PoolKind::Max => {
                argmax = vec![0; outer * l];
                for o in 0..outer {
                    let block = &t.data()[o * n * l..(o + 1) * n * l];
                    for c in 0..l {
                        let mut best = Real::NEG_INFINITY;
                        let mut arg = 0;
                        for (i, _) in mask.iter().enumerate().filter(|(_, &m)| m) {
                            let v = block[i * l + c];
                            if v > best {
                                best = v;
                                arg = i;
                            }
                        }
                        data[o * l + c] = best;
                        argmax[o * l + c] = arg;
                    }
                }
            }
            PoolKind::Mean => {
                let inv = 1.0 / live as Real;
                for o in 0..outer {
                    let block = &t.data()[o * n * l..(o + 1) * n * l];
                    let out = &mut data[o * l..(o + 1) * l];
                    for (i, _) in mask.iter().enumerate().filter(|(_, &m)| m) {
                        for (acc, &v) in out.iter_mut().zip(&block[i * l..(i + 1) * l]) {
                            *acc += v;
                        }
                    }
                    out.iter_mut().for_each(|x| *x *= inv);
                }
            }
        }
        let mut shape = t.shape()[..r - 2].to_vec();
        shape.push(l);
        Ok(self.push_op(
            Tensor::from_parts(shape, data),
            Op::Pool {
                input: a,
                kind,
                mask: mask.to_vec(),
                argmax,
            },
            &[a],
        ))
    }

    /// Selects one element (flat index) as a scalar.
    pub fn pick(&mut self, a: Var, index: usize) -> Result<Var> {
        let t = self.value(a);
        let v = *t.data().get(index).ok_or_else(|| Error::Dimension {
            op: "pick",
            lhs: t.shape().to_vec(),
            rhs: vec![index],
        })?;
        Ok(self.push_op(Tensor::scalar(v), Op::Pick { input: a, index }, &[a]))
    }

    /// Row lookup into `table` (V×d).
    pub fn gather(&mut self, table: Var, indices: &[usize]) -> Result<Var> {
        let t = self.value(table);
        if t.rank() != 2 || indices.is_empty() {
            return Err(Error::invalid(format!(
                "gather over shape {:?} with {} indices",
                t.shape(),
                indices.len()
            )));
        }
        let (v, d) = (t.rows(), t.cols());
        let mut data = Vec::with_capacity(indices.len() * d);
        for &i in indices {
            if i >= v {
                return Err(Error::Dimension {
                    op: "gather",
                    lhs: t.shape().to_vec(),
                    rhs: vec![i],
                });
            }
            data.extend_from_slice(t.row(i));
        }
        Ok(self.push_op(
            Tensor::from_parts(vec![indices.len(), d], data),
            Op::Gather {
                table,
                indices: indices.to_vec(),
            },
            &[table],
        ))
    }

    /// Fused LSTM cell over a batch of rows. `z` holds gate pre-activations
    /// (B×4h, input/forget/candidate/output); returns B×2h rows `[h | c]`.
    pub fn lstm_cell(&mut self, z: Var, c_prev: Var) -> Result<Var> {
        let (tz, tc) = (self.value(z), self.value(c_prev));
        if tz.rank() != 2 || tc.rank() != 2 || tz.rows() != tc.rows() || tz.cols() != 4 * tc.cols()
        {
            return Err(dim_err("lstm_cell", tz, tc));
        }
        let (rows, h) = (tc.rows(), tc.cols());
        let out = kernels::lstm_cell_forward(tz.data(), tc.data(), rows, h);
        Ok(self.push_op(
            Tensor::from_parts(vec![rows, 2 * h], out),
            Op::LstmCell { z, c_prev },
            &[z, c_prev],
        ))
    }

    /// Weighted cosine of every row of `p` (n×d) against every row of `q`
    /// (m×d) under each perspective row of `w` (l×d): output `[n, m, l]`.
    pub fn mp_cosine(&mut self, p: Var, q: Var, w: Var) -> Result<Var> {
        let (tp, tq, tw) = (self.value(p), self.value(q), self.value(w));
        if tp.rank() != 2 || tq.rank() != 2 || tw.rank() != 2 {
            return Err(dim_err("mp_cosine", tp, tq));
        }
        let d = tp.cols();
        if tq.cols() != d {
            return Err(dim_err("mp_cosine", tp, tq));
        }
        if tw.cols() != d {
            return Err(dim_err("mp_cosine", tp, tw));
        }
        let (n, m, l) = (tp.rows(), tq.rows(), tw.rows());
        let out = kernels::mp_cosine_forward(tp.data(), tq.data(), tw.data(), n, m, l, d);
        Ok(self.push_op(
            Tensor::from_parts(vec![n, m, l], out),
            Op::MpCosine { p, q, w },
            &[p, q, w],
        ))
    }
}

/// Gradients produced by [`Graph::backward`], indexed by [`Var`].
pub struct Gradients {
    pub(super) grads: Vec<Option<Vec<Real>>>,
    pub(super) shapes: Vec<Vec<usize>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<Tensor> {
        self.grads[v.0]
            .as_ref()
            .map(|g| Tensor::from_parts(self.shapes[v.0].clone(), g.clone()))
    }

    pub fn get_slice(&self, v: Var) -> Option<&[Real]> {
        self.grads[v.0].as_deref()
    }

    /// Moves the gradient out, or returns zeros of the right shape if the
    /// value was unreachable from the loss.
    pub fn take_or_zero(&mut self, v: Var) -> Tensor {
        let shape = self.shapes[v.0].clone();
        match self.grads[v.0].take() {
            Some(g) => Tensor::from_parts(shape, g),
            None => Tensor::zeros(&shape),
        }
    }
}

pub(super) fn cosine_grads(a: &[Real], b: &[Real]) -> Option<(Vec<Real>, Vec<Real>)> {
    let (c, na, nb) = kernels::cosine_parts(a, b);
    if na < COSINE_EPS || nb < COSINE_EPS {
        return None;
    }
    let inv = 1.0 / (na * nb);
    let da = a
        .iter()
        .zip(b)
        .map(|(&x, &y)| y * inv - c * x / (na * na))
        .collect();
    let db = a
        .iter()
        .zip(b)
        .map(|(&x, &y)| x * inv - c * y / (nb * nb))
        .collect();
    Some((da, db))
}
