use super::graph::{cosine_grads, Gradients, Graph, Op, PoolKind, Var};
use super::kernels;
use super::Real;
use crate::error::{Error, Result};

struct Accum<'a, 'p> {
    graph: &'a Graph<'p>,
    grads: Vec<Option<Vec<Real>>>,
}

impl Accum<'_, '_> {
    /// Runs `f` against the gradient buffer of `v`, allocating it on first use.
    /// Inputs that do not require a gradient are skipped.
    fn with(&mut self, v: Var, f: impl FnOnce(&mut [Real])) {
        let node = &self.graph.nodes[v.0];
        if !node.requires_grad {
            return;
        }
        let n = node.value.len();
        let buf = self.grads[v.0].get_or_insert_with(|| vec![0.0; n]);
        f(buf);
    }

    fn add(&mut self, v: Var, g: &[Real]) {
        self.with(v, |buf| {
            for (b, x) in buf.iter_mut().zip(g) {
                *b += x;
            }
        });
    }
}

impl Graph<'_> {
    /// Reverse-mode pass from a scalar `loss`. Gradients accumulate across
    /// fan-out; every requires-grad value reachable from the loss gets one.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let lt = self.value(loss);
        if lt.len() != 1 {
            return Err(Error::invalid(format!(
                "backward needs a scalar loss, got shape {:?}",
                lt.shape()
            )));
        }
        let mut acc = Accum {
            graph: self,
            grads: vec![None; self.nodes.len()],
        };
        if self.nodes[loss.0].requires_grad {
            acc.grads[loss.0] = Some(vec![1.0]);
        }
        for idx in (0..=loss.0).rev() {
            let Some(g) = acc.grads[idx].take() else {
                continue;
            };
            self.apply_rule(idx, &g, &mut acc);
            acc.grads[idx] = Some(g);
        }
        let shapes = self
            .nodes
            .iter()
            .map(|n| n.value.shape().to_vec())
            .collect();
        Ok(Gradients {
            grads: acc.grads,
            shapes,
        })
    }

    fn apply_rule(&self, idx: usize, g: &[Real], acc: &mut Accum) {
        let node = &self.nodes[idx];
        let out = node.value.data();
        match &node.op {
            Op::Leaf => {}
            &Op::MatMul(a, b) => {
                let (ta, tb) = (self.value(a), self.value(b));
                let (m, k, n) = (ta.shape()[0], ta.shape()[1], tb.shape()[1]);
                acc.with(a, |da| kernels::gemm_nt(g, tb.data(), da, m, n, k));
                acc.with(b, |db| kernels::gemm_tn(ta.data(), g, db, m, k, n));
            }
            &Op::Add(a, b) => {
                acc.add(a, g);
                acc.add(b, g);
            }
            &Op::Sub(a, b) => {
                acc.add(a, g);
                acc.with(b, |db| db.iter_mut().zip(g).for_each(|(d, x)| *d -= x));
            }
            &Op::Mul(a, b) => {
                let (ta, tb) = (self.value(a), self.value(b));
                acc.with(a, |da| {
                    for ((d, x), y) in da.iter_mut().zip(g).zip(tb.data()) {
                        *d += x * y;
                    }
                });
                acc.with(b, |db| {
                    for ((d, x), y) in db.iter_mut().zip(g).zip(ta.data()) {
                        *d += x * y;
                    }
                });
            }
            &Op::AddRow(m, v) => {
                acc.add(m, g);
                let c = self.value(v).len();
                acc.with(v, |dv| {
                    for row in g.chunks(c) {
                        dv.iter_mut().zip(row).for_each(|(d, x)| *d += x);
                    }
                });
            }
            &Op::ScaleRows(m, s) => {
                let (tm, ts) = (self.value(m), self.value(s));
                let c = tm.cols();
                acc.with(m, |dm| {
                    for ((drow, grow), &k) in dm.chunks_mut(c).zip(g.chunks(c)).zip(ts.data()) {
                        drow.iter_mut().zip(grow).for_each(|(d, x)| *d += x * k);
                    }
                });
                acc.with(s, |ds| {
                    for ((d, grow), mrow) in ds.iter_mut().zip(g.chunks(c)).zip(tm.data().chunks(c))
                    {
                        *d += kernels::dot(grow, mrow);
                    }
                });
            }
            &Op::Scale(a, k) => {
                acc.with(a, |da| da.iter_mut().zip(g).for_each(|(d, x)| *d += x * k))
            }
            Op::MulConst(a, mask) => acc.with(*a, |da| {
                for ((d, x), m) in da.iter_mut().zip(g).zip(mask) {
                    *d += x * m;
                }
            }),
            &Op::Tanh(a) => acc.with(a, |da| {
                for ((d, x), y) in da.iter_mut().zip(g).zip(out) {
                    *d += x * (1.0 - y * y);
                }
            }),
            &Op::Sigmoid(a) => acc.with(a, |da| {
                for ((d, x), y) in da.iter_mut().zip(g).zip(out) {
                    *d += x * y * (1.0 - y);
                }
            }),
            &Op::LogClamp { input, floor } => {
                let ti = self.value(input);
                acc.with(input, |da| {
                    for ((d, x), &v) in da.iter_mut().zip(g).zip(ti.data()) {
                        if v >= floor {
                            *d += x / v;
                        }
                    }
                });
            }
            &Op::Sum(a) => acc.with(a, |da| da.iter_mut().for_each(|d| *d += g[0])),
            &Op::L2Norm(a) => {
                let norm = out[0];
                if norm >= super::COSINE_EPS {
                    let ta = self.value(a);
                    acc.with(a, |da| {
                        for (d, x) in da.iter_mut().zip(ta.data()) {
                            *d += g[0] * x / norm;
                        }
                    });
                }
            }
            &Op::Cosine(a, b) => {
                if let Some((ga, gb)) = cosine_grads(self.value(a).data(), self.value(b).data()) {
                    acc.with(a, |da| {
                        da.iter_mut().zip(&ga).for_each(|(d, x)| *d += g[0] * x)
                    });
                    acc.with(b, |db| {
                        db.iter_mut().zip(&gb).for_each(|(d, x)| *d += g[0] * x)
                    });
                }
            }
            Op::ConcatCols(inputs) => {
                let total = node.value.cols();
                let rows = node.value.rows();
                let mut offset = 0;
                for &v in inputs {
                    let w = self.value(v).cols();
                    acc.with(v, |dv| {
                        for r in 0..rows {
                            let src = &g[r * total + offset..r * total + offset + w];
                            dv[r * w..(r + 1) * w]
                                .iter_mut()
                                .zip(src)
                                .for_each(|(d, x)| *d += x);
                        }
                    });
                    offset += w;
                }
            }
            Op::ConcatRows(inputs) => {
                let mut offset = 0;
                for &v in inputs {
                    let n = self.value(v).len();
                    acc.add(v, &g[offset..offset + n]);
                    offset += n;
                }
            }
            &Op::SliceCols { input, start } => {
                let c = self.value(input).cols();
                let len = node.value.cols();
                acc.with(input, |da| {
                    for (drow, grow) in da.chunks_mut(c).zip(g.chunks(len)) {
                        drow[start..start + len]
                            .iter_mut()
                            .zip(grow)
                            .for_each(|(d, x)| *d += x);
                    }
                });
            }
            &Op::SliceRows { input, start } => {
                let c = node.value.cols();
                acc.with(input, |da| {
                    da[start * c..start * c + g.len()]
                        .iter_mut()
                        .zip(g)
                        .for_each(|(d, x)| *d += x);
                });
            }
            &Op::Reshape(a) => acc.add(a, g),
            Op::MaskedSoftmax { input, mask } => {
                let s: Real = g.iter().zip(out).map(|(x, y)| x * y).sum();
                acc.with(*input, |da| {
                    for (((d, x), y), &m) in da.iter_mut().zip(g).zip(out).zip(mask) {
                        if m {
                            *d += y * (x - s);
                        }
                    }
                });
            }
            Op::Pool {
                input,
                kind,
                mask,
                argmax,
            } => {
                let n = mask.len();
                let l = node.value.cols();
                let outer = node.value.len() / l;
                match kind {
                    PoolKind::Max => acc.with(*input, |da| {
                        for o in 0..outer {
                            for c in 0..l {
                                let i = argmax[o * l + c];
                                da[(o * n + i) * l + c] += g[o * l + c];
                            }
                        }
                    }),
                    PoolKind::Mean => {
                        let inv = 1.0 / mask.iter().filter(|&&m| m).count() as Real;
                        acc.with(*input, |da| {
                            for o in 0..outer {
                                for (i, _) in mask.iter().enumerate().filter(|(_, &m)| m) {
                                    let dst = &mut da[(o * n + i) * l..(o * n + i + 1) * l];
                                    for (d, x) in dst.iter_mut().zip(&g[o * l..(o + 1) * l]) {
                                        *d += x * inv;
                                    }
                                }
                            }
                        });
                    }
                }
            }
            &Op::Pick { input, index } => acc.with(input, |da| da[index] += g[0]),
            Op::Gather { table, indices } => {
                let d = node.value.cols();
                acc.with(*table, |dt| {
                    for (row, &i) in g.chunks(d).zip(indices) {
                        dt[i * d..(i + 1) * d]
                            .iter_mut()
                            .zip(row)
                            .for_each(|(a, x)| *a += x);
                    }
                });
            }
            &Op::LstmCell { z, c_prev } => {
                let (tz, tc) = (self.value(z), self.value(c_prev));
                let (rows, h) = (tc.rows(), tc.cols());
                let (dz, dcp) = kernels::lstm_cell_backward(tz.data(), tc.data(), out, g, rows, h);
                acc.add(z, &dz);
                acc.add(c_prev, &dcp);
            }
            &Op::MpCosine { p, q, w } => {
                let (tp, tq, tw) = (self.value(p), self.value(q), self.value(w));
                let (n, m, l, d) = (tp.rows(), tq.rows(), tw.rows(), tp.cols());
                let grads = kernels::mp_cosine_backward(
                    tp.data(),
                    tq.data(),
                    tw.data(),
                    out,
                    g,
                    n,
                    m,
                    l,
                    d,
                );
                acc.add(p, &grads.dp);
                acc.add(q, &grads.dq);
                acc.add(w, &grads.dw);
            }
        }
    }
}
