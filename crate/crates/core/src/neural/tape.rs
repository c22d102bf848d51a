//! Reverse-mode differentiation over matrix-valued nodes.
//!
//! A [`Tape`] records one forward computation. Parameters are referenced by
//! index into a borrowed parameter list and never copied; their gradients are
//! accumulated into a dense buffer per parameter.

use super::tensor::{matmul_at_into, matmul_bt_into, matmul_into, Mat, Scalar};
use crate::span::SpanPair;

pub type NodeId = usize;

enum Op<T> {
    Leaf,
    Param(usize),
    Gather {
        table: usize,
        ids: Vec<usize>,
    },
    MatMul(NodeId, NodeId),
    MatMulBT(NodeId, NodeId),
    Add(NodeId, NodeId),
    AddRow(NodeId, NodeId),
    MulRow(NodeId, NodeId),
    Gelu(NodeId),
    LayerNorm {
        x: NodeId,
        gamma: NodeId,
        beta: NodeId,
        xhat: Mat<T>,
        rstd: Vec<T>,
    },
    Softmax {
        a: NodeId,
        scale: T,
    },
    RelBias {
        a: NodeId,
        table: NodeId,
        row: usize,
        radius: usize,
        mult: T,
    },
    SliceCols {
        a: NodeId,
        start: usize,
    },
    ConcatCols(Vec<NodeId>),
    PoolRanges {
        a: NodeId,
        ranges: Vec<SpanPair>,
    },
    ColAsRow {
        a: NodeId,
        col: usize,
    },
    Dropout {
        a: NodeId,
        mask: Vec<T>,
    },
    CrossEntropy {
        logits: NodeId,
        row: usize,
        target: usize,
        weight: T,
        probs: Vec<T>,
    },
    Sum(Vec<NodeId>),
}

struct Node<T> {
    value: Option<Mat<T>>,
    op: Op<T>,
}

pub struct Tape<'p, T: Scalar> {
    params: &'p [Mat<T>],
    nodes: Vec<Node<T>>,
    param_nodes: Vec<Option<NodeId>>,
    /// Prompt decoder invocations recorded on this tape.
    pub prompt_passes: usize,
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_A: f64 = 0.044_715;
const LN_EPS: f64 = 1e-5;

impl<'p, T: Scalar> Tape<'p, T> {
    pub fn new(params: &'p [Mat<T>]) -> Self {
        Tape {
            params,
            nodes: Vec::new(),
            param_nodes: vec![None; params.len()],
            prompt_passes: 0,
        }
    }

    pub fn value(&self, id: NodeId) -> &Mat<T> {
        match &self.nodes[id].op {
            Op::Param(p) => &self.params[*p],
            _ => self.nodes[id]
                .value
                .as_ref()
                .expect("non-param nodes hold values"),
        }
    }

    fn push(&mut self, value: Mat<T>, op: Op<T>) -> NodeId {
        self.nodes.push(Node {
            value: Some(value),
            op,
        });
        self.nodes.len() - 1
    }

    pub fn leaf(&mut self, value: Mat<T>) -> NodeId {
        self.push(value, Op::Leaf)
    }

    pub fn param(&mut self, idx: usize) -> NodeId {
        if let Some(id) = self.param_nodes[idx] {
            return id;
        }
        self.nodes.push(Node {
            value: None,
            op: Op::Param(idx),
        });
        let id = self.nodes.len() - 1;
        self.param_nodes[idx] = Some(id);
        id
    }

    /// Rows `ids` of parameter `table`.
    pub fn gather(&mut self, table: usize, ids: &[usize]) -> NodeId {
        let t = &self.params[table];
        let mut out = Mat::zeros(ids.len(), t.cols);
        for (r, &i) in ids.iter().enumerate() {
            out.row_mut(r).copy_from_slice(t.row(i));
        }
        self.push(
            out,
            Op::Gather {
                table,
                ids: ids.to_vec(),
            },
        )
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let (va, vb) = (self.value(a), self.value(b));
        let mut out = Mat::zeros(va.rows, vb.cols);
        matmul_into(va, vb, &mut out, false);
        self.push(out, Op::MatMul(a, b))
    }

    /// `a * b^T`.
    pub fn matmul_bt(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let (va, vb) = (self.value(a), self.value(b));
        let mut out = Mat::zeros(va.rows, vb.rows);
        matmul_bt_into(va, vb, &mut out, false);
        self.push(out, Op::MatMulBT(a, b))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let mut out = self.value(a).clone();
        out.add_assign(self.value(b));
        self.push(out, Op::Add(a, b))
    }

    /// `a + row` broadcast over the rows of `a`.
    pub fn add_row(&mut self, a: NodeId, row: NodeId) -> NodeId {
        let mut out = self.value(a).clone();
        let r = self.value(row);
        debug_assert_eq!(r.len(), out.cols);
        for i in 0..out.rows {
            for (x, &b) in out.row_mut(i).iter_mut().zip(&r.data) {
                *x = *x + b;
            }
        }
        self.push(out, Op::AddRow(a, row))
    }

    /// `a ∘ row` broadcast over the rows of `a`.
    pub fn mul_row(&mut self, a: NodeId, row: NodeId) -> NodeId {
        let mut out = self.value(a).clone();
        let r = self.value(row);
        debug_assert_eq!(r.len(), out.cols);
        for i in 0..out.rows {
            for (x, &b) in out.row_mut(i).iter_mut().zip(&r.data) {
                *x = *x * b;
            }
        }
        self.push(out, Op::MulRow(a, row))
    }

    /// Tanh-approximated GELU.
    pub fn gelu(&mut self, a: NodeId) -> NodeId {
        let c = T::from_f64_lossy(GELU_C);
        let k = T::from_f64_lossy(GELU_A);
        let half = T::from_f64_lossy(0.5);
        let mut out = self.value(a).clone();
        for x in &mut out.data {
            let v = *x;
            *x = half * v * (T::one() + (c * (v + k * v * v * v)).tanh());
        }
        self.push(out, Op::Gelu(a))
    }

    pub fn layer_norm(&mut self, x: NodeId, gamma: NodeId, beta: NodeId) -> NodeId {
        let vx = self.value(x);
        let (g, b) = (self.value(gamma), self.value(beta));
        let n = T::from_usize(vx.cols).unwrap();
        let eps = T::from_f64_lossy(LN_EPS);
        let mut xhat = Mat::zeros(vx.rows, vx.cols);
        let mut out = Mat::zeros(vx.rows, vx.cols);
        let mut rstd = Vec::with_capacity(vx.rows);
        for i in 0..vx.rows {
            let row = vx.row(i);
            let mean = row.iter().copied().sum::<T>() / n;
            let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / n;
            let r = T::one() / (var + eps).sqrt();
            rstd.push(r);
            for j in 0..vx.cols {
                let h = (row[j] - mean) * r;
                xhat.data[i * vx.cols + j] = h;
                out.data[i * vx.cols + j] = h * g.data[j] + b.data[j];
            }
        }
        self.push(
            out,
            Op::LayerNorm {
                x,
                gamma,
                beta,
                xhat,
                rstd,
            },
        )
    }

    /// Row softmax of `scale * a`. With `causal`, entry `(i, j)` for `j > i`
    /// is masked out.
    pub fn softmax(&mut self, a: NodeId, scale: T, causal: bool) -> NodeId {
        let va = self.value(a);
        let mut out = Mat::zeros(va.rows, va.cols);
        for i in 0..va.rows {
            let lim = if causal {
                (i + 1).min(va.cols)
            } else {
                va.cols
            };
            let row = &va.row(i)[..lim];
            let max = row.iter().fold(T::neg_infinity(), |m, &v| m.max(v * scale));
            let o = out.row_mut(i);
            let mut z = T::zero();
            for j in 0..lim {
                let e = (row[j] * scale - max).exp();
                o[j] = e;
                z = z + e;
            }
            for v in &mut o[..lim] {
                *v = *v / z;
            }
        }
        self.push(out, Op::Softmax { a, scale })
    }

    /// Adds `mult * table[row][clip(j - i) + radius]` to entry `(i, j)` of
    /// `a`, offsets clipped to `[-radius, radius]`.
    pub fn rel_bias(
        &mut self,
        a: NodeId,
        table: NodeId,
        row: usize,
        radius: usize,
        mult: T,
    ) -> NodeId {
        let mut out = self.value(a).clone();
        let bias = self.value(table).row(row);
        debug_assert_eq!(bias.len(), 2 * radius + 1);
        for i in 0..out.rows {
            let o = out.row_mut(i);
            for (j, x) in o.iter_mut().enumerate() {
                *x = *x + mult * bias[rel_index(i, j, radius)];
            }
        }
        self.push(
            out,
            Op::RelBias {
                a,
                table,
                row,
                radius,
                mult,
            },
        )
    }

    pub fn slice_cols(&mut self, a: NodeId, start: usize, width: usize) -> NodeId {
        let va = self.value(a);
        let mut out = Mat::zeros(va.rows, width);
        for i in 0..va.rows {
            out.row_mut(i)
                .copy_from_slice(&va.row(i)[start..start + width]);
        }
        self.push(out, Op::SliceCols { a, start })
    }

    pub fn concat_cols(&mut self, parts: &[NodeId]) -> NodeId {
        let rows = self.value(parts[0]).rows;
        let cols: usize = parts.iter().map(|&p| self.value(p).cols).sum();
        let mut out = Mat::zeros(rows, cols);
        let mut off = 0;
        for &p in parts {
            let v = self.value(p);
            for i in 0..rows {
                out.row_mut(i)[off..off + v.cols].copy_from_slice(v.row(i));
            }
            off += v.cols;
        }
        self.push(out, Op::ConcatCols(parts.to_vec()))
    }

    /// One output row per range: the mean of the rows in the inclusive range.
    pub fn pool_ranges(&mut self, a: NodeId, ranges: &[SpanPair]) -> NodeId {
        let va = self.value(a);
        let mut out = Mat::zeros(ranges.len(), va.cols);
        for (k, r) in ranges.iter().enumerate() {
            let inv = T::one() / T::from_usize(r.len()).unwrap();
            let o = out.row_mut(k);
            for i in r.start..=r.end {
                for (x, &v) in o.iter_mut().zip(va.row(i)) {
                    *x = *x + v;
                }
            }
            for x in o.iter_mut() {
                *x = *x * inv;
            }
        }
        self.push(
            out,
            Op::PoolRanges {
                a,
                ranges: ranges.to_vec(),
            },
        )
    }

    /// Column `col` of `a` as a `1 x rows` matrix.
    pub fn col_as_row(&mut self, a: NodeId, col: usize) -> NodeId {
        let va = self.value(a);
        let data = (0..va.rows).map(|i| va.at(i, col)).collect();
        self.push(Mat::from_vec(1, va.rows, data), Op::ColAsRow { a, col })
    }

    /// Inverted dropout with a precomputed mask (already scaled).
    pub fn dropout(&mut self, a: NodeId, mask: Vec<T>) -> NodeId {
        let mut out = self.value(a).clone();
        for (x, &m) in out.data.iter_mut().zip(&mask) {
            *x = *x * m;
        }
        self.push(out, Op::Dropout { a, mask })
    }

    /// `weight * -log softmax(logits[row])[target]` as a 1x1 node.
    pub fn cross_entropy(
        &mut self,
        logits: NodeId,
        row: usize,
        target: usize,
        weight: T,
    ) -> NodeId {
        let r = self.value(logits).row(row);
        let max = r.iter().fold(T::neg_infinity(), |m, &v| m.max(v));
        let exps: Vec<T> = r.iter().map(|&v| (v - max).exp()).collect();
        let z: T = exps.iter().copied().sum();
        let probs: Vec<T> = exps.iter().map(|&e| e / z).collect();
        let loss = weight * (z.ln() + max - r[target]);
        self.push(
            Mat::from_vec(1, 1, vec![loss]),
            Op::CrossEntropy {
                logits,
                row,
                target,
                weight,
                probs,
            },
        )
    }

    pub fn sum(&mut self, parts: &[NodeId]) -> NodeId {
        let total = parts.iter().map(|&p| self.value(p).data[0]).sum();
        self.push(Mat::from_vec(1, 1, vec![total]), Op::Sum(parts.to_vec()))
    }

    /// Gradients of the scalar node `loss` w.r.t. every parameter.
    pub fn backward(&self, loss: NodeId) -> Vec<Mat<T>> {
        let mut pgrads: Vec<Mat<T>> = self
            .params
            .iter()
            .map(|p| Mat::zeros(p.rows, p.cols))
            .collect();
        let mut grads: Vec<Option<Mat<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss] = Some(Mat::filled(1, 1, T::one()));

        for id in (0..=loss).rev() {
            let Some(g) = grads[id].take() else { continue };
            let mut sink = Sink {
                tape: self,
                grads: &mut grads,
                pgrads: &mut pgrads,
            };
            match &self.nodes[id].op {
                Op::Leaf | Op::Param(_) => {}
                Op::Gather { table, ids } => {
                    let t = &mut sink.pgrads[*table];
                    for (r, &i) in ids.iter().enumerate() {
                        for (x, &d) in t.row_mut(i).iter_mut().zip(g.row(r)) {
                            *x = *x + d;
                        }
                    }
                }
                &Op::MatMul(a, b) => {
                    // dA = G B^T, dB = A^T G
                    let (va, vb) = (self.value(a), self.value(b));
                    matmul_bt_into(&g, vb, sink.slot(a), true);
                    matmul_at_into(va, &g, sink.slot(b), true);
                }
                &Op::MatMulBT(a, b) => {
                    // C = A B^T: dA = G B, dB = G^T A
                    let (va, vb) = (self.value(a), self.value(b));
                    matmul_into(&g, vb, sink.slot(a), true);
                    matmul_at_into(&g, va, sink.slot(b), true);
                }
                &Op::RelBias {
                    a,
                    table,
                    row,
                    radius,
                    mult,
                } => {
                    sink.slot(a).add_assign(&g);
                    let t = sink.slot(table);
                    let r = t.row_mut(row);
                    for i in 0..g.rows {
                        for (j, &d) in g.row(i).iter().enumerate() {
                            let k = rel_index(i, j, radius);
                            r[k] = r[k] + mult * d;
                        }
                    }
                }
                &Op::Add(a, b) => {
                    sink.slot(a).add_assign(&g);
                    sink.slot(b).add_assign(&g);
                }
                &Op::AddRow(a, row) => {
                    sink.slot(a).add_assign(&g);
                    let r = sink.slot(row);
                    for i in 0..g.rows {
                        for (x, &d) in r.data.iter_mut().zip(g.row(i)) {
                            *x = *x + d;
                        }
                    }
                }
                &Op::MulRow(a, row) => {
                    let va = self.value(a);
                    let vr = self.value(row);
                    let da = sink.slot(a);
                    for i in 0..g.rows {
                        for ((x, &d), &w) in da.row_mut(i).iter_mut().zip(g.row(i)).zip(&vr.data) {
                            *x = *x + d * w;
                        }
                    }
                    let dr = sink.slot(row);
                    for i in 0..g.rows {
                        for ((x, &d), &v) in dr.data.iter_mut().zip(g.row(i)).zip(va.row(i)) {
                            *x = *x + d * v;
                        }
                    }
                }
                &Op::Gelu(a) => {
                    let c = T::from_f64_lossy(GELU_C);
                    let k = T::from_f64_lossy(GELU_A);
                    let half = T::from_f64_lossy(0.5);
                    let three = T::from_f64_lossy(3.0);
                    let va = self.value(a);
                    let da = sink.slot(a);
                    for ((x, &d), &v) in da.data.iter_mut().zip(&g.data).zip(&va.data) {
                        let t = (c * (v + k * v * v * v)).tanh();
                        let dv = half * (T::one() + t)
                            + half * v * (T::one() - t * t) * c * (T::one() + three * k * v * v);
                        *x = *x + d * dv;
                    }
                }
                Op::LayerNorm {
                    x,
                    gamma,
                    beta,
                    xhat,
                    rstd,
                } => {
                    let gm = self.value(*gamma);
                    let cols = xhat.cols;
                    let n = T::from_usize(cols).unwrap();
                    {
                        let dg = sink.slot(*gamma);
                        for i in 0..g.rows {
                            for j in 0..cols {
                                dg.data[j] =
                                    dg.data[j] + g.data[i * cols + j] * xhat.data[i * cols + j];
                            }
                        }
                    }
                    {
                        let db = sink.slot(*beta);
                        for i in 0..g.rows {
                            for j in 0..cols {
                                db.data[j] = db.data[j] + g.data[i * cols + j];
                            }
                        }
                    }
                    let dx = sink.slot(*x);
                    let mut dxhat = vec![T::zero(); cols];
                    for i in 0..g.rows {
                        let xh = xhat.row(i);
                        let mut m1 = T::zero();
                        let mut m2 = T::zero();
                        for j in 0..cols {
                            dxhat[j] = g.data[i * cols + j] * gm.data[j];
                            m1 = m1 + dxhat[j];
                            m2 = m2 + dxhat[j] * xh[j];
                        }
                        m1 = m1 / n;
                        m2 = m2 / n;
                        let out = dx.row_mut(i);
                        for j in 0..cols {
                            out[j] = out[j] + rstd[i] * (dxhat[j] - m1 - xh[j] * m2);
                        }
                    }
                }
                &Op::Softmax { a, scale } => {
                    let p = self.value(id);
                    let da = sink.slot(a);
                    for i in 0..p.rows {
                        let pr = p.row(i);
                        let gr = g.row(i);
                        let dot: T = pr.iter().zip(gr).map(|(&p, &g)| p * g).sum();
                        for ((x, &pv), &gv) in da.row_mut(i).iter_mut().zip(pr).zip(gr) {
                            *x = *x + scale * pv * (gv - dot);
                        }
                    }
                }
                &Op::SliceCols { a, start } => {
                    let da = sink.slot(a);
                    for i in 0..g.rows {
                        for (x, &d) in da.row_mut(i)[start..start + g.cols]
                            .iter_mut()
                            .zip(g.row(i))
                        {
                            *x = *x + d;
                        }
                    }
                }
                Op::ConcatCols(parts) => {
                    let mut off = 0;
                    for &p in parts {
                        let w = self.value(p).cols;
                        let dp = sink.slot(p);
                        for i in 0..g.rows {
                            for (x, &d) in dp.row_mut(i).iter_mut().zip(&g.row(i)[off..off + w]) {
                                *x = *x + d;
                            }
                        }
                        off += w;
                    }
                }
                Op::PoolRanges { a, ranges } => {
                    let da = sink.slot(*a);
                    for (k, r) in ranges.iter().enumerate() {
                        let inv = T::one() / T::from_usize(r.len()).unwrap();
                        for i in r.start..=r.end {
                            for (x, &d) in da.row_mut(i).iter_mut().zip(g.row(k)) {
                                *x = *x + d * inv;
                            }
                        }
                    }
                }
                &Op::ColAsRow { a, col } => {
                    let da = sink.slot(a);
                    let cols = da.cols;
                    for (i, &d) in g.data.iter().enumerate() {
                        da.data[i * cols + col] = da.data[i * cols + col] + d;
                    }
                }
                Op::Dropout { a, mask } => {
                    let da = sink.slot(*a);
                    for ((x, &d), &m) in da.data.iter_mut().zip(&g.data).zip(mask) {
                        *x = *x + d * m;
                    }
                }
                Op::CrossEntropy {
                    logits,
                    row,
                    target,
                    weight,
                    probs,
                } => {
                    let s = g.data[0] * *weight;
                    let dl = sink.slot(*logits);
                    let r = dl.row_mut(*row);
                    for (j, (x, &p)) in r.iter_mut().zip(probs).enumerate() {
                        let onehot = if j == *target { T::one() } else { T::zero() };
                        *x = *x + s * (p - onehot);
                    }
                }
                Op::Sum(parts) => {
                    for &p in parts {
                        let dp = sink.slot(p);
                        dp.data[0] = dp.data[0] + g.data[0];
                    }
                }
            }
        }
        pgrads
    }
}

/// Routes gradient writes either to a node buffer or, for parameter nodes,
/// straight into the parameter gradient.
fn rel_index(i: usize, j: usize, radius: usize) -> usize {
    let r = radius as isize;
    ((j as isize - i as isize).clamp(-r, r) + r) as usize
}

struct Sink<'s, 'p, T: Scalar> {
    tape: &'s Tape<'p, T>,
    grads: &'s mut Vec<Option<Mat<T>>>,
    pgrads: &'s mut Vec<Mat<T>>,
}

impl<T: Scalar> Sink<'_, '_, T> {
    fn slot(&mut self, id: NodeId) -> &mut Mat<T> {
        if let Op::Param(p) = self.tape.nodes[id].op {
            return &mut self.pgrads[p];
        }
        let v = self.tape.value(id);
        let (r, c) = (v.rows, v.cols);
        self.grads[id].get_or_insert_with(|| Mat::zeros(r, c))
    }
}
