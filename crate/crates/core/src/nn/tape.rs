//! Reverse-mode differentiation over dense row-major `f64` matrices.
//!
//! A [`Tape`] records every operation of one forward pass; [`Tape::backward`]
//! walks it in reverse. Graph operators (dot-product attention, neighbor
//! sums) are fused ops with hand-written adjoints. Scalars are 1 x 1 matrices.

use std::collections::HashMap;
use std::ops::Range;

use ndarray::{s, Array1, Array2, ArrayView1, Axis, Zip};

use super::params::{ParamId, ParamStore};
use crate::exec::Exec;
use crate::graph_builder::{Csr, EdgeList};

/// Handle to a value on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

/// How multi-head attention outputs are combined.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum HeadCombine {
    Concat,
    Mean,
}

struct GatCache {
    q: Var,
    k2: Var,
    k3: Var,
    v: Var,
    csr: Csr,
    heads: usize,
    head_dim: usize,
    combine: HeadCombine,
    /// Per CSR slot and head: attention weight.
    delta: Vec<f64>,
    /// Per CSR slot and head: normalized denominator weight.
    sigma: Vec<f64>,
}

enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    AddRow(Var, Var),
    MulRow(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Relu(Var),
    BatchNorm { x: Var, xhat: Array2<f64>, inv_std: Array1<f64> },
    NormConst { x: Var, inv_std: Array1<f64> },
    Dropout { x: Var, mask: Array2<f64> },
    ReplaceRows { x: Var, fill: Var, rows: Vec<usize> },
    Gat(Box<GatCache>),
    NeighborSum { x: Var, reverse: Csr },
    SelfScale { x: Var, eps: Var },
    ConcatCols(Var, Var),
    GatherRows { x: Var, idx: Vec<usize> },
    SegmentMean { x: Var, segments: Vec<Range<usize>> },
    MseRows { x: Var, target: Array2<f64> },
    CosinePow { x: Var, target: Array2<f64>, delta: f64, eps: f64 },
    BceLogits { logits: Var, labels: Array2<f64> },
    InfoNce { a: Var, b: Var, tau: f64, weights: Array2<f64> },
}

struct Node {
    value: Array2<f64>,
    op: Op,
}

/// Recorded forward pass.
pub struct Tape {
    nodes: Vec<Node>,
    params: HashMap<ParamId, Var>,
    exec: Exec,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

fn scalar(v: f64) -> Array2<f64> {
    Array2::from_elem((1, 1), v)
}

impl Tape {
    pub fn new() -> Self {
        Self::with_exec(Exec::default())
    }

    pub fn with_exec(exec: Exec) -> Self {
        Tape {
            nodes: Vec::new(),
            params: HashMap::new(),
            exec,
        }
    }

    fn push(&mut self, value: Array2<f64>, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Array2<f64> {
        &self.nodes[v.0].value
    }

    pub fn scalar_value(&self, v: Var) -> f64 {
        self.nodes[v.0].value[[0, 0]]
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Constant input; gradients are computed but usually ignored.
    pub fn leaf(&mut self, value: Array2<f64>) -> Var {
        self.push(value, Op::Leaf)
    }

    /// Trainable parameter. Repeated calls with the same id return the same
    /// handle, so gradients from every use accumulate.
    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Var {
        if let Some(&v) = self.params.get(&id) {
            return v;
        }
        let v = self.leaf(store.value(id).clone());
        self.params.insert(id, v);
        v
    }

    /// Parameter ids that were read during this pass.
    pub fn touched_params(&self) -> Vec<ParamId> {
        let mut ids: Vec<ParamId> = self.params.keys().copied().collect();
        ids.sort();
        ids
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let out = self.value(a).dot(self.value(b));
        self.push(out, Op::MatMul(a, b))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let out = self.value(a) + self.value(b);
        self.push(out, Op::Add(a, b))
    }

    /// `x + row` broadcast over rows; `row` is 1 x d.
    pub fn add_row(&mut self, x: Var, row: Var) -> Var {
        let out = self.value(x) + self.value(row);
        self.push(out, Op::AddRow(x, row))
    }

    /// `x * row` broadcast over rows; `row` is 1 x d.
    pub fn mul_row(&mut self, x: Var, row: Var) -> Var {
        let out = self.value(x) * self.value(row);
        self.push(out, Op::MulRow(x, row))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let out = self.value(a) * self.value(b);
        self.push(out, Op::Mul(a, b))
    }

    pub fn scale(&mut self, x: Var, c: f64) -> Var {
        let out = self.value(x) * c;
        self.push(out, Op::Scale(x, c))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let out = self.value(x).mapv(|v| v.max(0.0));
        self.push(out, Op::Relu(x))
    }

    /// Column-wise normalization with batch statistics (no affine part).
    /// Returns the output and the batch mean / biased variance.
    pub fn batch_norm(&mut self, x: Var, eps: f64) -> (Var, Array1<f64>, Array1<f64>) {
        let xv = self.value(x);
        let n = xv.nrows() as f64;
        let mean = xv.sum_axis(Axis(0)) / n;
        let centered = xv - &mean.view().insert_axis(Axis(0));
        let var = centered.mapv(|v| v * v).sum_axis(Axis(0)) / n;
        let inv_std = var.mapv(|v| 1.0 / (v + eps).sqrt());
        let xhat = &centered * &inv_std.view().insert_axis(Axis(0));
        let out = self.push(
            xhat.clone(),
            Op::BatchNorm {
                x,
                xhat,
                inv_std,
            },
        );
        (out, mean, var)
    }

    /// `(x - mean) / sqrt(var + eps)` with constant statistics.
    pub fn norm_const(&mut self, x: Var, mean: &Array1<f64>, var: &Array1<f64>, eps: f64) -> Var {
        let inv_std = var.mapv(|v| 1.0 / (v + eps).sqrt());
        let out = (self.value(x) - &mean.view().insert_axis(Axis(0))) * &inv_std.view().insert_axis(Axis(0));
        self.push(out, Op::NormConst { x, inv_std })
    }

    /// Inverted dropout with a precomputed keep mask (entries 0 or 1).
    pub fn dropout(&mut self, x: Var, keep: Array2<f64>, rate: f64) -> Var {
        let scale = if rate >= 1.0 { 0.0 } else { 1.0 / (1.0 - rate) };
        let mask = keep * scale;
        let out = self.value(x) * &mask;
        self.push(out, Op::Dropout { x, mask })
    }

    /// Replace the listed rows of `x` by the 1 x d row `fill`.
    pub fn replace_rows(&mut self, x: Var, fill: Var, rows: &[usize]) -> Var {
        let mut out = self.value(x).clone();
        let f = self.value(fill).row(0).to_owned();
        for &r in rows {
            out.row_mut(r).assign(&f);
        }
        self.push(
            out,
            Op::ReplaceRows {
                x,
                fill,
                rows: rows.to_vec(),
            },
        )
    }

    /// Dot-product graph attention with separate numerator and denominator
    /// keys. For target `i`, head `h` and incoming neighbors `N(i)`:
    /// `out_i = sum_j exp(q_i . k2_j) / sum_k exp(q_i . k3_k) * v_j`.
    /// `q`, `k2`, `k3`, `v` are M x (heads * head_dim); nodes without
    /// neighbors get a zero row.
    #[allow(clippy::too_many_arguments)]
    pub fn gat(
        &mut self,
        q: Var,
        k2: Var,
        k3: Var,
        v: Var,
        edges: &EdgeList,
        heads: usize,
        head_dim: usize,
        combine: HeadCombine,
    ) -> Var {
        let m = self.value(q).nrows();
        let csr = Csr::incoming(edges, m).expect("edge list validated by caller");
        let (qv, k2v, k3v, vv) = (self.value(q), self.value(k2), self.value(k3), self.value(v));
        let width = heads * head_dim;
        for a in [qv, k2v, k3v, vv] {
            assert_eq!(a.dim(), (m, width), "gat projections must be M x heads*head_dim");
        }
        let out_width = match combine {
            HeadCombine::Concat => width,
            HeadCombine::Mean => head_dim,
        };
        let per_node: Vec<(Vec<f64>, Vec<f64>, Vec<f64>)> = self.exec.map_range(m, |i| {
            let nbrs = csr.neighbors(i);
            let mut row = vec![0.0; out_width];
            let mut delta = vec![0.0; nbrs.len() * heads];
            let mut sigma = vec![0.0; nbrs.len() * heads];
            if nbrs.is_empty() {
                return (row, delta, sigma);
            }
            for h in 0..heads {
                let cols = h * head_dim..(h + 1) * head_dim;
                let qi = qv.slice(s![i, cols.clone()]);
                let num: Vec<f64> = nbrs.iter().map(|&j| qi.dot(&k2v.slice(s![j, cols.clone()]))).collect();
                let den: Vec<f64> = nbrs.iter().map(|&j| qi.dot(&k3v.slice(s![j, cols.clone()]))).collect();
                let shift = den.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let lse = shift + den.iter().map(|b| (b - shift).exp()).sum::<f64>().ln();
                for (s, &j) in nbrs.iter().enumerate() {
                    let d = (num[s] - lse).exp();
                    delta[s * heads + h] = d;
                    sigma[s * heads + h] = (den[s] - lse).exp();
                    let vj = vv.slice(s![j, cols.clone()]);
                    let base = match combine {
                        HeadCombine::Concat => h * head_dim,
                        HeadCombine::Mean => 0,
                    };
                    let w = match combine {
                        HeadCombine::Concat => d,
                        HeadCombine::Mean => d / heads as f64,
                    };
                    for c in 0..head_dim {
                        row[base + c] += w * vj[c];
                    }
                }
            }
            (row, delta, sigma)
        });
        let mut out = Array2::zeros((m, out_width));
        let mut delta = Vec::with_capacity(csr.sources.len() * heads);
        let mut sigma = Vec::with_capacity(csr.sources.len() * heads);
        for (i, (row, d, sg)) in per_node.into_iter().enumerate() {
            out.row_mut(i).assign(&ArrayView1::from(row.as_slice()));
            delta.extend(d);
            sigma.extend(sg);
        }
        self.push(
            out,
            Op::Gat(Box::new(GatCache {
                q,
                k2,
                k3,
                v,
                csr,
                heads,
                head_dim,
                combine,
                delta,
                sigma,
            })),
        )
    }

    /// Attention weights of the most recent [`Tape::gat`] output `out`, as
    /// `(target, source, head, weight)` tuples.
    pub fn attention_weights(&self, out: Var) -> Vec<(usize, usize, usize, f64)> {
        let Op::Gat(cache) = &self.nodes[out.0].op else {
            panic!("not a gat node");
        };
        let mut res = Vec::new();
        for i in 0..cache.csr.node_count() {
            for slot in cache.csr.offsets[i]..cache.csr.offsets[i + 1] {
                for h in 0..cache.heads {
                    res.push((i, cache.csr.sources[slot], h, cache.delta[slot * cache.heads + h]));
                }
            }
        }
        res
    }

    /// `out_i = sum over edges j -> i of x_j`.
    pub fn neighbor_sum(&mut self, x: Var, edges: &EdgeList) -> Var {
        let xv = self.value(x);
        let (n, d) = xv.dim();
        let csr = Csr::incoming(edges, n).expect("edge list validated by caller");
        let reversed = EdgeList {
            sources: edges.targets.clone(),
            targets: edges.sources.clone(),
        };
        let reverse = Csr::incoming(&reversed, n).expect("same node range");
        let out = gather_sum(self.exec, xv, &csr, d);
        self.push(out, Op::NeighborSum { x, reverse })
    }

    /// `(1 + eps) * x` with a learnable 1 x 1 `eps`.
    pub fn self_scale(&mut self, x: Var, eps: Var) -> Var {
        let e = self.scalar_value(eps);
        let out = self.value(x) * (1.0 + e);
        self.push(out, Op::SelfScale { x, eps })
    }

    pub fn concat_cols(&mut self, a: Var, b: Var) -> Var {
        let out = ndarray::concatenate(Axis(1), &[self.value(a).view(), self.value(b).view()])
            .expect("row counts match");
        self.push(out, Op::ConcatCols(a, b))
    }

    pub fn gather_rows(&mut self, x: Var, idx: &[usize]) -> Var {
        let out = self.value(x).select(Axis(0), idx);
        self.push(out, Op::GatherRows { x, idx: idx.to_vec() })
    }

    /// One mean row per segment.
    pub fn segment_mean(&mut self, x: Var, segments: &[Range<usize>]) -> Var {
        let xv = self.value(x);
        let mut out = Array2::zeros((segments.len(), xv.ncols()));
        for (r, seg) in segments.iter().enumerate() {
            let mean = xv.slice(s![seg.clone(), ..]).mean_axis(Axis(0)).expect("non-empty segment");
            out.row_mut(r).assign(&mean);
        }
        self.push(
            out,
            Op::SegmentMean {
                x,
                segments: segments.to_vec(),
            },
        )
    }

    /// `(1/M) sum_i ||x_i - t_i||^2`.
    pub fn mse_rows(&mut self, x: Var, target: &Array2<f64>) -> Var {
        let v = super::losses::reconstruction_loss(self.value(x), target);
        self.push(
            scalar(v),
            Op::MseRows {
                x,
                target: target.clone(),
            },
        )
    }

    /// `(1/M) sum_i (1 - cos(t_i, x_i))^delta` with norms floored at `eps`.
    pub fn cosine_pow(&mut self, x: Var, target: &Array2<f64>, delta: f64, eps: f64) -> Var {
        let v = super::losses::scaled_cosine_loss(target, self.value(x), delta, eps);
        self.push(
            scalar(v),
            Op::CosinePow {
                x,
                target: target.clone(),
                delta,
                eps,
            },
        )
    }

    /// Mean over rows of summed per-class binary cross-entropy on logits.
    pub fn bce_logits(&mut self, logits: Var, labels: &Array2<f64>) -> Var {
        let v = super::losses::multilabel_bce(self.value(logits), labels);
        self.push(
            scalar(v),
            Op::BceLogits {
                logits,
                labels: labels.clone(),
            },
        )
    }

    /// InfoNCE with cross-view negatives only (denominator excludes `j = i`).
    pub fn info_nce(&mut self, a: Var, b: Var, tau: f64) -> Var {
        let (v, weights) = super::losses::info_nce_with_weights(self.value(a), self.value(b), tau);
        self.push(scalar(v), Op::InfoNce { a, b, tau, weights })
    }

    /// Gradients of scalar `loss` with respect to every node.
    pub fn backward(&self, loss: Var) -> Gradients {
        assert_eq!(self.value(loss).dim(), (1, 1), "backward needs a scalar");
        let mut grads: Vec<Option<Array2<f64>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(scalar(1.0));
        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            self.propagate(idx, &g, &mut grads);
            grads[idx] = Some(g);
        }
        Gradients {
            grads,
            params: self.params.clone(),
        }
    }

    fn propagate(&self, idx: usize, g: &Array2<f64>, grads: &mut [Option<Array2<f64>>]) {
        let acc = |grads: &mut [Option<Array2<f64>>], v: Var, d: Array2<f64>| match &mut grads[v.0] {
            Some(existing) => *existing += &d,
            slot @ None => *slot = Some(d),
        };
        match &self.nodes[idx].op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let da = g.dot(&self.value(*b).t());
                let db = self.value(*a).t().dot(g);
                acc(grads, *a, da);
                acc(grads, *b, db);
            }
            Op::Add(a, b) => {
                acc(grads, *a, g.clone());
                acc(grads, *b, g.clone());
            }
            Op::AddRow(x, row) => {
                acc(grads, *x, g.clone());
                acc(grads, *row, g.sum_axis(Axis(0)).insert_axis(Axis(0)));
            }
            Op::MulRow(x, row) => {
                let r = self.value(*row);
                acc(grads, *x, g * r);
                let dr = (g * self.value(*x)).sum_axis(Axis(0)).insert_axis(Axis(0));
                acc(grads, *row, dr);
            }
            Op::Mul(a, b) => {
                acc(grads, *a, g * self.value(*b));
                acc(grads, *b, g * self.value(*a));
            }
            Op::Scale(x, c) => acc(grads, *x, g * *c),
            Op::Relu(x) => {
                let mut d = g.clone();
                Zip::from(&mut d)
                    .and(self.value(*x))
                    .for_each(|d, &xv| if xv <= 0.0 { *d = 0.0 });
                acc(grads, *x, d);
            }
            Op::BatchNorm { x, xhat, inv_std } => {
                let n = g.nrows() as f64;
                let sum_g = g.sum_axis(Axis(0));
                let sum_gx = (g * xhat).sum_axis(Axis(0));
                let mut d = g * n;
                d -= &sum_g.view().insert_axis(Axis(0));
                d -= &(xhat * &sum_gx.view().insert_axis(Axis(0)));
                d *= &(inv_std / n).view().insert_axis(Axis(0));
                acc(grads, *x, d);
            }
            Op::NormConst { x, inv_std } => {
                acc(grads, *x, g * &inv_std.view().insert_axis(Axis(0)));
            }
            Op::Dropout { x, mask } => acc(grads, *x, g * mask),
            Op::ReplaceRows { x, fill, rows } => {
                let mut dx = g.clone();
                let mut dfill = Array2::zeros((1, g.ncols()));
                for &r in rows {
                    dfill.row_mut(0).scaled_add(1.0, &g.row(r));
                    dx.row_mut(r).fill(0.0);
                }
                acc(grads, *x, dx);
                acc(grads, *fill, dfill);
            }
            Op::Gat(cache) => self.gat_backward(cache, g, grads),
            Op::NeighborSum { x, reverse } => {
                let d = gather_sum(self.exec, g, reverse, g.ncols());
                acc(grads, *x, d);
            }
            Op::SelfScale { x, eps } => {
                let e = self.scalar_value(*eps);
                acc(grads, *x, g * (1.0 + e));
                let de = (g * self.value(*x)).sum();
                acc(grads, *eps, scalar(de));
            }
            Op::ConcatCols(a, b) => {
                let wa = self.value(*a).ncols();
                acc(grads, *a, g.slice(s![.., ..wa]).to_owned());
                acc(grads, *b, g.slice(s![.., wa..]).to_owned());
            }
            Op::GatherRows { x, idx } => {
                let mut d = Array2::zeros(self.value(*x).dim());
                for (r, &src) in idx.iter().enumerate() {
                    d.row_mut(src).scaled_add(1.0, &g.row(r));
                }
                acc(grads, *x, d);
            }
            Op::SegmentMean { x, segments } => {
                let mut d = Array2::zeros(self.value(*x).dim());
                for (r, seg) in segments.iter().enumerate() {
                    let w = 1.0 / seg.len() as f64;
                    for i in seg.clone() {
                        d.row_mut(i).scaled_add(w, &g.row(r));
                    }
                }
                acc(grads, *x, d);
            }
            Op::MseRows { x, target } => {
                let m = target.nrows().max(1) as f64;
                let d = (self.value(*x) - target) * (2.0 * g[[0, 0]] / m);
                acc(grads, *x, d);
            }
            Op::CosinePow { x, target, delta, eps } => {
                let d = super::losses::scaled_cosine_grad(target, self.value(*x), *delta, *eps) * g[[0, 0]];
                acc(grads, *x, d);
            }
            Op::BceLogits { logits, labels } => {
                let p = labels.nrows().max(1) as f64;
                let z = self.value(*logits);
                let mut d = z.mapv(super::losses::sigmoid) - labels;
                d *= g[[0, 0]] / p;
                acc(grads, *logits, d);
            }
            Op::InfoNce { a, b, tau, weights } => {
                // weights hold dL/dS already divided by N
                let w = weights * g[[0, 0]];
                let da = w.dot(self.value(*b)) / *tau;
                let db = w.t().dot(self.value(*a)) / *tau;
                acc(grads, *a, da);
                acc(grads, *b, db);
            }
        }
    }

    fn gat_backward(&self, c: &GatCache, g: &Array2<f64>, grads: &mut [Option<Array2<f64>>]) {
        let (qv, k2v, k3v, vv) = (self.value(c.q), self.value(c.k2), self.value(c.k3), self.value(c.v));
        let (m, width) = qv.dim();
        let heads = c.heads;
        let hd = c.head_dim;
        let head_grad = |i: usize, h: usize, col: usize| -> f64 {
            match c.combine {
                HeadCombine::Concat => g[[i, h * hd + col]],
                HeadCombine::Mean => g[[i, col]] / heads as f64,
            }
        };
        // Per target node: dq row plus per-slot (A, B) coefficients.
        let per_node: Vec<(Vec<f64>, Vec<f64>, Vec<f64>)> = self.exec.map_range(m, |i| {
            let lo = c.csr.offsets[i];
            let nbrs = c.csr.neighbors(i);
            let mut dq = vec![0.0; width];
            let mut a_coef = vec![0.0; nbrs.len() * heads];
            let mut b_coef = vec![0.0; nbrs.len() * heads];
            for h in 0..heads {
                let cols = h * hd..(h + 1) * hd;
                let mut total = 0.0;
                for (s, &j) in nbrs.iter().enumerate() {
                    let vj = vv.slice(s![j, cols.clone()]);
                    let t: f64 = (0..hd).map(|col| head_grad(i, h, col) * vj[col]).sum();
                    let a = t * c.delta[(lo + s) * heads + h];
                    a_coef[s * heads + h] = a;
                    total += a;
                }
                for (s, &j) in nbrs.iter().enumerate() {
                    let b = -c.sigma[(lo + s) * heads + h] * total;
                    b_coef[s * heads + h] = b;
                    let a = a_coef[s * heads + h];
                    for col in 0..hd {
                        dq[h * hd + col] += a * k2v[[j, h * hd + col]] + b * k3v[[j, h * hd + col]];
                    }
                }
            }
            (dq, a_coef, b_coef)
        });
        let mut dq = Array2::zeros((m, width));
        let mut dk2 = Array2::zeros((m, width));
        let mut dk3 = Array2::zeros((m, width));
        let mut dv = Array2::zeros((m, width));
        for (i, (dq_row, a_coef, b_coef)) in per_node.into_iter().enumerate() {
            dq.row_mut(i).assign(&ArrayView1::from(dq_row.as_slice()));
            let lo = c.csr.offsets[i];
            for (s, &j) in c.csr.neighbors(i).iter().enumerate() {
                for h in 0..heads {
                    let a = a_coef[s * heads + h];
                    let b = b_coef[s * heads + h];
                    let d = c.delta[(lo + s) * heads + h];
                    for col in 0..hd {
                        let k = h * hd + col;
                        let qi = qv[[i, k]];
                        dk2[[j, k]] += a * qi;
                        dk3[[j, k]] += b * qi;
                        dv[[j, k]] += d * head_grad(i, h, col);
                    }
                }
            }
        }
        for (var, d) in [(c.q, dq), (c.k2, dk2), (c.k3, dk3), (c.v, dv)] {
            match &mut grads[var.0] {
                Some(existing) => *existing += &d,
                slot @ None => *slot = Some(d),
            }
        }
    }
}

fn gather_sum(exec: Exec, x: &Array2<f64>, csr: &Csr, d: usize) -> Array2<f64> {
    let n = csr.node_count();
    let mut data = vec![0.0; n * d];
    exec.for_each_row(&mut data, d, |i, row| {
        for &j in csr.neighbors(i) {
            for (r, v) in row.iter_mut().zip(x.row(j)) {
                *r += v;
            }
        }
    });
    Array2::from_shape_vec((n, d), data).expect("shape")
}

/// Result of [`Tape::backward`].
pub struct Gradients {
    grads: Vec<Option<Array2<f64>>>,
    params: HashMap<ParamId, Var>,
}

impl Gradients {
    /// Gradient of any recorded value; zeros-shaped `None` means unreached.
    pub fn get(&self, v: Var) -> Option<&Array2<f64>> {
        self.grads[v.0].as_ref()
    }

    /// Gradient for each parameter of `store`, zero when unused.
    pub fn for_params(&self, store: &ParamStore) -> Vec<Array2<f64>> {
        store
            .ids()
            .map(|id| {
                self.params
                    .get(&id)
                    .and_then(|v| self.grads[v.0].clone())
                    .unwrap_or_else(|| Array2::zeros(store.value(id).dim()))
            })
            .collect()
    }

    pub fn param(&self, id: ParamId) -> Option<&Array2<f64>> {
        self.params.get(&id).and_then(|v| self.grads[v.0].as_ref())
    }
}
