//! Reverse-mode automatic differentiation over dense matrices.
//!
//! A [`Tape`] records one forward pass as a sequence of primitive nodes.
//! [`Tape::backward`] walks the record in reverse and accumulates exact
//! gradients of a scalar loss into a [`ParamSet`]. Tapes are rebuilt every
//! forward pass; parameters persist outside the tape.
//!
//! Shape errors are construction-time panics naming the offending primitive.
//! All evaluation is single-threaded with fixed accumulation order, so
//! repeated runs are bit-identical.

use alloc::collections::BTreeMap;
use alloc::rc::Rc;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::mathx;
use crate::rng::stream_rng;
use crate::tensor::Matrix;

/// Slope of the leaky-relu used inside attention scoring.
pub const LEAKY_SLOPE: f64 = 0.2;
/// Lower clamp for logarithm inputs.
pub const LOG_EPS: f64 = 1e-10;

pub type ValueId = usize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct ParamId(pub(crate) usize);

/// Named trainable parameters with persistent gradient accumulators.
pub struct ParamSet {
    entries: Vec<ParamEntry>,
    by_name: BTreeMap<String, usize>,
    grads_ready: bool,
}

struct ParamEntry {
    name: String,
    value: Matrix,
    grad: Matrix,
}

impl ParamSet {
    pub fn new() -> Self {
        ParamSet { entries: Vec::new(), by_name: BTreeMap::new(), grads_ready: false }
    }

    /// Registers a parameter. Names must be unique.
    pub fn add(&mut self, name: &str, value: Matrix) -> ParamId {
        assert!(
            !self.by_name.contains_key(name),
            "duplicate parameter name {name:?}"
        );
        let id = self.entries.len();
        let grad = Matrix::zeros(value.rows(), value.cols());
        self.entries.push(ParamEntry { name: name.to_string(), value, grad });
        self.by_name.insert(name.to_string(), id);
        ParamId(id)
    }

    /// Uniform Glorot init seeded by `(seed, name)`, so a parameter's initial
    /// value depends only on its own name and the global seed.
    pub fn glorot(&mut self, name: &str, rows: usize, cols: usize, seed: u64) -> ParamId {
        let mut rng = stream_rng(seed, &alloc::format!("init/{name}"));
        let limit = mathx::sqrt(6.0 / (rows + cols) as f64);
        let mut m = Matrix::zeros(rows, cols);
        for v in m.as_mut_slice() {
            *v = (rng.gen::<f64>() * 2.0 - 1.0) * limit;
        }
        self.add(name, m)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.entries.len()).map(ParamId)
    }

    pub fn lookup(&self, name: &str) -> Option<ParamId> {
        self.by_name.get(name).copied().map(ParamId)
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.entries[id.0].name
    }

    pub fn value(&self, id: ParamId) -> &Matrix {
        &self.entries[id.0].value
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut Matrix {
        &mut self.entries[id.0].value
    }

    pub fn grad(&self, id: ParamId) -> &Matrix {
        &self.entries[id.0].grad
    }

    pub fn grad_mut(&mut self, id: ParamId) -> &mut Matrix {
        &mut self.entries[id.0].grad
    }

    /// Total number of scalar coordinates across all parameters.
    pub fn coord_count(&self) -> usize {
        self.entries.iter().map(|e| e.value.len()).sum()
    }

    pub fn zero_grads(&mut self) {
        for e in &mut self.entries {
            e.grad.fill(0.0);
        }
        self.grads_ready = false;
    }

    pub fn grads_ready(&self) -> bool {
        self.grads_ready
    }

    pub(crate) fn mark_grads_ready(&mut self) {
        self.grads_ready = true;
    }

    /// Sum of squared gradient norms per parameter prefix, for diagnostics.
    pub fn grad_norms(&self) -> Vec<(String, f64)> {
        self.entries
            .iter()
            .map(|e| (e.name.clone(), e.grad.frobenius_norm()))
            .collect()
    }

    pub fn value_norms(&self) -> Vec<(String, f64)> {
        self.entries
            .iter()
            .map(|e| (e.name.clone(), e.value.frobenius_norm()))
            .collect()
    }
}

impl Default for ParamSet {
    fn default() -> Self {
        Self::new()
    }
}

/// Attention edge structure, grouped contiguously by destination node.
///
/// Segment `seg[v]..seg[v+1]` holds the incoming edges of node `v`; `src[e]`
/// is the source node of edge `e`. Layers build these with the self edge
/// first in every segment.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AttGraph {
    pub n: usize,
    pub seg: Vec<usize>,
    pub src: Vec<u32>,
}

impl AttGraph {
    pub fn edge_count(&self) -> usize {
        self.src.len()
    }

    pub fn check(&self) {
        assert_eq!(self.seg.len(), self.n + 1, "AttGraph segment table length");
        assert_eq!(*self.seg.last().unwrap(), self.src.len());
    }
}

/// Per-edge lists of selection-type indices that activate the edge.
///
/// `list_of_edge[e]` indexes into `lists`; self edges use a list containing
/// every type so their weight is the total selection mass (1 for a one-hot
/// or softmax row).
#[derive(Debug, Clone)]
pub struct EdgeCompat {
    pub list_of_edge: Vec<u32>,
    pub lists: Vec<Vec<u32>>,
}

enum Op {
    Input,
    Param(ParamId),
    MatMul(ValueId, ValueId),
    Add(ValueId, ValueId),
    Sub(ValueId, ValueId),
    Mul(ValueId, ValueId),
    BiasAdd(ValueId, ValueId),
    ConcatCols(Vec<ValueId>),
    LeakyRelu(ValueId, f64),
    Elu(ValueId),
    Scale(ValueId, f64),
    Log(ValueId),
    Exp(ValueId),
    Abs(ValueId),
    Dropout(ValueId, Rc<Vec<f64>>),
    GatherRows(ValueId, Rc<Vec<u32>>),
    SegmentSum(ValueId, Rc<AttGraph>),
    RowSoftmax(ValueId, Option<Rc<Vec<bool>>>),
    CrossEntropyMean { probs: ValueId, node_ids: Rc<Vec<u32>>, labels: Rc<Vec<u32>> },
    MeanAll(ValueId),
    SumAll(ValueId),
    EdgeScores { x: ValueId, attn: ValueId, graph: Rc<AttGraph> },
    SegmentSoftmax { scores: ValueId, graph: Rc<AttGraph> },
    EdgeSelectWeights { sel: ValueId, graph: Rc<AttGraph>, compat: Rc<EdgeCompat> },
    SegmentDiv { num: ValueId, denom: ValueId, graph: Rc<AttGraph> },
    WeightedSum { alpha: ValueId, x: ValueId, graph: Rc<AttGraph> },
    StraightThrough { soft: ValueId },
}

struct Node {
    op: Op,
    value: Matrix,
    needs_grad: bool,
}

/// One recorded forward pass.
pub struct Tape {
    nodes: Vec<Node>,
}

impl Tape {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: ValueId) -> &Matrix {
        &self.nodes[id].value
    }

    fn push(&mut self, op: Op, value: Matrix, needs_grad: bool) -> ValueId {
        self.nodes.push(Node { op, value, needs_grad });
        self.nodes.len() - 1
    }

    fn ng(&self, id: ValueId) -> bool {
        self.nodes[id].needs_grad
    }

    /// A constant input; never receives gradients.
    pub fn input(&mut self, value: Matrix) -> ValueId {
        self.push(Op::Input, value, false)
    }

    /// Binds a parameter's current value as a leaf.
    pub fn param(&mut self, params: &ParamSet, id: ParamId) -> ValueId {
        self.push(Op::Param(id), params.value(id).clone(), true)
    }

    pub fn matmul(&mut self, a: ValueId, b: ValueId) -> ValueId {
        let (ar, ac) = self.value(a).shape();
        let (br, bc) = self.value(b).shape();
        assert_eq!(ac, br, "matmul: ({ar},{ac}) x ({br},{bc})");
        let v = self.value(a).matmul(self.value(b));
        let g = self.ng(a) || self.ng(b);
        self.push(Op::MatMul(a, b), v, g)
    }

    pub fn add(&mut self, a: ValueId, b: ValueId) -> ValueId {
        assert_eq!(self.value(a).shape(), self.value(b).shape(), "add: shape mismatch");
        let mut v = self.value(a).clone();
        v.add_assign(self.value(b));
        let g = self.ng(a) || self.ng(b);
        self.push(Op::Add(a, b), v, g)
    }

    pub fn sub(&mut self, a: ValueId, b: ValueId) -> ValueId {
        assert_eq!(self.value(a).shape(), self.value(b).shape(), "sub: shape mismatch");
        let bv = self.value(b);
        let v = Matrix::from_vec(
            bv.rows(),
            bv.cols(),
            self.value(a)
                .as_slice()
                .iter()
                .zip(bv.as_slice())
                .map(|(x, y)| x - y)
                .collect(),
        );
        let g = self.ng(a) || self.ng(b);
        self.push(Op::Sub(a, b), v, g)
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: ValueId, b: ValueId) -> ValueId {
        assert_eq!(self.value(a).shape(), self.value(b).shape(), "mul: shape mismatch");
        let bv = self.value(b);
        let v = Matrix::from_vec(
            bv.rows(),
            bv.cols(),
            self.value(a)
                .as_slice()
                .iter()
                .zip(bv.as_slice())
                .map(|(x, y)| x * y)
                .collect(),
        );
        let g = self.ng(a) || self.ng(b);
        self.push(Op::Mul(a, b), v, g)
    }

    /// `a` is `n x d`, `bias` is `1 x d`, broadcast over rows.
    pub fn bias_add(&mut self, a: ValueId, bias: ValueId) -> ValueId {
        let (_, d) = self.value(a).shape();
        assert_eq!(self.value(bias).shape(), (1, d), "bias_add: bias must be 1x{d}");
        let av = self.value(a);
        let bv = self.value(bias);
        let mut v = av.clone();
        for r in 0..v.rows() {
            let row = v.row_mut(r);
            for (x, &b) in row.iter_mut().zip(bv.as_slice()) {
                *x += b;
            }
        }
        let g = self.ng(a) || self.ng(bias);
        self.push(Op::BiasAdd(a, bias), v, g)
    }

    /// Concatenates matrices with equal row counts along columns.
    pub fn concat_cols(&mut self, parts: &[ValueId]) -> ValueId {
        assert!(!parts.is_empty(), "concat: no inputs");
        let rows = self.value(parts[0]).rows();
        let total: usize = parts
            .iter()
            .map(|&p| {
                assert_eq!(self.value(p).rows(), rows, "concat: row count mismatch");
                self.value(p).cols()
            })
            .sum();
        let mut v = Matrix::zeros(rows, total);
        for r in 0..rows {
            let mut off = 0;
            for &p in parts {
                let pv = self.value(p);
                let w = pv.cols();
                v.row_mut(r)[off..off + w].copy_from_slice(pv.row(r));
                off += w;
            }
        }
        let g = parts.iter().any(|&p| self.ng(p));
        self.push(Op::ConcatCols(parts.to_vec()), v, g)
    }

    pub fn leaky_relu(&mut self, a: ValueId, slope: f64) -> ValueId {
        let v = self.value(a).map(|x| if x > 0.0 { x } else { slope * x });
        let g = self.ng(a);
        self.push(Op::LeakyRelu(a, slope), v, g)
    }

    pub fn elu(&mut self, a: ValueId) -> ValueId {
        let v = self.value(a).map(|x| if x > 0.0 { x } else { mathx::exp_m1(x) });
        let g = self.ng(a);
        self.push(Op::Elu(a), v, g)
    }

    pub fn scale(&mut self, a: ValueId, c: f64) -> ValueId {
        let v = self.value(a).map(|x| c * x);
        let g = self.ng(a);
        self.push(Op::Scale(a, c), v, g)
    }

    /// Natural log with inputs clamped below at [`LOG_EPS`]; NaN passes
    /// through so a poisoned forward pass stays visibly poisoned.
    pub fn log(&mut self, a: ValueId) -> ValueId {
        let v = self
            .value(a)
            .map(|x| if x.is_nan() { x } else { mathx::ln(x.max(LOG_EPS)) });
        let g = self.ng(a);
        self.push(Op::Log(a), v, g)
    }

    pub fn exp(&mut self, a: ValueId) -> ValueId {
        let v = self.value(a).map(mathx::exp);
        let g = self.ng(a);
        self.push(Op::Exp(a), v, g)
    }

    pub fn abs(&mut self, a: ValueId) -> ValueId {
        let v = self.value(a).map(mathx::abs);
        let g = self.ng(a);
        self.push(Op::Abs(a), v, g)
    }

    /// Inverted dropout: kept entries are scaled by `1/(1-rate)`. The mask is
    /// drawn here, so evaluation-mode callers simply skip this node.
    pub fn dropout(&mut self, a: ValueId, rate: f64, rng: &mut ChaCha8Rng) -> ValueId {
        assert!((0.0..1.0).contains(&rate), "dropout: rate must be in [0,1)");
        if rate == 0.0 {
            return a;
        }
        let keep = 1.0 - rate;
        let n = self.value(a).len();
        let mask: Vec<f64> = (0..n)
            .map(|_| if rng.gen::<f64>() < keep { 1.0 / keep } else { 0.0 })
            .collect();
        let av = self.value(a);
        let v = Matrix::from_vec(
            av.rows(),
            av.cols(),
            av.as_slice().iter().zip(&mask).map(|(x, m)| x * m).collect(),
        );
        let g = self.ng(a);
        self.push(Op::Dropout(a, Rc::new(mask)), v, g)
    }

    pub fn gather_rows(&mut self, a: ValueId, indices: Rc<Vec<u32>>) -> ValueId {
        let av = self.value(a);
        let mut v = Matrix::zeros(indices.len(), av.cols());
        for (i, &r) in indices.iter().enumerate() {
            assert!((r as usize) < av.rows(), "gather-rows: index {r} out of range");
            v.row_mut(i).copy_from_slice(av.row(r as usize));
        }
        let g = self.ng(a);
        self.push(Op::GatherRows(a, indices), v, g)
    }

    /// Sums edge rows (`E x d`) into destination rows (`n x d`).
    pub fn segment_sum(&mut self, edges: ValueId, graph: Rc<AttGraph>) -> ValueId {
        graph.check();
        let ev = self.value(edges);
        assert_eq!(ev.rows(), graph.edge_count(), "segment-sum: edge row count");
        let mut v = Matrix::zeros(graph.n, ev.cols());
        for dst in 0..graph.n {
            for e in graph.seg[dst]..graph.seg[dst + 1] {
                let row = ev.row(e);
                let out = v.row_mut(dst);
                for (o, &x) in out.iter_mut().zip(row) {
                    *o += x;
                }
            }
        }
        let g = self.ng(edges);
        self.push(Op::SegmentSum(edges, graph), v, g)
    }

    /// Row softmax over unmasked entries; masked entries are zero.
    /// `mask`, when present, is row-major with `true` = participate.
    pub fn row_softmax(&mut self, a: ValueId, mask: Option<Rc<Vec<bool>>>) -> ValueId {
        let av = self.value(a);
        if let Some(m) = &mask {
            assert_eq!(m.len(), av.len(), "masked row-softmax: mask length");
        }
        let (rows, cols) = av.shape();
        let mut v = Matrix::zeros(rows, cols);
        for r in 0..rows {
            let x = av.row(r);
            let mrow = mask.as_ref().map(|m| &m[r * cols..(r + 1) * cols]);
            let unmasked = |c: usize| mrow.map_or(true, |m| m[c]);
            // NaN-sticky max: non-finite inputs must flow through to the
            // loss (where training aborts) rather than panic here.
            let mut mx = f64::NEG_INFINITY;
            let mut any = false;
            for c in 0..cols {
                if unmasked(c) {
                    any = true;
                    mx = if x[c].is_nan() || mx.is_nan() { f64::NAN } else { mx.max(x[c]) };
                }
            }
            assert!(any, "masked row-softmax: fully masked row {r}");
            let mut sum = 0.0;
            let out = v.row_mut(r);
            for c in 0..cols {
                if unmasked(c) {
                    let e = mathx::exp(x[c] - mx);
                    out[c] = e;
                    sum += e;
                }
            }
            for o in out.iter_mut() {
                *o /= sum;
            }
        }
        let g = self.ng(a);
        self.push(Op::RowSoftmax(a, mask), v, g)
    }

    /// Mean of `-log p[node, label]` over the listed nodes (the labeled set).
    pub fn cross_entropy_mean(
        &mut self,
        probs: ValueId,
        node_ids: Rc<Vec<u32>>,
        labels: Rc<Vec<u32>>,
    ) -> ValueId {
        assert!(!node_ids.is_empty(), "cross-entropy: empty labeled set");
        assert_eq!(node_ids.len(), labels.len(), "cross-entropy: ids vs labels length");
        let pv = self.value(probs);
        let mut acc = 0.0;
        for (&i, &y) in node_ids.iter().zip(labels.iter()) {
            assert!((i as usize) < pv.rows() && (y as usize) < pv.cols());
            let p = pv.get(i as usize, y as usize);
            // NaN must reach the loss; max() would silently replace it.
            let p = if p.is_nan() { p } else { p.max(LOG_EPS) };
            acc -= mathx::ln(p);
        }
        let v = Matrix::scalar(acc / node_ids.len() as f64);
        let g = self.ng(probs);
        self.push(Op::CrossEntropyMean { probs, node_ids, labels }, v, g)
    }

    pub fn mean_all(&mut self, a: ValueId) -> ValueId {
        let av = self.value(a);
        assert!(av.len() > 0, "mean: empty input");
        let v = Matrix::scalar(av.as_slice().iter().sum::<f64>() / av.len() as f64);
        let g = self.ng(a);
        self.push(Op::MeanAll(a), v, g)
    }

    pub fn sum_all(&mut self, a: ValueId) -> ValueId {
        let av = self.value(a);
        let v = Matrix::scalar(av.as_slice().iter().sum::<f64>());
        let g = self.ng(a);
        self.push(Op::SumAll(a), v, g)
    }

    /// Per-edge attention logits: `s_e = attn . leaky_relu(x[dst_e] + x[src_e])`.
    ///
    /// Fused so the `E x d` intermediate is never stored; the backward pass
    /// recomputes it per edge.
    pub fn edge_scores(&mut self, x: ValueId, attn: ValueId, graph: Rc<AttGraph>) -> ValueId {
        graph.check();
        let xv = self.value(x);
        let av = self.value(attn);
        assert_eq!(xv.rows(), graph.n, "edge-scores: node feature rows");
        assert_eq!(av.shape(), (xv.cols(), 1), "edge-scores: attention vector shape");
        let mut v = Matrix::zeros(graph.edge_count(), 1);
        for dst in 0..graph.n {
            let xd = xv.row(dst);
            for e in graph.seg[dst]..graph.seg[dst + 1] {
                let xs = xv.row(graph.src[e] as usize);
                let mut s = 0.0;
                for ((&a, &u), &w) in xd.iter().zip(xs).zip(av.as_slice()) {
                    let t = a + u;
                    s += w * if t > 0.0 { t } else { LEAKY_SLOPE * t };
                }
                v.set(e, 0, s);
            }
        }
        let g = self.ng(x) || self.ng(attn);
        self.push(Op::EdgeScores { x, attn, graph }, v, g)
    }

    /// Softmax of per-edge scores within each destination segment.
    pub fn segment_softmax(&mut self, scores: ValueId, graph: Rc<AttGraph>) -> ValueId {
        graph.check();
        let sv = self.value(scores);
        assert_eq!(sv.shape(), (graph.edge_count(), 1), "segment-softmax: score shape");
        let mut v = Matrix::zeros(graph.edge_count(), 1);
        for dst in 0..graph.n {
            let (lo, hi) = (graph.seg[dst], graph.seg[dst + 1]);
            if lo == hi {
                continue;
            }
            let mut mx = f64::NEG_INFINITY;
            for e in lo..hi {
                mx = mx.max(sv.get(e, 0));
            }
            let mut sum = 0.0;
            for e in lo..hi {
                let x = mathx::exp(sv.get(e, 0) - mx);
                v.set(e, 0, x);
                sum += x;
            }
            for e in lo..hi {
                v.set(e, 0, v.get(e, 0) / sum);
            }
        }
        let g = self.ng(scores);
        self.push(Op::SegmentSoftmax { scores, graph }, v, g)
    }

    /// Per-edge activation mass: `w_e = sum_i sel[dst_e, i]` over the type
    /// indices `i` whose neighborhood type activates edge `e`.
    pub fn edge_select_weights(
        &mut self,
        sel: ValueId,
        graph: Rc<AttGraph>,
        compat: Rc<EdgeCompat>,
    ) -> ValueId {
        graph.check();
        assert_eq!(compat.list_of_edge.len(), graph.edge_count(), "edge-select: list table");
        let selv = self.value(sel);
        assert_eq!(selv.rows(), graph.n, "edge-select: selection rows");
        let mut v = Matrix::zeros(graph.edge_count(), 1);
        for dst in 0..graph.n {
            let srow = selv.row(dst);
            for e in graph.seg[dst]..graph.seg[dst + 1] {
                let list = &compat.lists[compat.list_of_edge[e] as usize];
                let mut w = 0.0;
                for &t in list {
                    w += srow[t as usize];
                }
                v.set(e, 0, w);
            }
        }
        let g = self.ng(sel);
        self.push(Op::EdgeSelectWeights { sel, graph, compat }, v, g)
    }

    /// Divides each edge entry by its destination's value (`denom` is `n x 1`).
    pub fn segment_div(&mut self, num: ValueId, denom: ValueId, graph: Rc<AttGraph>) -> ValueId {
        graph.check();
        assert_eq!(self.value(num).shape(), (graph.edge_count(), 1), "segment-div: numerator");
        assert_eq!(self.value(denom).shape(), (graph.n, 1), "segment-div: denominator");
        let nv = self.value(num);
        let dv = self.value(denom);
        let mut v = Matrix::zeros(graph.edge_count(), 1);
        for dst in 0..graph.n {
            let d = dv.get(dst, 0);
            for e in graph.seg[dst]..graph.seg[dst + 1] {
                v.set(e, 0, nv.get(e, 0) / d);
            }
        }
        let g = self.ng(num) || self.ng(denom);
        self.push(Op::SegmentDiv { num, denom, graph }, v, g)
    }

    /// `out[v] = sum over incoming edges e of alpha_e * x[src_e]`.
    pub fn weighted_neighbor_sum(
        &mut self,
        alpha: ValueId,
        x: ValueId,
        graph: Rc<AttGraph>,
    ) -> ValueId {
        graph.check();
        assert_eq!(self.value(alpha).shape(), (graph.edge_count(), 1), "weighted-sum: alpha");
        assert_eq!(self.value(x).rows(), graph.n, "weighted-sum: feature rows");
        let av = self.value(alpha);
        let xv = self.value(x);
        let mut v = Matrix::zeros(graph.n, xv.cols());
        for dst in 0..graph.n {
            for e in graph.seg[dst]..graph.seg[dst + 1] {
                let a = av.get(e, 0);
                if a == 0.0 {
                    continue;
                }
                let xs = xv.row(graph.src[e] as usize);
                let out = v.row_mut(dst);
                for (o, &u) in out.iter_mut().zip(xs) {
                    *o += a * u;
                }
            }
        }
        let g = self.ng(alpha) || self.ng(x);
        self.push(Op::WeightedSum { alpha, x, graph }, v, g)
    }

    /// Straight-through discretization: the forward value is the exact one-hot
    /// of `hard`; the backward pass routes the incoming gradient to `soft`
    /// unchanged. This is the one deliberately surrogate gradient in the crate.
    pub fn straight_through(&mut self, soft: ValueId, hard: Rc<Vec<u32>>) -> ValueId {
        let sv = self.value(soft);
        assert_eq!(sv.rows(), hard.len(), "straight-through: row count");
        let mut v = Matrix::zeros(sv.rows(), sv.cols());
        for (r, &h) in hard.iter().enumerate() {
            assert!((h as usize) < sv.cols(), "straight-through: hard index range");
            v.set(r, h as usize, 1.0);
        }
        let g = self.ng(soft);
        self.push(Op::StraightThrough { soft }, v, g)
    }

    /// Reverse pass from a scalar `loss`, accumulating into `params`' grads.
    pub fn backward(&mut self, loss: ValueId, params: &mut ParamSet) {
        assert_eq!(self.value(loss).shape(), (1, 1), "backward: loss must be scalar");
        let mut grads: Vec<Option<Matrix>> = vec![None; self.nodes.len()];
        grads[loss] = Some(Matrix::scalar(1.0));

        for id in (0..=loss).rev() {
            if !self.nodes[id].needs_grad {
                continue;
            }
            let Some(g) = grads[id].take() else { continue };
            self.dispatch_backward(id, &g, &mut grads, params);
        }
        params.mark_grads_ready();
    }

    fn ensure<'a>(
        grads: &'a mut [Option<Matrix>],
        id: ValueId,
        shape: (usize, usize),
    ) -> &'a mut Matrix {
        if grads[id].is_none() {
            grads[id] = Some(Matrix::zeros(shape.0, shape.1));
        }
        grads[id].as_mut().unwrap()
    }

    #[allow(clippy::too_many_lines)]
    fn dispatch_backward(
        &self,
        id: ValueId,
        g: &Matrix,
        grads: &mut [Option<Matrix>],
        params: &mut ParamSet,
    ) {
        match &self.nodes[id].op {
            Op::Input => {}
            Op::Param(pid) => {
                params.grad_mut(*pid).add_assign(g);
            }
            Op::MatMul(a, b) => {
                let av = &self.nodes[*a].value;
                let bv = &self.nodes[*b].value;
                if self.ng(*a) {
                    let da = g.matmul_nt(bv);
                    Tape::ensure(grads, *a, av.shape()).add_assign(&da);
                }
                if self.ng(*b) {
                    let db = av.matmul_tn(g);
                    Tape::ensure(grads, *b, bv.shape()).add_assign(&db);
                }
            }
            Op::Add(a, b) => {
                for &x in &[*a, *b] {
                    if self.ng(x) {
                        Tape::ensure(grads, x, g.shape()).add_assign(g);
                    }
                }
            }
            Op::Sub(a, b) => {
                if self.ng(*a) {
                    Tape::ensure(grads, *a, g.shape()).add_assign(g);
                }
                if self.ng(*b) {
                    let gb = Tape::ensure(grads, *b, g.shape());
                    for (o, &x) in gb.as_mut_slice().iter_mut().zip(g.as_slice()) {
                        *o -= x;
                    }
                }
            }
            Op::Mul(a, b) => {
                if self.ng(*a) {
                    let bv = self.nodes[*b].value.clone();
                    let ga = Tape::ensure(grads, *a, g.shape());
                    for ((o, &x), &y) in
                        ga.as_mut_slice().iter_mut().zip(g.as_slice()).zip(bv.as_slice())
                    {
                        *o += x * y;
                    }
                }
                if self.ng(*b) {
                    let av = self.nodes[*a].value.clone();
                    let gb = Tape::ensure(grads, *b, g.shape());
                    for ((o, &x), &y) in
                        gb.as_mut_slice().iter_mut().zip(g.as_slice()).zip(av.as_slice())
                    {
                        *o += x * y;
                    }
                }
            }
            Op::BiasAdd(a, bias) => {
                if self.ng(*a) {
                    Tape::ensure(grads, *a, g.shape()).add_assign(g);
                }
                if self.ng(*bias) {
                    let d = g.cols();
                    let gb = Tape::ensure(grads, *bias, (1, d));
                    for r in 0..g.rows() {
                        for (o, &x) in gb.as_mut_slice().iter_mut().zip(g.row(r)) {
                            *o += x;
                        }
                    }
                }
            }
            Op::ConcatCols(parts) => {
                let mut off = 0;
                for &p in parts {
                    let w = self.nodes[p].value.cols();
                    if self.ng(p) {
                        let shape = self.nodes[p].value.shape();
                        let gp = Tape::ensure(grads, p, shape);
                        for r in 0..g.rows() {
                            let src = &g.row(r)[off..off + w];
                            for (o, &x) in gp.row_mut(r).iter_mut().zip(src) {
                                *o += x;
                            }
                        }
                    }
                    off += w;
                }
            }
            Op::LeakyRelu(a, slope) => {
                if self.ng(*a) {
                    let av = self.nodes[*a].value.clone();
                    let ga = Tape::ensure(grads, *a, g.shape());
                    for ((o, &x), &inp) in
                        ga.as_mut_slice().iter_mut().zip(g.as_slice()).zip(av.as_slice())
                    {
                        *o += x * if inp > 0.0 { 1.0 } else { *slope };
                    }
                }
            }
            Op::Elu(a) => {
                if self.ng(*a) {
                    let av = self.nodes[*a].value.clone();
                    let yv = self.nodes[id].value.clone();
                    let ga = Tape::ensure(grads, *a, g.shape());
                    for (((o, &x), &inp), &y) in ga
                        .as_mut_slice()
                        .iter_mut()
                        .zip(g.as_slice())
                        .zip(av.as_slice())
                        .zip(yv.as_slice())
                    {
                        *o += x * if inp > 0.0 { 1.0 } else { y + 1.0 };
                    }
                }
            }
            Op::Scale(a, c) => {
                if self.ng(*a) {
                    let c = *c;
                    let ga = Tape::ensure(grads, *a, g.shape());
                    for (o, &x) in ga.as_mut_slice().iter_mut().zip(g.as_slice()) {
                        *o += c * x;
                    }
                }
            }
            Op::Log(a) => {
                if self.ng(*a) {
                    let av = self.nodes[*a].value.clone();
                    let ga = Tape::ensure(grads, *a, g.shape());
                    for ((o, &x), &inp) in
                        ga.as_mut_slice().iter_mut().zip(g.as_slice()).zip(av.as_slice())
                    {
                        if inp >= LOG_EPS {
                            *o += x / inp;
                        }
                    }
                }
            }
            Op::Exp(a) => {
                if self.ng(*a) {
                    let yv = self.nodes[id].value.clone();
                    let ga = Tape::ensure(grads, *a, g.shape());
                    for ((o, &x), &y) in
                        ga.as_mut_slice().iter_mut().zip(g.as_slice()).zip(yv.as_slice())
                    {
                        *o += x * y;
                    }
                }
            }
            Op::Abs(a) => {
                if self.ng(*a) {
                    let av = self.nodes[*a].value.clone();
                    let ga = Tape::ensure(grads, *a, g.shape());
                    for ((o, &x), &inp) in
                        ga.as_mut_slice().iter_mut().zip(g.as_slice()).zip(av.as_slice())
                    {
                        *o += x * if inp > 0.0 { 1.0 } else if inp < 0.0 { -1.0 } else { 0.0 };
                    }
                }
            }
            Op::Dropout(a, mask) => {
                if self.ng(*a) {
                    let mask = Rc::clone(mask);
                    let ga = Tape::ensure(grads, *a, g.shape());
                    for ((o, &x), &m) in
                        ga.as_mut_slice().iter_mut().zip(g.as_slice()).zip(mask.iter())
                    {
                        *o += x * m;
                    }
                }
            }
            Op::GatherRows(a, indices) => {
                if self.ng(*a) {
                    let indices = Rc::clone(indices);
                    let shape = self.nodes[*a].value.shape();
                    let ga = Tape::ensure(grads, *a, shape);
                    for (i, &r) in indices.iter().enumerate() {
                        for (o, &x) in ga.row_mut(r as usize).iter_mut().zip(g.row(i)) {
                            *o += x;
                        }
                    }
                }
            }
            Op::SegmentSum(edges, graph) => {
                if self.ng(*edges) {
                    let graph = Rc::clone(graph);
                    let shape = self.nodes[*edges].value.shape();
                    let ge = Tape::ensure(grads, *edges, shape);
                    for dst in 0..graph.n {
                        for e in graph.seg[dst]..graph.seg[dst + 1] {
                            for (o, &x) in ge.row_mut(e).iter_mut().zip(g.row(dst)) {
                                *o += x;
                            }
                        }
                    }
                }
            }
            Op::RowSoftmax(a, mask) => {
                if self.ng(*a) {
                    let y = self.nodes[id].value.clone();
                    let mask = mask.clone();
                    let cols = y.cols();
                    let ga = Tape::ensure(grads, *a, y.shape());
                    for r in 0..y.rows() {
                        let yr = y.row(r);
                        let gr = g.row(r);
                        let mrow = mask.as_ref().map(|m| &m[r * cols..(r + 1) * cols]);
                        let live = |c: usize| mrow.map_or(true, |m| m[c]);
                        let dot: f64 = (0..cols)
                            .filter(|&c| live(c))
                            .map(|c| gr[c] * yr[c])
                            .sum();
                        let out = ga.row_mut(r);
                        for c in 0..cols {
                            if live(c) {
                                out[c] += yr[c] * (gr[c] - dot);
                            }
                        }
                    }
                }
            }
            Op::CrossEntropyMean { probs, node_ids, labels } => {
                if self.ng(*probs) {
                    let pv = self.nodes[*probs].value.clone();
                    let (node_ids, labels) = (Rc::clone(node_ids), Rc::clone(labels));
                    let gs = g.item();
                    let n = node_ids.len() as f64;
                    let gp = Tape::ensure(grads, *probs, pv.shape());
                    for (&i, &y) in node_ids.iter().zip(labels.iter()) {
                        let p = pv.get(i as usize, y as usize);
                        if p >= LOG_EPS {
                            let cur = gp.get(i as usize, y as usize);
                            gp.set(i as usize, y as usize, cur - gs / (n * p));
                        }
                    }
                }
            }
            Op::MeanAll(a) => {
                if self.ng(*a) {
                    let shape = self.nodes[*a].value.shape();
                    let n = (shape.0 * shape.1) as f64;
                    let gs = g.item() / n;
                    let ga = Tape::ensure(grads, *a, shape);
                    for o in ga.as_mut_slice() {
                        *o += gs;
                    }
                }
            }
            Op::SumAll(a) => {
                if self.ng(*a) {
                    let shape = self.nodes[*a].value.shape();
                    let gs = g.item();
                    let ga = Tape::ensure(grads, *a, shape);
                    for o in ga.as_mut_slice() {
                        *o += gs;
                    }
                }
            }
            Op::EdgeScores { x, attn, graph } => {
                let graph = Rc::clone(graph);
                let xv = self.nodes[*x].value.clone();
                let av = self.nodes[*attn].value.clone();
                let d = xv.cols();
                if self.ng(*x) {
                    let gx = Tape::ensure(grads, *x, xv.shape());
                    for dst in 0..graph.n {
                        for e in graph.seg[dst]..graph.seg[dst + 1] {
                            let ge = g.get(e, 0);
                            if ge == 0.0 {
                                continue;
                            }
                            let srcn = graph.src[e] as usize;
                            for j in 0..d {
                                let t = xv.get(dst, j) + xv.get(srcn, j);
                                let slope = if t > 0.0 { 1.0 } else { LEAKY_SLOPE };
                                let u = ge * slope * av.get(j, 0);
                                gx.set(dst, j, gx.get(dst, j) + u);
                                gx.set(srcn, j, gx.get(srcn, j) + u);
                            }
                        }
                    }
                }
                if self.ng(*attn) {
                    let ga = Tape::ensure(grads, *attn, av.shape());
                    for dst in 0..graph.n {
                        for e in graph.seg[dst]..graph.seg[dst + 1] {
                            let ge = g.get(e, 0);
                            if ge == 0.0 {
                                continue;
                            }
                            let srcn = graph.src[e] as usize;
                            for j in 0..d {
                                let t = xv.get(dst, j) + xv.get(srcn, j);
                                let act = if t > 0.0 { t } else { LEAKY_SLOPE * t };
                                ga.set(j, 0, ga.get(j, 0) + ge * act);
                            }
                        }
                    }
                }
            }
            Op::SegmentSoftmax { scores, graph } => {
                if self.ng(*scores) {
                    let graph = Rc::clone(graph);
                    let alpha = self.nodes[id].value.clone();
                    let gs = Tape::ensure(grads, *scores, alpha.shape());
                    for dst in 0..graph.n {
                        let (lo, hi) = (graph.seg[dst], graph.seg[dst + 1]);
                        let mut dot = 0.0;
                        for e in lo..hi {
                            dot += g.get(e, 0) * alpha.get(e, 0);
                        }
                        for e in lo..hi {
                            let a = alpha.get(e, 0);
                            gs.set(e, 0, gs.get(e, 0) + a * (g.get(e, 0) - dot));
                        }
                    }
                }
            }
            Op::EdgeSelectWeights { sel, graph, compat } => {
                if self.ng(*sel) {
                    let graph = Rc::clone(graph);
                    let compat = Rc::clone(compat);
                    let shape = self.nodes[*sel].value.shape();
                    let gsel = Tape::ensure(grads, *sel, shape);
                    for dst in 0..graph.n {
                        for e in graph.seg[dst]..graph.seg[dst + 1] {
                            let ge = g.get(e, 0);
                            if ge == 0.0 {
                                continue;
                            }
                            let list = &compat.lists[compat.list_of_edge[e] as usize];
                            let row = gsel.row_mut(dst);
                            for &t in list {
                                row[t as usize] += ge;
                            }
                        }
                    }
                }
            }
            Op::SegmentDiv { num, denom, graph } => {
                let graph = Rc::clone(graph);
                let nv = self.nodes[*num].value.clone();
                let dv = self.nodes[*denom].value.clone();
                if self.ng(*num) {
                    let gn = Tape::ensure(grads, *num, nv.shape());
                    for dst in 0..graph.n {
                        let d = dv.get(dst, 0);
                        for e in graph.seg[dst]..graph.seg[dst + 1] {
                            gn.set(e, 0, gn.get(e, 0) + g.get(e, 0) / d);
                        }
                    }
                }
                if self.ng(*denom) {
                    let gd = Tape::ensure(grads, *denom, dv.shape());
                    for dst in 0..graph.n {
                        let d = dv.get(dst, 0);
                        let mut acc = 0.0;
                        for e in graph.seg[dst]..graph.seg[dst + 1] {
                            acc -= g.get(e, 0) * nv.get(e, 0) / (d * d);
                        }
                        gd.set(dst, 0, gd.get(dst, 0) + acc);
                    }
                }
            }
            Op::WeightedSum { alpha, x, graph } => {
                let graph = Rc::clone(graph);
                let av = self.nodes[*alpha].value.clone();
                let xv = self.nodes[*x].value.clone();
                if self.ng(*alpha) {
                    let ga = Tape::ensure(grads, *alpha, av.shape());
                    for dst in 0..graph.n {
                        for e in graph.seg[dst]..graph.seg[dst + 1] {
                            let xs = xv.row(graph.src[e] as usize);
                            let mut dot = 0.0;
                            for (&gg, &u) in g.row(dst).iter().zip(xs) {
                                dot += gg * u;
                            }
                            ga.set(e, 0, ga.get(e, 0) + dot);
                        }
                    }
                }
                if self.ng(*x) {
                    let gx = Tape::ensure(grads, *x, xv.shape());
                    for dst in 0..graph.n {
                        for e in graph.seg[dst]..graph.seg[dst + 1] {
                            let a = av.get(e, 0);
                            if a == 0.0 {
                                continue;
                            }
                            let srcn = graph.src[e] as usize;
                            for (o, &gg) in gx.row_mut(srcn).iter_mut().zip(g.row(dst)) {
                                *o += a * gg;
                            }
                        }
                    }
                }
            }
            Op::StraightThrough { soft } => {
                if self.ng(*soft) {
                    Tape::ensure(grads, *soft, g.shape()).add_assign(g);
                }
            }
        }
    }
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}
