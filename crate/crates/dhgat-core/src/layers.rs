//! Graph layers as tape expressions: multi-head GATv2 with optional
//! per-edge selection weighting, a degree-normalized convolution baseline,
//! and a dense classification head.

use alloc::rc::Rc;
use alloc::vec::Vec;

use crate::mathx;
use crate::tape::{AttGraph, ParamId, ParamSet, Tape, ValueId};

/// One attention head: a shared projection and an attention vector.
#[derive(Debug, Clone)]
pub struct Gatv2Head {
    pub w: ParamId,
    pub a: ParamId,
}

/// Multi-head GATv2. Scores are `a . leaky_relu(W h_dst + W h_src)` over
/// each node's incoming edges (self edge included), softmaxed per node.
/// Heads run on the same adjacency and their outputs are concatenated.
#[derive(Debug, Clone)]
pub struct Gatv2Layer {
    pub heads: Vec<Gatv2Head>,
    pub in_dim: usize,
    pub head_dim: usize,
}

impl Gatv2Layer {
    /// Parameter names are `{prefix}.h{j}.w` and `{prefix}.h{j}.a`, so two
    /// models sharing a prefix and seed start from identical weights.
    pub fn init(
        params: &mut ParamSet,
        prefix: &str,
        in_dim: usize,
        head_dim: usize,
        head_count: usize,
        seed: u64,
    ) -> Self {
        assert!(head_count > 0, "attention layer needs at least one head");
        let heads = (0..head_count)
            .map(|j| Gatv2Head {
                w: params.glorot(&alloc::format!("{prefix}.h{j}.w"), in_dim, head_dim, seed),
                a: params.glorot(&alloc::format!("{prefix}.h{j}.a"), head_dim, 1, seed),
            })
            .collect();
        Gatv2Layer { heads, in_dim, head_dim }
    }

    pub fn out_dim(&self) -> usize {
        self.head_dim * self.heads.len()
    }

    /// Builds the layer on the tape.
    ///
    /// `select_weights`, when present, is an `E x 1` per-edge activation mass
    /// in `[0,1]`; attention is multiplied by it and renormalized per node,
    /// which reproduces a softmax restricted to the active edges when the
    /// weights are 0/1. `activate` applies elu to each head (representation
    /// layers); score-producing layers leave it off.
    pub fn forward(
        &self,
        t: &mut Tape,
        params: &ParamSet,
        x: ValueId,
        graph: &Rc<AttGraph>,
        select_weights: Option<ValueId>,
        activate: bool,
    ) -> ValueId {
        assert_eq!(t.value(x).cols(), self.in_dim, "attention layer input width");
        let mut outs = Vec::with_capacity(self.heads.len());
        for head in &self.heads {
            let w = t.param(params, head.w);
            let a = t.param(params, head.a);
            let xw = t.matmul(x, w);
            let scores = t.edge_scores(xw, a, Rc::clone(graph));
            let mut alpha = t.segment_softmax(scores, Rc::clone(graph));
            if let Some(wts) = select_weights {
                let masked = t.mul(alpha, wts);
                let denom = t.segment_sum(masked, Rc::clone(graph));
                alpha = t.segment_div(masked, denom, Rc::clone(graph));
            }
            let h = t.weighted_neighbor_sum(alpha, xw, Rc::clone(graph));
            outs.push(if activate { t.elu(h) } else { h });
        }
        if outs.len() == 1 {
            outs[0]
        } else {
            t.concat_cols(&outs)
        }
    }
}

/// Degree-normalized graph convolution over a fixed adjacency: self loops
/// added, coefficients `1/sqrt((deg_v+1)(deg_u+1))`, learned bias, elu.
#[derive(Debug, Clone)]
pub struct GcnLayer {
    pub w: ParamId,
    pub b: ParamId,
    pub in_dim: usize,
    pub out_dim: usize,
}

/// Precomputed convolution structure: attention-graph layout plus constant
/// per-edge coefficients.
#[derive(Debug, Clone)]
pub struct GcnGraph {
    pub att: Rc<AttGraph>,
    pub coeff: Vec<f64>,
}

impl GcnGraph {
    /// Derives coefficients from an attention layout whose segments already
    /// contain the self edge.
    pub fn from_attention(att: &Rc<AttGraph>) -> Self {
        let deg = |v: usize| (att.seg[v + 1] - att.seg[v]) as f64; // neighbors + self
        let mut coeff = Vec::with_capacity(att.edge_count());
        for v in 0..att.n {
            for e in att.seg[v]..att.seg[v + 1] {
                let u = att.src[e] as usize;
                coeff.push(1.0 / mathx::sqrt(deg(v) * deg(u)));
            }
        }
        GcnGraph { att: Rc::clone(att), coeff }
    }
}

impl GcnLayer {
    pub fn init(
        params: &mut ParamSet,
        prefix: &str,
        in_dim: usize,
        out_dim: usize,
        seed: u64,
    ) -> Self {
        GcnLayer {
            w: params.glorot(&alloc::format!("{prefix}.w"), in_dim, out_dim, seed),
            b: params.add(&alloc::format!("{prefix}.b"), crate::tensor::Matrix::zeros(1, out_dim)),
            in_dim,
            out_dim,
        }
    }

    pub fn forward(
        &self,
        t: &mut Tape,
        params: &ParamSet,
        x: ValueId,
        graph: &GcnGraph,
        activate: bool,
    ) -> ValueId {
        assert_eq!(t.value(x).cols(), self.in_dim, "convolution layer input width");
        let w = t.param(params, self.w);
        let b = t.param(params, self.b);
        let xw = t.matmul(x, w);
        let coeff = t.input(crate::tensor::Matrix::from_vec(
            graph.coeff.len(),
            1,
            graph.coeff.clone(),
        ));
        let agg = t.weighted_neighbor_sum(coeff, xw, Rc::clone(&graph.att));
        let h = t.bias_add(agg, b);
        if activate {
            t.elu(h)
        } else {
            h
        }
    }
}

/// Dense head: elu between layers, raw logits out.
#[derive(Debug, Clone)]
pub struct Mlp {
    pub layers: Vec<(ParamId, ParamId)>,
    pub dims: Vec<usize>,
}

impl Mlp {
    /// `dims` runs input..output, e.g. `[128, 64, 6]`.
    pub fn init(params: &mut ParamSet, prefix: &str, dims: &[usize], seed: u64) -> Self {
        assert!(dims.len() >= 2, "dense head needs input and output dims");
        let layers = (0..dims.len() - 1)
            .map(|i| {
                (
                    params.glorot(&alloc::format!("{prefix}.l{i}.w"), dims[i], dims[i + 1], seed),
                    params.add(
                        &alloc::format!("{prefix}.l{i}.b"),
                        crate::tensor::Matrix::zeros(1, dims[i + 1]),
                    ),
                )
            })
            .collect();
        Mlp { layers, dims: dims.to_vec() }
    }

    pub fn forward(&self, t: &mut Tape, params: &ParamSet, x: ValueId) -> ValueId {
        let mut h = x;
        let last = self.layers.len() - 1;
        for (i, &(w, b)) in self.layers.iter().enumerate() {
            let wv = t.param(params, w);
            let bv = t.param(params, b);
            let z = t.matmul(h, wv);
            let z = t.bias_add(z, bv);
            h = if i < last { t.elu(z) } else { z };
        }
        h
    }
}
