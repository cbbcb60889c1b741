//! The decision/representation model and its baselines.
//!
//! Each layer first runs a decision attention network over the full union
//! graph to give every node a distribution over neighborhood types, then
//! discretizes a selection (Gumbel noise + straight-through during
//! training, plain argmax at evaluation), and finally runs a representation
//! attention layer whose per-edge attention is restricted to edges the
//! selected type activates. A dense head turns the final representation
//! into class probabilities.

use alloc::rc::Rc;
use alloc::vec::Vec;

use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::graph::UnionGraph;
use crate::gumbel::{row_argmax, sample_gumbel_matrix};
use crate::layers::{Gatv2Layer, GcnGraph, GcnLayer, Mlp};
use crate::rng::stream_rng;
use crate::tape::{AttGraph, ParamSet, Tape, ValueId};
use crate::tensor::Matrix;

#[derive(Debug, Clone)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ModelDims {
    pub in_dim: usize,
    /// Output width of each graph layer (heads concatenated).
    pub hidden: Vec<usize>,
    /// Attention heads per graph layer; must divide the matching width.
    pub heads: Vec<usize>,
    pub classes: usize,
    /// Hidden widths of the dense head (its output is `classes`).
    pub mlp_hidden: Vec<usize>,
}

impl ModelDims {
    /// Two attention layers 256 and 128 wide (4 heads, then 1), a 64-wide
    /// dense hidden layer, six classes.
    pub fn standard(in_dim: usize) -> Self {
        ModelDims {
            in_dim,
            hidden: alloc::vec![256, 128],
            heads: alloc::vec![4, 1],
            classes: 6,
            mlp_hidden: alloc::vec![64],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.hidden.is_empty() {
            return Err(Error::Config(alloc::string::String::from(
                "model needs at least one graph layer",
            )));
        }
        if self.hidden.len() != self.heads.len() {
            return Err(Error::Config(alloc::format!(
                "{} layer widths but {} head counts",
                self.hidden.len(),
                self.heads.len()
            )));
        }
        for (i, (&h, &k)) in self.hidden.iter().zip(&self.heads).enumerate() {
            if k == 0 || h == 0 || h % k != 0 {
                return Err(Error::Config(alloc::format!(
                    "layer {i}: width {h} not divisible by {k} heads"
                )));
            }
        }
        if self.classes < 2 {
            return Err(Error::Config(alloc::string::String::from("need at least 2 classes")));
        }
        Ok(())
    }

    pub fn layer_count(&self) -> usize {
        self.hidden.len()
    }

    pub fn layer_in(&self, i: usize) -> usize {
        if i == 0 {
            self.in_dim
        } else {
            self.hidden[i - 1]
        }
    }

    fn mlp_dims(&self) -> Vec<usize> {
        let mut d = alloc::vec![*self.hidden.last().unwrap()];
        d.extend_from_slice(&self.mlp_hidden);
        d.push(self.classes);
        d
    }
}

/// How the per-node neighborhood type is chosen during a forward pass.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SelectionMode {
    /// Gumbel noise, hard one-hot forward, soft gradient (training).
    Train { tau: f64 },
    /// Gumbel noise, soft selection end to end — every gradient exact, so
    /// finite differences apply. Used by gradient checks.
    Relaxed { tau: f64 },
    /// No noise, argmax of the decision distribution (inference).
    Eval,
}

/// Seeds for the stochastic parts of one forward pass. Streams are named by
/// `(role, layer, epoch)`, so a pass is reproducible from `(seed, epoch)`
/// alone and two models drawing the same roles draw identical masks.
#[derive(Debug, Clone, Copy)]
pub struct ForwardCtx {
    pub seed: u64,
    pub epoch: u64,
    /// Input dropout rate for every graph layer; 0 adds no dropout nodes.
    pub dropout: f64,
}

impl ForwardCtx {
    pub fn eval(seed: u64) -> Self {
        ForwardCtx { seed, epoch: 0, dropout: 0.0 }
    }

    fn stream(&self, role: &str, layer: usize) -> ChaCha8Rng {
        stream_rng(
            self.seed,
            &alloc::format!("{role}/l{layer}/e{epoch}", epoch = self.epoch),
        )
    }
}

fn input_dropout(
    t: &mut Tape,
    x: ValueId,
    ctx: &ForwardCtx,
    role: &str,
    layer: usize,
) -> ValueId {
    if ctx.dropout == 0.0 {
        return x;
    }
    let mut rng = ctx.stream(role, layer);
    t.dropout(x, ctx.dropout, &mut rng)
}

/// Per-layer record of what each node decided.
#[derive(Debug, Clone)]
pub struct LayerTrace {
    pub layer: usize,
    /// Chosen type index per node (argmax of the perturbed or plain logits).
    pub chosen: Vec<u32>,
    /// The decision distribution rows, `n x |lattice|`.
    pub rho: Matrix,
}

pub struct ForwardOut {
    pub probs: ValueId,
    pub logits: ValueId,
    pub traces: Vec<LayerTrace>,
}

pub struct DhgatModel {
    pub dims: ModelDims,
    pub rep: Vec<Gatv2Layer>,
    pub dec: Vec<Gatv2Layer>,
    pub head: Mlp,
    pub lattice_size: usize,
}

impl DhgatModel {
    /// Representation layers and the head share the `rep.*` / `head.*` name
    /// space with the plain attention baseline, so both start identically
    /// under one seed. Decision layers are single-head, one logit per
    /// lattice type.
    pub fn init(
        params: &mut ParamSet,
        dims: ModelDims,
        lattice_size: usize,
        seed: u64,
    ) -> Result<Self> {
        dims.validate()?;
        if lattice_size < 2 {
            return Err(Error::Config(alloc::string::String::from(
                "selection needs a lattice of at least 2 types",
            )));
        }
        let mut rep = Vec::new();
        let mut dec = Vec::new();
        for i in 0..dims.layer_count() {
            let in_dim = dims.layer_in(i);
            rep.push(Gatv2Layer::init(
                params,
                &alloc::format!("rep.l{i}"),
                in_dim,
                dims.hidden[i] / dims.heads[i],
                dims.heads[i],
                seed,
            ));
            dec.push(Gatv2Layer::init(
                params,
                &alloc::format!("dec.l{i}"),
                in_dim,
                lattice_size,
                1,
                seed,
            ));
        }
        let head = Mlp::init(params, "head", &dims.mlp_dims(), seed);
        Ok(DhgatModel { dims, rep, dec, head, lattice_size })
    }

    /// Full forward pass with learned selections.
    pub fn forward(
        &self,
        t: &mut Tape,
        params: &ParamSet,
        x0: ValueId,
        union: &UnionGraph,
        mode: SelectionMode,
        ctx: &ForwardCtx,
    ) -> ForwardOut {
        let n = t.value(x0).rows();
        assert_eq!(n, union.att.n, "forward: feature rows vs graph nodes");
        let mut h = x0;
        let mut traces = Vec::with_capacity(self.rep.len());
        for (i, (rep, dec)) in self.rep.iter().zip(&self.dec).enumerate() {
            let h_dec = input_dropout(t, h, ctx, "dropout/dec", i);
            let logits = dec.forward(t, params, h_dec, &union.att, None, false);
            let rho = t.row_softmax(logits, None);
            let (y, chosen) = match mode {
                SelectionMode::Train { tau } | SelectionMode::Relaxed { tau } => {
                    assert!(tau > 0.0, "selection temperature must be positive");
                    let mut grng = ctx.stream("gumbel", i);
                    let noise = sample_gumbel_matrix(n, self.lattice_size, &mut grng);
                    let log_rho = t.log(rho);
                    let noise_id = t.input(noise);
                    let z = t.add(log_rho, noise_id);
                    let chosen = row_argmax(t.value(z));
                    let zs = t.scale(z, 1.0 / tau);
                    let soft = t.row_softmax(zs, None);
                    let y = match mode {
                        SelectionMode::Train { .. } => {
                            t.straight_through(soft, Rc::new(chosen.clone()))
                        }
                        _ => soft,
                    };
                    (y, chosen)
                }
                SelectionMode::Eval => {
                    let chosen = row_argmax(t.value(rho));
                    let mut onehot = Matrix::zeros(n, self.lattice_size);
                    for (r, &c) in chosen.iter().enumerate() {
                        onehot.set(r, c as usize, 1.0);
                    }
                    (t.input(onehot), chosen)
                }
            };
            traces.push(LayerTrace { layer: i, chosen, rho: t.value(rho).clone() });
            let wts = t.edge_select_weights(y, Rc::clone(&union.att), Rc::clone(&union.compat));
            let h_rep = input_dropout(t, h, ctx, "dropout/rep", i);
            h = rep.forward(t, params, h_rep, &union.att, Some(wts), true);
        }
        let logits = self.head.forward(t, params, h);
        let probs = t.row_softmax(logits, None);
        ForwardOut { probs, logits, traces }
    }

    /// Forward pass with every node's type clamped per layer; the decision
    /// layers never touch the tape, so their parameters get no gradient.
    pub fn forward_forced(
        &self,
        t: &mut Tape,
        params: &ParamSet,
        x0: ValueId,
        union: &UnionGraph,
        forced: &[Vec<u32>],
        ctx: &ForwardCtx,
    ) -> ForwardOut {
        let n = t.value(x0).rows();
        assert_eq!(forced.len(), self.rep.len(), "forced selections: one list per layer");
        let mut h = x0;
        let mut traces = Vec::new();
        for (i, rep) in self.rep.iter().enumerate() {
            assert_eq!(forced[i].len(), n, "forced selections: one type per node");
            let mut onehot = Matrix::zeros(n, self.lattice_size);
            for (r, &c) in forced[i].iter().enumerate() {
                assert!((c as usize) < self.lattice_size, "forced type out of range");
                onehot.set(r, c as usize, 1.0);
            }
            let y = t.input(onehot);
            traces.push(LayerTrace {
                layer: i,
                chosen: forced[i].clone(),
                rho: Matrix::zeros(0, 0),
            });
            let wts = t.edge_select_weights(y, Rc::clone(&union.att), Rc::clone(&union.compat));
            let h_rep = input_dropout(t, h, ctx, "dropout/rep", i);
            h = rep.forward(t, params, h_rep, &union.att, Some(wts), true);
        }
        let logits = self.head.forward(t, params, h);
        let probs = t.row_softmax(logits, None);
        ForwardOut { probs, logits, traces }
    }
}

/// Plain multi-layer GATv2 on the union graph with the same head; shares
/// parameter names with the representation side of the decision model.
pub struct GatBaseline {
    pub dims: ModelDims,
    pub rep: Vec<Gatv2Layer>,
    pub head: Mlp,
}

impl GatBaseline {
    pub fn init(params: &mut ParamSet, dims: ModelDims, seed: u64) -> Result<Self> {
        dims.validate()?;
        let rep = (0..dims.layer_count())
            .map(|i| {
                Gatv2Layer::init(
                    params,
                    &alloc::format!("rep.l{i}"),
                    dims.layer_in(i),
                    dims.hidden[i] / dims.heads[i],
                    dims.heads[i],
                    seed,
                )
            })
            .collect();
        let head = Mlp::init(params, "head", &dims.mlp_dims(), seed);
        Ok(GatBaseline { dims, rep, head })
    }

    pub fn forward(
        &self,
        t: &mut Tape,
        params: &ParamSet,
        x0: ValueId,
        att: &Rc<AttGraph>,
        ctx: &ForwardCtx,
    ) -> (ValueId, ValueId) {
        let mut h = x0;
        for (i, rep) in self.rep.iter().enumerate() {
            let h_in = input_dropout(t, h, ctx, "dropout/rep", i);
            h = rep.forward(t, params, h_in, att, None, true);
        }
        let logits = self.head.forward(t, params, h);
        let probs = t.row_softmax(logits, None);
        (probs, logits)
    }
}

/// Degree-normalized convolution baseline with the same widths and head.
pub struct GcnBaseline {
    pub dims: ModelDims,
    pub layers: Vec<GcnLayer>,
    pub head: Mlp,
}

impl GcnBaseline {
    pub fn init(params: &mut ParamSet, dims: ModelDims, seed: u64) -> Result<Self> {
        dims.validate()?;
        let layers = (0..dims.layer_count())
            .map(|i| {
                GcnLayer::init(params, &alloc::format!("gcn.l{i}"), dims.layer_in(i), dims.hidden[i], seed)
            })
            .collect();
        let head = Mlp::init(params, "head", &dims.mlp_dims(), seed);
        Ok(GcnBaseline { dims, layers, head })
    }

    pub fn forward(
        &self,
        t: &mut Tape,
        params: &ParamSet,
        x0: ValueId,
        graph: &GcnGraph,
        ctx: &ForwardCtx,
    ) -> (ValueId, ValueId) {
        let mut h = x0;
        for (i, layer) in self.layers.iter().enumerate() {
            let h_in = input_dropout(t, h, ctx, "dropout/rep", i);
            h = layer.forward(t, params, h_in, graph, true);
        }
        let logits = self.head.forward(t, params, h);
        let probs = t.row_softmax(logits, None);
        (probs, logits)
    }
}

#[derive(Debug, Clone, Copy)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct LossWeights {
    /// Cross-entropy coefficient.
    pub ce: f64,
    /// Expected-ordinal-distance coefficient.
    pub ordinal: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights { ce: 1.0, ordinal: 0.5 }
    }
}

/// Cross-entropy plus expected-ordinal deviation over the labeled nodes:
/// `ce * mean(-ln p[i, y_i]) + ordinal * mean |y_i - sum_c c * p[i, c]|`.
pub fn supervised_loss(
    t: &mut Tape,
    probs: ValueId,
    labeled: &Rc<Vec<u32>>,
    labels: &Rc<Vec<u32>>,
    weights: LossWeights,
) -> Result<ValueId> {
    if labeled.is_empty() {
        return Err(Error::EmptyLabeledSet);
    }
    let classes = t.value(probs).cols();
    let ce = t.cross_entropy_mean(probs, Rc::clone(labeled), Rc::clone(labels));
    let class_scores = t.input(Matrix::from_vec(
        classes,
        1,
        (0..classes).map(|c| c as f64).collect(),
    ));
    let expected = t.matmul(probs, class_scores);
    let at_labeled = t.gather_rows(expected, Rc::clone(labeled));
    let target = t.input(Matrix::from_vec(
        labels.len(),
        1,
        labels.iter().map(|&y| f64::from(y)).collect(),
    ));
    let diff = t.sub(at_labeled, target);
    let dev = t.abs(diff);
    let ordinal = t.mean_all(dev);
    let a = t.scale(ce, weights.ce);
    let b = t.scale(ordinal, weights.ordinal);
    Ok(t.add(a, b))
}

/// Row argmax of a probability block as class labels.
pub fn predictions(probs: &Matrix) -> Vec<u8> {
    row_argmax(probs).into_iter().map(|c| c as u8).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn uniform_probs_label_three_loss() {
        // CE = ln 6, expected score 2.5, so with both weights at 1 the loss
        // is ln 6 + 0.5.
        let mut t = Tape::new();
        let probs = t.input(Matrix::from_vec(4, 6, vec![1.0 / 6.0; 24]));
        let labeled = Rc::new(vec![0u32, 1, 2, 3]);
        let labels = Rc::new(vec![3u32; 4]);
        let loss = supervised_loss(
            &mut t,
            probs,
            &labeled,
            &labels,
            LossWeights { ce: 1.0, ordinal: 1.0 },
        )
        .unwrap();
        assert!((t.value(loss).item() - 2.291_759_469_228_055_2).abs() < 1e-4);
    }

    #[test]
    fn perfect_onehot_prediction_gives_zero_loss() {
        let mut probs = Matrix::zeros(3, 6);
        let labels = [5u32, 0, 2];
        for (r, &y) in labels.iter().enumerate() {
            probs.set(r, y as usize, 1.0);
        }
        let mut t = Tape::new();
        let p = t.input(probs);
        let loss = supervised_loss(
            &mut t,
            p,
            &Rc::new(vec![0, 1, 2]),
            &Rc::new(labels.to_vec()),
            LossWeights { ce: 1.0, ordinal: 1.0 },
        )
        .unwrap();
        assert!(t.value(loss).item().abs() < 1e-9);
    }

    #[test]
    fn zero_ordinal_weight_reduces_to_cross_entropy() {
        let mut t = Tape::new();
        let probs = t.input(Matrix::from_vec(2, 6, vec![1.0 / 6.0; 12]));
        let labeled = Rc::new(vec![0u32, 1]);
        let labels = Rc::new(vec![0u32, 5]);
        let loss = supervised_loss(
            &mut t,
            probs,
            &labeled,
            &labels,
            LossWeights { ce: 1.0, ordinal: 0.0 },
        )
        .unwrap();
        assert!((t.value(loss).item() - crate::mathx::ln(6.0)).abs() < 1e-12);
    }

    #[test]
    fn empty_labeled_set_is_an_error() {
        let mut t = Tape::new();
        let probs = t.input(Matrix::from_vec(1, 6, vec![1.0 / 6.0; 6]));
        let r = supervised_loss(
            &mut t,
            probs,
            &Rc::new(vec![]),
            &Rc::new(vec![]),
            LossWeights::default(),
        );
        assert!(matches!(r, Err(Error::EmptyLabeledSet)));
    }

    #[test]
    fn dims_validation() {
        assert!(ModelDims::standard(300).validate().is_ok());
        let mut bad = ModelDims::standard(300);
        bad.hidden = vec![250, 128]; // 250 not divisible by 4
        assert!(bad.validate().is_err());
        let mut mismatched = ModelDims::standard(300);
        mismatched.heads = vec![4];
        assert!(mismatched.validate().is_err());
    }
}
