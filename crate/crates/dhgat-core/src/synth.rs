//! Planted-structure synthetic benchmark.
//!
//! A balanced multi-class node set with weak per-class feature signal and
//! two relations: `kin` connects same-class nodes (the useful one) and
//! `foil` connects only nodes of *different* classes, so aggregating over
//! it actively mixes classes. A selection mechanism that learns to attend
//! through `kin` and ignore `foil` separates the classes; an indiscriminate
//! union aggregator suffers.

use alloc::vec::Vec;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::graph::{Csr, HeteroGraph};
use crate::mathx;
use crate::rng::stream_rng;
use crate::tensor::Matrix;

#[derive(Debug, Clone, Copy)]
pub struct SynthConfig {
    pub nodes: usize,
    pub classes: usize,
    pub dim: usize,
    /// Scale of the class-center component of each feature.
    pub signal: f64,
    /// Scale of the white-noise component.
    pub noise: f64,
    /// Same-class partners drawn per node.
    pub kin_degree: usize,
    /// Different-class partners drawn per node.
    pub foil_degree: usize,
    pub seed: u64,
}

impl SynthConfig {
    pub fn standard(seed: u64) -> Self {
        SynthConfig {
            nodes: 200,
            classes: 6,
            dim: 16,
            signal: 0.4,
            noise: 1.0,
            kin_degree: 6,
            foil_degree: 6,
            seed,
        }
    }
}

fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    // Box-Muller; the clamp keeps the log argument positive.
    let u1: f64 = rng.gen::<f64>().max(1e-12);
    let u2: f64 = rng.gen();
    mathx::sqrt(-2.0 * mathx::ln(u1)) * mathx::cos(2.0 * core::f64::consts::PI * u2)
}

pub struct SynthData {
    pub features: Matrix,
    pub labels: Vec<u8>,
    pub graph: HeteroGraph,
    pub kin: crate::graph::RelationId,
    pub foil: crate::graph::RelationId,
}

pub fn planted_graph(cfg: &SynthConfig) -> SynthData {
    assert!(cfg.classes >= 2 && cfg.nodes >= 2 * cfg.classes, "planted graph too small");
    let n = cfg.nodes;
    let labels: Vec<u8> = (0..n).map(|i| (i % cfg.classes) as u8).collect();
    let mut by_class: Vec<Vec<u32>> = alloc::vec![Vec::new(); cfg.classes];
    for (i, &y) in labels.iter().enumerate() {
        by_class[y as usize].push(i as u32);
    }

    let mut crng = stream_rng(cfg.seed, "synth/centers");
    let mut centers = Matrix::zeros(cfg.classes, cfg.dim);
    for v in centers.as_mut_slice() {
        *v = gaussian(&mut crng);
    }
    let mut nrng = stream_rng(cfg.seed, "synth/noise");
    let mut features = Matrix::zeros(n, cfg.dim);
    for i in 0..n {
        let c = labels[i] as usize;
        let row = features.row_mut(i);
        for (j, v) in row.iter_mut().enumerate() {
            *v = cfg.signal * centers.get(c, j) + cfg.noise * gaussian(&mut nrng);
        }
    }

    let mut krng = stream_rng(cfg.seed, "synth/kin");
    let mut kin_edges: Vec<(u32, u32)> = Vec::new();
    for i in 0..n as u32 {
        let peers = &by_class[labels[i as usize] as usize];
        for _ in 0..cfg.kin_degree {
            loop {
                let j = peers[krng.gen_range(0..peers.len())];
                if j != i {
                    kin_edges.push((i, j));
                    break;
                }
            }
        }
    }

    let mut frng = stream_rng(cfg.seed, "synth/foil");
    let mut foil_edges: Vec<(u32, u32)> = Vec::new();
    for i in 0..n as u32 {
        for _ in 0..cfg.foil_degree {
            loop {
                let j = frng.gen_range(0..n as u32);
                if labels[j as usize] != labels[i as usize] {
                    foil_edges.push((i, j));
                    break;
                }
            }
        }
    }

    let mut graph = HeteroGraph::new(n);
    let kin = graph.add_relation("kin", Csr::from_edges(n, &kin_edges)).unwrap();
    let foil = graph.add_relation("foil", Csr::from_edges(n, &foil_edges)).unwrap();
    SynthData { features, labels, graph, kin, foil }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kin_is_same_class_foil_is_cross_class() {
        let data = planted_graph(&SynthConfig::standard(3));
        let kin = data.graph.relation(data.kin);
        let foil = data.graph.relation(data.foil);
        for v in 0..data.graph.n {
            for &u in kin.neighbors(v) {
                assert_eq!(data.labels[v], data.labels[u as usize], "kin edge crosses classes");
            }
            for &u in foil.neighbors(v) {
                assert_ne!(data.labels[v], data.labels[u as usize], "foil edge within a class");
            }
            assert!(kin.degree(v) >= SynthConfig::standard(3).kin_degree.min(1));
        }
        assert!(kin.is_symmetric() && foil.is_symmetric());
    }

    #[test]
    fn balanced_labels_and_deterministic_rebuild() {
        let cfg = SynthConfig::standard(5);
        let a = planted_graph(&cfg);
        let b = planted_graph(&cfg);
        assert_eq!(a.labels, b.labels);
        assert_eq!(a.features.bit_fingerprint(), b.features.bit_fingerprint());
        let mut counts = [0usize; 6];
        for &y in &a.labels {
            counts[y as usize] += 1;
        }
        for &c in &counts {
            assert!(c >= 33, "class count {c} far from balance");
        }
    }

    #[test]
    fn signal_zero_removes_class_information_from_features() {
        let mut cfg = SynthConfig::standard(7);
        cfg.signal = 0.0;
        let data = planted_graph(&cfg);
        // Class-mean feature vectors stay near zero when no signal is mixed in.
        let mut mean0 = alloc::vec![0.0; cfg.dim];
        let mut n0 = 0.0;
        for i in 0..cfg.nodes {
            if data.labels[i] == 0 {
                for (m, &x) in mean0.iter_mut().zip(data.features.row(i)) {
                    *m += x;
                }
                n0 += 1.0;
            }
        }
        for m in &mut mean0 {
            *m /= n0;
        }
        let norm = mathx::sqrt(mean0.iter().map(|v| v * v).sum::<f64>());
        assert!(norm < 0.8, "class mean norm {norm} too structured for pure noise");
    }
}
