//! Statement features: embedding validation, a deterministic hashed
//! fallback embedder for when no pretrained vectors are available, and
//! exact cosine KNN.

use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::graph::Csr;
use crate::mathx;
use crate::rng::fnv1a;
use crate::tensor::Matrix;

/// Checks an `n x d` embedding block: row count and finiteness.
pub fn validate_embeddings(x: &Matrix, expected_rows: usize) -> Result<()> {
    if x.rows() != expected_rows {
        return Err(Error::Config(alloc::format!(
            "embeddings have {} rows, dataset has {expected_rows}",
            x.rows()
        )));
    }
    if x.cols() == 0 {
        return Err(Error::Config(String::from("embeddings have zero columns")));
    }
    if x.has_non_finite() {
        return Err(Error::Config(String::from("embeddings contain NaN or infinity")));
    }
    Ok(())
}

/// Character n-grams (3..=5) of each whitespace token wrapped in markers,
/// signed-hashed into `dim` buckets, then L2-normalized per row. Rows that
/// hash to zero (empty text) get a unit vector on the first coordinate.
/// Output is a pure function of `(texts, dim, seed)`.
pub fn fallback_hash_embed(texts: &[String], dim: usize, seed: u64) -> Matrix {
    assert!(dim > 0, "hash embedding: zero dimension");
    let mut out = Matrix::zeros(texts.len(), dim);
    let seed_bytes = seed.to_le_bytes();
    let mut gram_buf = Vec::new();
    for (r, text) in texts.iter().enumerate() {
        let row = out.row_mut(r);
        for token in text.split_whitespace() {
            let wrapped: Vec<char> = core::iter::once('<')
                .chain(token.chars().flat_map(char::to_lowercase))
                .chain(core::iter::once('>'))
                .collect();
            for len in 3..=5usize {
                if wrapped.len() < len {
                    continue;
                }
                for start in 0..=wrapped.len() - len {
                    gram_buf.clear();
                    gram_buf.extend_from_slice(&seed_bytes);
                    for &c in &wrapped[start..start + len] {
                        let mut b = [0u8; 4];
                        gram_buf.extend_from_slice(c.encode_utf8(&mut b).as_bytes());
                    }
                    let h = fnv1a(&gram_buf);
                    let sign = if h & (1 << 63) != 0 { 1.0 } else { -1.0 };
                    row[(h % dim as u64) as usize] += sign;
                }
            }
        }
        let norm = mathx::sqrt(row.iter().map(|v| v * v).sum::<f64>());
        if norm > 0.0 {
            for v in row.iter_mut() {
                *v /= norm;
            }
        } else {
            row[0] = 1.0;
        }
    }
    out
}

/// Cosine similarity; zero if either vector has zero norm.
pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len(), "cosine: length mismatch");
    let mut dot = 0.0;
    let mut na = 0.0;
    let mut nb = 0.0;
    for (&x, &y) in a.iter().zip(b) {
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (mathx::sqrt(na) * mathx::sqrt(nb))
    }
}

/// Exact top-`k` cosine neighbors per node, self excluded, ties broken
/// toward the lower index. Each list has exactly `k` entries (so `k` must be
/// `< n`), ordered by descending similarity.
pub fn knn_neighbors(x: &Matrix, k: usize) -> Vec<Vec<u32>> {
    let n = x.rows();
    assert!(k < n, "knn: k = {k} needs at least {} nodes, have {n}", k + 1);
    let norms: Vec<f64> = (0..n)
        .map(|i| mathx::sqrt(x.row(i).iter().map(|v| v * v).sum::<f64>()))
        .collect();
    let mut out = Vec::with_capacity(n);
    let mut sims: Vec<(f64, u32)> = Vec::with_capacity(n - 1);
    for i in 0..n {
        sims.clear();
        let xi = x.row(i);
        for j in 0..n {
            if j == i {
                continue;
            }
            let s = if norms[i] == 0.0 || norms[j] == 0.0 {
                0.0
            } else {
                let mut dot = 0.0;
                for (&a, &b) in xi.iter().zip(x.row(j)) {
                    dot += a * b;
                }
                dot / (norms[i] * norms[j])
            };
            sims.push((s, j as u32));
        }
        // Descending similarity, then ascending index: a total order, so the
        // selection is unambiguous even with exact ties.
        sims.sort_unstable_by(|a, b| {
            b.0.partial_cmp(&a.0).unwrap().then_with(|| a.1.cmp(&b.1))
        });
        out.push(sims[..k].iter().map(|&(_, j)| j).collect());
    }
    out
}

/// Symmetric KNN relation: each node contributes its `k` picks, then the
/// union of directions is symmetrized.
pub fn knn_relation(x: &Matrix, k: usize) -> Csr {
    let picks = knn_neighbors(x, k);
    let mut edges = Vec::with_capacity(x.rows() * k);
    for (i, list) in picks.iter().enumerate() {
        for &j in list {
            edges.push((i as u32, j));
        }
    }
    Csr::from_edges(x.rows(), &edges)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::string::ToString;
    use alloc::vec;

    #[test]
    fn hash_embed_rows_are_unit_norm_and_deterministic() {
        let texts = vec![
            "the economy is growing".to_string(),
            "".to_string(),
            "the economy is growing".to_string(),
        ];
        let a = fallback_hash_embed(&texts, 64, 9);
        let b = fallback_hash_embed(&texts, 64, 9);
        assert_eq!(a.bit_fingerprint(), b.bit_fingerprint());
        for r in 0..3 {
            let norm: f64 = a.row(r).iter().map(|v| v * v).sum::<f64>();
            assert!((norm - 1.0).abs() < 1e-12, "row {r} norm {norm}");
        }
        // Identical texts embed identically; the empty row is the guard vector.
        assert_eq!(a.row(0), a.row(2));
        assert_eq!(a.row(1)[0], 1.0);
        assert!(a.row(1)[1..].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn hash_embed_seed_changes_output() {
        let texts = vec!["taxes went up".to_string()];
        let a = fallback_hash_embed(&texts, 64, 1);
        let b = fallback_hash_embed(&texts, 64, 2);
        assert_ne!(a.bit_fingerprint(), b.bit_fingerprint());
    }

    #[test]
    fn knn_exact_on_planted_directions() {
        // Three tight clusters on orthogonal axes; neighbors stay in-cluster.
        let mut x = Matrix::zeros(9, 3);
        for i in 0..9 {
            let axis = i / 3;
            x.set(i, axis, 1.0);
            x.set(i, (axis + 1) % 3, 0.01 * (i % 3) as f64);
        }
        let nbrs = knn_neighbors(&x, 2);
        for i in 0..9 {
            let cluster = i / 3;
            for &j in &nbrs[i] {
                assert_eq!(j as usize / 3, cluster, "node {i} left its cluster");
            }
        }
    }

    #[test]
    fn knn_ties_break_to_lower_index() {
        // Four identical vectors: all similarities are exactly 1.
        let x = Matrix::from_vec(4, 2, vec![1.0, 2.0, 1.0, 2.0, 1.0, 2.0, 1.0, 2.0]);
        let nbrs = knn_neighbors(&x, 2);
        assert_eq!(nbrs[0], vec![1, 2]);
        assert_eq!(nbrs[3], vec![0, 1]);
    }

    #[test]
    fn knn_scale_invariance() {
        let texts: Vec<String> = (0..12).map(|i| alloc::format!("statement number {i} about policy")).collect();
        let x = fallback_hash_embed(&texts, 32, 4);
        let scaled = Matrix::from_vec(
            x.rows(),
            x.cols(),
            x.as_slice().iter().map(|v| v * 37.5).collect(),
        );
        assert_eq!(knn_neighbors(&x, 3), knn_neighbors(&scaled, 3));
    }

    #[test]
    fn knn_relation_symmetric_with_min_degree_k() {
        let texts: Vec<String> = (0..10).map(|i| alloc::format!("text {i} {}", i * i)).collect();
        let x = fallback_hash_embed(&texts, 32, 7);
        let csr = knn_relation(&x, 3);
        assert!(csr.is_symmetric());
        for v in 0..10 {
            assert!(csr.degree(v) >= 3, "degree {} at {v}", csr.degree(v));
        }
    }

    #[test]
    fn validate_rejects_bad_blocks() {
        let ok = Matrix::zeros(3, 4);
        assert!(validate_embeddings(&ok, 3).is_ok());
        assert!(validate_embeddings(&ok, 5).is_err());
        let mut bad = Matrix::zeros(2, 2);
        bad.set(0, 0, f64::NAN);
        assert!(validate_embeddings(&bad, 2).is_err());
    }
}
