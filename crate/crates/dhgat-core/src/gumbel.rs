//! Gumbel-softmax discrete selection.
//!
//! Training draws Gumbel(0,1) noise, adds it to log-probabilities, and takes
//! both a temperature-softened softmax and the hard argmax; the
//! straight-through tape primitive stitches the two together. Evaluation
//! skips the noise and takes the plain argmax.

use alloc::vec::Vec;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::mathx;
use crate::tensor::Matrix;

/// Clamp for the uniform draw so the double log never sees 0 or 1.
const U_EPS: f64 = 1e-12;
/// Clamp under the probability log, matching the tape's log primitive.
const P_EPS: f64 = 1e-10;

/// Inverse-CDF transform: `-ln(-ln u)` with `u` clamped away from {0, 1}.
pub fn gumbel_from_uniform(u: f64) -> f64 {
    let u = u.clamp(U_EPS, 1.0 - U_EPS);
    -mathx::ln(-mathx::ln(u))
}

pub fn sample_gumbel(rng: &mut ChaCha8Rng) -> f64 {
    gumbel_from_uniform(rng.gen::<f64>())
}

/// One Gumbel draw per entry of an `n x k` probability matrix.
pub fn sample_gumbel_matrix(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Matrix {
    let mut m = Matrix::zeros(rows, cols);
    for v in m.as_mut_slice() {
        *v = sample_gumbel(rng);
    }
    m
}

/// Soft relaxation and hard choice for each row of `rho` under fixed noise.
///
/// Returns the perturbed log-probabilities `(ln rho + g)` (the tape rebuilds
/// the softmax from these so gradients flow through `rho`), and the per-row
/// argmax with ties going to the lower index. The argmax is taken before
/// temperature scaling; dividing by any `tau > 0` cannot change it.
pub fn perturbed_logits(rho: &Matrix, noise: &Matrix) -> Matrix {
    assert_eq!(rho.shape(), noise.shape(), "gumbel: rho vs noise shape");
    Matrix::from_vec(
        rho.rows(),
        rho.cols(),
        rho.as_slice()
            .iter()
            .zip(noise.as_slice())
            .map(|(&p, &g)| mathx::ln(p.max(P_EPS)) + g)
            .collect(),
    )
}

/// Row argmax, ties to the lower index.
pub fn row_argmax(m: &Matrix) -> Vec<u32> {
    (0..m.rows())
        .map(|r| {
            let row = m.row(r);
            let mut best = 0usize;
            for (i, &v) in row.iter().enumerate().skip(1) {
                if v > row[best] {
                    best = i;
                }
            }
            best as u32
        })
        .collect()
}

/// Dense (off-tape) softened selection: `softmax((ln rho + g) / tau)` per row.
/// Used by oracles and tests; the model builds the same thing on the tape.
pub fn soft_selection(rho: &Matrix, noise: &Matrix, tau: f64) -> Matrix {
    assert!(tau > 0.0, "gumbel: tau must be positive");
    let z = perturbed_logits(rho, noise);
    let mut out = Matrix::zeros(z.rows(), z.cols());
    for r in 0..z.rows() {
        let row = z.row(r);
        let mx = row.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        let mut sum = 0.0;
        let o = out.row_mut(r);
        for (dst, &v) in o.iter_mut().zip(row) {
            let e = mathx::exp((v - mx) / tau);
            *dst = e;
            sum += e;
        }
        for dst in o.iter_mut() {
            *dst /= sum;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream_rng;
    use alloc::vec;

    #[test]
    fn inverse_cdf_fixed_points() {
        // u = e^-1 -> -ln(-ln u) = -ln(1) = 0; u = e^-e -> -ln(e) = -1.
        assert!((gumbel_from_uniform(mathx::exp(-1.0))).abs() < 1e-12);
        assert!((gumbel_from_uniform(mathx::exp(-mathx::exp(1.0))) + 1.0).abs() < 1e-12);
    }

    #[test]
    fn clamp_keeps_extremes_finite() {
        assert!(gumbel_from_uniform(0.0).is_finite());
        assert!(gumbel_from_uniform(1.0).is_finite());
    }

    #[test]
    fn sample_mean_near_euler_mascheroni() {
        let mut rng = stream_rng(42, "test/gumbel-mc");
        let n = 1_000_000;
        let mean: f64 = (0..n).map(|_| sample_gumbel(&mut rng)).sum::<f64>() / n as f64;
        assert!((mean - 0.577_215_664_9).abs() < 0.01, "MC mean {mean}");
    }

    #[test]
    fn low_temperature_concentrates_on_argmax() {
        // With zero noise the soft row is rho^(1/tau) renormalized; the
        // non-max mass collapses fast: 0.1^10/(0.9^10 + 0.1^10).
        let rho = Matrix::from_vec(1, 2, vec![0.9, 0.1]);
        let g = Matrix::zeros(1, 2);
        let soft = soft_selection(&rho, &g, 0.1);
        let expected = 2.867_971_990_792_441_3e-10;
        assert!(
            (soft.get(0, 1) - expected).abs() < expected * 1e-6,
            "got {:e}",
            soft.get(0, 1)
        );
        assert!((soft.get(0, 0) + soft.get(0, 1) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn high_temperature_flattens() {
        let rho = Matrix::from_vec(1, 2, vec![0.9, 0.1]);
        let g = Matrix::zeros(1, 2);
        let soft = soft_selection(&rho, &g, 100.0);
        assert!((soft.get(0, 0) - 0.5).abs() < 0.01);
    }

    #[test]
    fn argmax_ties_to_lower_index() {
        let m = Matrix::from_vec(2, 3, vec![1.0, 1.0, 0.5, 0.2, 0.9, 0.9]);
        assert_eq!(row_argmax(&m), vec![0, 1]);
    }

    #[test]
    fn argmax_invariant_to_temperature() {
        let rho = Matrix::from_vec(1, 3, vec![0.2, 0.5, 0.3]);
        let mut rng = stream_rng(9, "test/gumbel-argmax");
        for _ in 0..200 {
            let g = sample_gumbel_matrix(1, 3, &mut rng);
            let z = perturbed_logits(&rho, &g);
            let hard = row_argmax(&z);
            for &tau in &[0.1, 1.0, 10.0] {
                let soft = soft_selection(&rho, &g, tau);
                assert_eq!(row_argmax(&soft), hard, "tau {tau}");
            }
        }
    }

    #[test]
    fn noise_changes_selection_sometimes() {
        // With rho = [0.6, 0.4] the perturbed argmax should flip to index 1
        // in a nontrivial fraction of draws (P = 0.4 exactly).
        let rho = Matrix::from_vec(1, 2, vec![0.6, 0.4]);
        let mut rng = stream_rng(13, "test/gumbel-flip");
        let mut flips = 0;
        let n = 20_000;
        for _ in 0..n {
            let g = sample_gumbel_matrix(1, 2, &mut rng);
            if row_argmax(&perturbed_logits(&rho, &g))[0] == 1 {
                flips += 1;
            }
        }
        let frac = f64::from(flips) / f64::from(n);
        assert!((frac - 0.4).abs() < 0.02, "flip fraction {frac}");
    }
}
