//! Classification metrics: confusion matrix, accuracy, macro-F1, and mean
//! ordinal distance.

use alloc::vec::Vec;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Confusion {
    pub classes: usize,
    /// `counts[true][predicted]`.
    pub counts: Vec<Vec<usize>>,
}

impl Confusion {
    pub fn from_pairs(truth: &[u8], predicted: &[u8], classes: usize) -> Self {
        assert_eq!(truth.len(), predicted.len(), "confusion: length mismatch");
        let mut counts = alloc::vec![alloc::vec![0usize; classes]; classes];
        for (&t, &p) in truth.iter().zip(predicted) {
            counts[t as usize][p as usize] += 1;
        }
        Confusion { classes, counts }
    }

    pub fn total(&self) -> usize {
        self.counts.iter().map(|row| row.iter().sum::<usize>()).sum()
    }

    pub fn accuracy(&self) -> f64 {
        let total = self.total();
        if total == 0 {
            return 0.0;
        }
        let hits: usize = (0..self.classes).map(|c| self.counts[c][c]).sum();
        hits as f64 / total as f64
    }

    pub fn per_class_f1(&self) -> Vec<f64> {
        (0..self.classes)
            .map(|c| {
                let tp = self.counts[c][c];
                let fp: usize = (0..self.classes)
                    .filter(|&t| t != c)
                    .map(|t| self.counts[t][c])
                    .sum();
                let fngt: usize = (0..self.classes)
                    .filter(|&p| p != c)
                    .map(|p| self.counts[c][p])
                    .sum();
                let precision = if tp + fp == 0 { 0.0 } else { tp as f64 / (tp + fp) as f64 };
                let recall = if tp + fngt == 0 { 0.0 } else { tp as f64 / (tp + fngt) as f64 };
                if precision + recall == 0.0 {
                    0.0
                } else {
                    2.0 * precision * recall / (precision + recall)
                }
            })
            .collect()
    }

    /// Unweighted mean F1 over all classes, counting absent classes as 0.
    pub fn macro_f1(&self) -> f64 {
        let f1 = self.per_class_f1();
        f1.iter().sum::<f64>() / self.classes as f64
    }

    /// Mean absolute difference of ordinal class indices.
    pub fn ordinal_mae(&self) -> f64 {
        let total = self.total();
        if total == 0 {
            return 0.0;
        }
        let mut acc = 0.0;
        for t in 0..self.classes {
            for p in 0..self.classes {
                acc += self.counts[t][p] as f64 * (t as f64 - p as f64).abs();
            }
        }
        acc / total as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct MetricsSummary {
    pub accuracy: f64,
    pub macro_f1: f64,
    pub ordinal_mae: f64,
    pub per_class_f1: Vec<f64>,
}

impl MetricsSummary {
    pub fn from_confusion(c: &Confusion) -> Self {
        MetricsSummary {
            accuracy: c.accuracy(),
            macro_f1: c.macro_f1(),
            ordinal_mae: c.ordinal_mae(),
            per_class_f1: c.per_class_f1(),
        }
    }
}

/// Mean and sample standard deviation (n-1 denominator; 0 for n < 2).
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (0.0, 0.0);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, crate::mathx::sqrt(var))
}
