//! Stratified labeled/unlabeled splits for transductive training.

use alloc::vec::Vec;

use rand::Rng;

use crate::error::{Error, Result};
use crate::mathx;
use crate::rng::stream_rng;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Split {
    /// Node ids whose labels the loss may see, ascending.
    pub labeled: Vec<u32>,
    /// Everything else; the evaluation set. Ascending.
    pub unlabeled: Vec<u32>,
}

/// Draws `round(frac * count)` labeled nodes per class with a seeded
/// shuffle. Errors if any class would contribute zero labeled nodes — a
/// class absent from supervision can never be predicted meaningfully.
pub fn stratified_split(
    labels: &[u8],
    classes: usize,
    labeled_frac: f64,
    seed: u64,
) -> Result<Split> {
    if !(0.0..=1.0).contains(&labeled_frac) {
        return Err(Error::Config(alloc::format!(
            "labeled fraction {labeled_frac} outside [0,1]"
        )));
    }
    let mut members: Vec<Vec<u32>> = alloc::vec![Vec::new(); classes];
    for (i, &y) in labels.iter().enumerate() {
        if (y as usize) >= classes {
            return Err(Error::Config(alloc::format!(
                "label {y} at node {i} exceeds class count {classes}"
            )));
        }
        members[y as usize].push(i as u32);
    }
    let mut labeled = Vec::new();
    let mut unlabeled = Vec::new();
    for (c, mut ids) in members.into_iter().enumerate() {
        if ids.is_empty() {
            continue;
        }
        let take = mathx::round(labeled_frac * ids.len() as f64) as usize;
        if take == 0 {
            return Err(Error::Config(alloc::format!(
                "class {c} with {} nodes rounds to zero labeled nodes at fraction {labeled_frac}",
                ids.len()
            )));
        }
        let mut rng = stream_rng(seed, &alloc::format!("split/c{c}"));
        for i in 0..ids.len() - 1 {
            let j = i + rng.gen_range(0..ids.len() - i);
            ids.swap(i, j);
        }
        labeled.extend_from_slice(&ids[..take.min(ids.len())]);
        unlabeled.extend_from_slice(&ids[take.min(ids.len())..]);
    }
    labeled.sort_unstable();
    unlabeled.sort_unstable();
    Ok(Split { labeled, unlabeled })
}

impl Split {
    pub fn labeled_labels(&self, labels: &[u8]) -> Vec<u32> {
        self.labeled.iter().map(|&i| u32::from(labels[i as usize])).collect()
    }
}
