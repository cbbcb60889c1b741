//! Binary parameter checkpoints. Layout, all little-endian:
//!
//! ```text
//! "DHCK" | u32 version | u64 seed | u64 config hash | u32 tensor count
//! then per tensor: u16 name length | name bytes | u32 rows | u32 cols | f64 data
//! ```
//!
//! Loading is strict: the stored config hash must match the config used
//! to rebuild the model, and the stored tensors must cover the model's
//! parameters exactly.

use std::path::Path;

use dhgat_core::tape::ParamSet;
use dhgat_core::tensor::Matrix;

use crate::{CliError, Result};

pub const MAGIC: &[u8; 4] = b"DHCK";
pub const VERSION: u32 = 1;

#[derive(Debug)]
pub struct Checkpoint {
    pub seed: u64,
    pub config_hash: u64,
    pub tensors: Vec<(String, Matrix)>,
}

pub fn save(path: &Path, seed: u64, config_hash: u64, params: &ParamSet) -> Result<()> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&seed.to_le_bytes());
    out.extend_from_slice(&config_hash.to_le_bytes());
    let ids: Vec<_> = params.ids().collect();
    out.extend_from_slice(&(ids.len() as u32).to_le_bytes());
    for id in ids {
        let name = params.name(id).as_bytes();
        assert!(name.len() <= u16::MAX as usize, "parameter name too long");
        out.extend_from_slice(&(name.len() as u16).to_le_bytes());
        out.extend_from_slice(name);
        let m = params.value(id);
        out.extend_from_slice(&(m.rows() as u32).to_le_bytes());
        out.extend_from_slice(&(m.cols() as u32).to_le_bytes());
        for &v in m.as_slice() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    std::fs::write(path, out).map_err(|e| CliError::io(path, e))
}

pub fn load(path: &Path) -> Result<Checkpoint> {
    let bytes = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
    let fail = |message: String| CliError::Checkpoint {
        path: path.to_path_buf(),
        message,
    };
    let mut at = 0usize;
    let mut take = |n: usize| -> std::result::Result<&[u8], CliError> {
        if at + n > bytes.len() {
            return Err(CliError::Checkpoint {
                path: path.to_path_buf(),
                message: format!("truncated at byte {at}"),
            });
        }
        let s = &bytes[at..at + n];
        at += n;
        Ok(s)
    };
    if take(4)? != MAGIC {
        return Err(fail(String::from("bad magic, not a checkpoint")));
    }
    let version = u32::from_le_bytes(take(4)?.try_into().unwrap());
    if version != VERSION {
        return Err(fail(format!("version {version}, expected {VERSION}")));
    }
    let seed = u64::from_le_bytes(take(8)?.try_into().unwrap());
    let config_hash = u64::from_le_bytes(take(8)?.try_into().unwrap());
    let count = u32::from_le_bytes(take(4)?.try_into().unwrap()) as usize;
    let mut tensors = Vec::with_capacity(count);
    for _ in 0..count {
        let name_len = u16::from_le_bytes(take(2)?.try_into().unwrap()) as usize;
        let name = String::from_utf8(take(name_len)?.to_vec())
            .map_err(|_| fail(String::from("tensor name is not UTF-8")))?;
        let rows = u32::from_le_bytes(take(4)?.try_into().unwrap()) as usize;
        let cols = u32::from_le_bytes(take(4)?.try_into().unwrap()) as usize;
        let raw = take(rows * cols * 8)?;
        let data: Vec<f64> = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        tensors.push((name, Matrix::from_vec(rows, cols, data)));
    }
    if at != bytes.len() {
        return Err(fail(format!("{} trailing bytes", bytes.len() - at)));
    }
    Ok(Checkpoint { seed, config_hash, tensors })
}

/// Overwrites `params` with the stored tensors, by name. Every stored
/// tensor must exist with the same shape, and every parameter must be
/// covered.
pub fn apply(path: &Path, ck: &Checkpoint, params: &mut ParamSet) -> Result<()> {
    let fail = |message: String| CliError::Checkpoint {
        path: path.to_path_buf(),
        message,
    };
    if ck.tensors.len() != params.ids().count() {
        return Err(fail(format!(
            "{} stored tensors, model has {} parameters",
            ck.tensors.len(),
            params.ids().count()
        )));
    }
    for (name, m) in &ck.tensors {
        let id = params
            .lookup(name)
            .ok_or_else(|| fail(format!("model has no parameter {name:?}")))?;
        if params.value(id).shape() != m.shape() {
            return Err(fail(format!(
                "parameter {name:?} is {:?} in the model, {:?} in the file",
                params.value(id).shape(),
                m.shape()
            )));
        }
        *params.value_mut(id) = m.clone();
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn temp_path(name: &str) -> std::path::PathBuf {
        let dir = std::env::temp_dir().join("dhgat-checkpoint-test");
        std::fs::create_dir_all(&dir).unwrap();
        dir.join(name)
    }

    fn sample_params() -> ParamSet {
        let mut p = ParamSet::new();
        p.glorot("w", 3, 2, 7);
        p.add("b", Matrix::from_vec(1, 2, vec![0.5, -0.5]));
        p
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let params = sample_params();
        let path = temp_path("rt.bin");
        save(&path, 7, 0xabcd, &params).unwrap();
        let ck = load(&path).unwrap();
        assert_eq!(ck.seed, 7);
        assert_eq!(ck.config_hash, 0xabcd);

        let mut fresh = sample_params();
        *fresh.value_mut(fresh.lookup("w").unwrap()) = Matrix::zeros(3, 2);
        apply(&path, &ck, &mut fresh).unwrap();
        let orig = params.value(params.lookup("w").unwrap());
        let got = fresh.value(fresh.lookup("w").unwrap());
        assert_eq!(orig.bit_fingerprint(), got.bit_fingerprint());
        std::fs::remove_file(&path).ok();
    }

    #[test]
    fn shape_and_coverage_mismatches_are_rejected() {
        let params = sample_params();
        let path = temp_path("mis.bin");
        save(&path, 1, 2, &params).unwrap();
        let ck = load(&path).unwrap();

        let mut wrong_shape = ParamSet::new();
        wrong_shape.glorot("w", 2, 2, 7);
        wrong_shape.add("b", Matrix::zeros(1, 2));
        let err = apply(&path, &ck, &mut wrong_shape).unwrap_err().to_string();
        assert!(err.contains("\"w\""), "{err}");

        let mut extra = sample_params();
        extra.add("c", Matrix::zeros(1, 1));
        let err = apply(&path, &ck, &mut extra).unwrap_err().to_string();
        assert!(err.contains("parameters"), "{err}");
    }

    #[test]
    fn corrupt_files_are_rejected() {
        let path = temp_path("bad.bin");
        std::fs::write(&path, b"NOPE").unwrap();
        assert!(load(&path).unwrap_err().to_string().contains("magic"));
        let params = sample_params();
        save(&path, 1, 2, &params).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        bytes.truncate(bytes.len() - 3);
        std::fs::write(&path, &bytes).unwrap();
        assert!(load(&path).unwrap_err().to_string().contains("truncated"));
        std::fs::remove_file(&path).ok();
    }
}
