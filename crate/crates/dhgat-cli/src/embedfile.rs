//! Loading pretrained statement embeddings. Two formats:
//!
//! * text — one line per record, `id<TAB>v1<TAB>v2...` (comma also
//!   accepted), keyed by record id, any order;
//! * binary — magic `EMB1`, `u32` row count, `u32` dimension, then
//!   little-endian `f32` values in record order.
//!
//! Without a file, statements are hashed into a fixed number of buckets
//! so every pipeline stage still runs.

use std::collections::BTreeMap;
use std::path::Path;

use dhgat_core::embed::{fallback_hash_embed, validate_embeddings};
use dhgat_core::liar::Dataset;
use dhgat_core::tensor::Matrix;
use dhgat_core::Error;

use crate::{CliError, Result};

pub const BINARY_MAGIC: &[u8; 4] = b"EMB1";

pub fn load_embedding_file(path: &Path, dataset: &Dataset) -> Result<Matrix> {
    let bytes = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
    let x = if bytes.starts_with(BINARY_MAGIC) {
        parse_binary(path, &bytes, dataset.len())?
    } else {
        let text = String::from_utf8(bytes).map_err(|_| CliError::Format {
            path: path.to_path_buf(),
            line: 0,
            message: String::from("not valid UTF-8 and not the binary format"),
        })?;
        let by_id = parse_text(path, &text)?;
        assemble(&by_id, dataset)?
    };
    validate_embeddings(&x, dataset.len())?;
    Ok(x)
}

/// Deterministic stand-in features when no embedding file is configured.
pub fn hashed_features(dataset: &Dataset, dim: usize, seed: u64) -> Matrix {
    let texts: Vec<String> =
        dataset.records.iter().map(|r| r.statement.clone()).collect();
    fallback_hash_embed(&texts, dim, seed)
}

fn parse_binary(path: &Path, bytes: &[u8], expected_rows: usize) -> Result<Matrix> {
    let fail = |message: String| CliError::Format {
        path: path.to_path_buf(),
        line: 0,
        message,
    };
    if bytes.len() < 12 {
        return Err(fail(String::from("binary embedding file truncated")));
    }
    let n = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    let dim = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let want = 12 + n * dim * 4;
    if bytes.len() != want {
        return Err(fail(format!(
            "binary embedding file is {} bytes, header implies {want}",
            bytes.len()
        )));
    }
    if n != expected_rows {
        return Err(fail(format!("{n} rows, dataset has {expected_rows}")));
    }
    let mut data = Vec::with_capacity(n * dim);
    for chunk in bytes[12..].chunks_exact(4) {
        data.push(f32::from_le_bytes(chunk.try_into().unwrap()) as f64);
    }
    Ok(Matrix::from_vec(n, dim, data))
}

fn parse_text(path: &Path, text: &str) -> Result<BTreeMap<String, Vec<f64>>> {
    let mut by_id = BTreeMap::new();
    let mut dim: Option<usize> = None;
    for (i, line) in text.lines().enumerate() {
        let row = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let sep = if line.contains('\t') { '\t' } else { ',' };
        let mut fields = line.split(sep);
        let id = fields.next().unwrap_or("").trim().to_string();
        if id.is_empty() {
            return Err(CliError::Format {
                path: path.to_path_buf(),
                line: row,
                message: String::from("missing record id"),
            });
        }
        let values: Vec<f64> = fields
            .map(|f| {
                f.trim().parse::<f64>().map_err(|_| CliError::Format {
                    path: path.to_path_buf(),
                    line: row,
                    message: format!("bad number {:?}", f.trim()),
                })
            })
            .collect::<Result<_>>()?;
        match dim {
            None => dim = Some(values.len()),
            Some(d) if d != values.len() => {
                return Err(CliError::Format {
                    path: path.to_path_buf(),
                    line: row,
                    message: format!("{} values, earlier rows had {d}", values.len()),
                })
            }
            _ => {}
        }
        if by_id.insert(id.clone(), values).is_some() {
            return Err(CliError::Format {
                path: path.to_path_buf(),
                line: row,
                message: format!("duplicate id {id:?}"),
            });
        }
    }
    Ok(by_id)
}

fn assemble(by_id: &BTreeMap<String, Vec<f64>>, dataset: &Dataset) -> Result<Matrix> {
    let missing: Vec<String> = dataset
        .records
        .iter()
        .filter(|r| !by_id.contains_key(&r.id))
        .map(|r| r.id.clone())
        .collect();
    if !missing.is_empty() {
        return Err(CliError::Core(Error::MissingIds(missing)));
    }
    let dim = by_id.values().next().map(Vec::len).unwrap_or(0);
    let mut x = Matrix::zeros(dataset.len(), dim);
    for (r, rec) in dataset.records.iter().enumerate() {
        x.row_mut(r).copy_from_slice(&by_id[&rec.id]);
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use dhgat_core::liar::{parse_record, Dataset};
    use std::io::Write;

    fn two_record_dataset() -> Dataset {
        let mk = |id: &str| {
            parse_record(
                &format!(
                    "{id}\ttrue\tsome words here\tjobs\ts\tj\tst\tp\t0\t0\t0\t0\t0\tc"
                ),
                1,
            )
            .unwrap()
        };
        Dataset::new(vec![mk("a.json"), mk("b.json")])
    }

    fn temp_path(name: &str) -> std::path::PathBuf {
        let dir = std::env::temp_dir().join("dhgat-embed-test");
        std::fs::create_dir_all(&dir).unwrap();
        dir.join(name)
    }

    #[test]
    fn text_embeddings_align_by_id() {
        let ds = two_record_dataset();
        let path = temp_path("e.tsv");
        let mut f = std::fs::File::create(&path).unwrap();
        // Order reversed relative to the dataset on purpose.
        writeln!(f, "b.json\t3.0\t4.0").unwrap();
        writeln!(f, "a.json\t1.0\t2.0").unwrap();
        drop(f);
        let x = load_embedding_file(&path, &ds).unwrap();
        assert_eq!(x.row(0), &[1.0, 2.0]);
        assert_eq!(x.row(1), &[3.0, 4.0]);
        std::fs::remove_file(&path).ok();
    }

    #[test]
    fn missing_ids_are_listed() {
        let ds = two_record_dataset();
        let path = temp_path("short.csv");
        std::fs::write(&path, "a.json,1.0,2.0\n").unwrap();
        let err = load_embedding_file(&path, &ds).unwrap_err().to_string();
        assert!(err.contains("b.json"), "{err}");
        std::fs::remove_file(&path).ok();
    }

    #[test]
    fn binary_round_trip() {
        let ds = two_record_dataset();
        let path = temp_path("e.bin");
        let mut bytes = Vec::new();
        bytes.extend_from_slice(BINARY_MAGIC);
        bytes.extend_from_slice(&2u32.to_le_bytes());
        bytes.extend_from_slice(&3u32.to_le_bytes());
        for v in [1.0f32, 2.0, 3.0, 4.0, 5.0, 6.0] {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        std::fs::write(&path, &bytes).unwrap();
        let x = load_embedding_file(&path, &ds).unwrap();
        assert_eq!(x.shape(), (2, 3));
        assert_eq!(x.get(1, 2), 6.0);

        bytes.truncate(bytes.len() - 4);
        std::fs::write(&path, &bytes).unwrap();
        let err = load_embedding_file(&path, &ds).unwrap_err().to_string();
        assert!(err.contains("bytes"), "{err}");
        std::fs::remove_file(&path).ok();
    }

    #[test]
    fn hashed_features_are_unit_rows() {
        let ds = two_record_dataset();
        let x = hashed_features(&ds, 64, 9);
        assert_eq!(x.shape(), (2, 64));
        for r in 0..2 {
            let n: f64 = x.row(r).iter().map(|v| v * v).sum();
            assert!((n - 1.0).abs() < 1e-12);
        }
    }
}
