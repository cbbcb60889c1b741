//! Reading the tab-separated statement corpus from disk.

use std::path::Path;

use dhgat_core::liar::{parse_record, Dataset};

use crate::{CliError, Result};

/// Reads one corpus TSV file. Blank lines are skipped; any malformed row
/// aborts with its 1-based line number.
pub fn read_liar_file(path: &Path) -> Result<Dataset> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let mut records = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        records.push(parse_record(line, i + 1)?);
    }
    if records.is_empty() {
        return Err(CliError::Format {
            path: path.to_path_buf(),
            line: 0,
            message: String::from("no records in file"),
        });
    }
    Ok(Dataset::new(records))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn sample_line(id: &str, label: &str, speaker: &str) -> String {
        format!(
            "{id}\t{label}\tthe statement text.\teconomy,jobs\t{speaker}\tGovernor\tTexas\trepublican\t0\t1\t2\t3\t4\ta radio interview"
        )
    }

    #[test]
    fn reads_records_and_skips_blank_lines() {
        let dir = std::env::temp_dir().join("dhgat-ingest-test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("mini.tsv");
        let mut f = std::fs::File::create(&path).unwrap();
        writeln!(f, "{}", sample_line("1.json", "true", "alice")).unwrap();
        writeln!(f).unwrap();
        writeln!(f, "{}", sample_line("2.json", "pants-fire", "bob")).unwrap();
        drop(f);

        let ds = read_liar_file(&path).unwrap();
        assert_eq!(ds.len(), 2);
        assert_eq!(ds.records[0].label, 5);
        assert_eq!(ds.records[1].label, 0);
        assert_eq!(ds.records[1].speaker, "bob");
        std::fs::remove_file(&path).ok();
    }

    #[test]
    fn malformed_row_reports_its_line_number() {
        let dir = std::env::temp_dir().join("dhgat-ingest-test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("bad.tsv");
        let mut f = std::fs::File::create(&path).unwrap();
        writeln!(f, "{}", sample_line("1.json", "true", "alice")).unwrap();
        writeln!(f, "only\tthree\tfields").unwrap();
        drop(f);

        let err = read_liar_file(&path).unwrap_err().to_string();
        assert!(err.contains('2'), "should carry the line number: {err}");
        std::fs::remove_file(&path).ok();
    }
}
