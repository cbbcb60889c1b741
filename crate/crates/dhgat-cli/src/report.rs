//! Run artifacts. `metrics.json` and the CSVs are functions of the
//! config and seed alone — rerunning the same experiment must reproduce
//! them byte for byte — so anything time- or machine-dependent
//! (wall-clock, waiver notes, absolute paths) goes into `run.json`
//! instead.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use dhgat_core::graph::NeighborhoodLattice;
use dhgat_core::metrics::Confusion;
use dhgat_core::model::LayerTrace;
use dhgat_core::train::EpochRecord;

use crate::config::ExperimentConfig;
use crate::{CliError, Result};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricsFile {
    pub model: String,
    pub seed: u64,
    pub labeled_frac: f64,
    pub classes: usize,
    pub nodes: usize,
    pub labeled: usize,
    pub evaluated: usize,
    pub relations: Vec<String>,
    pub feature_source: String,
    pub epochs: usize,
    pub final_loss: f64,
    pub accuracy: f64,
    pub macro_f1: f64,
    pub ordinal_mae: f64,
    pub per_class_f1: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunFile {
    pub command: String,
    pub config_hash_hex: String,
    pub wall_clock_seconds: f64,
    /// Checks that could not run in this environment, with the reason.
    pub waivers: Vec<String>,
}

pub struct OutDir {
    pub path: PathBuf,
}

impl OutDir {
    /// Resolves the output directory: `DHGAT_OUT_DIR` wins over the
    /// `--out` flag, which wins over the default.
    pub fn resolve(flag: Option<&Path>, default: &str) -> Result<OutDir> {
        let path = match std::env::var("DHGAT_OUT_DIR") {
            Ok(d) if !d.is_empty() => PathBuf::from(d),
            _ => flag.map(Path::to_path_buf).unwrap_or_else(|| PathBuf::from(default)),
        };
        std::fs::create_dir_all(&path).map_err(|e| CliError::io(&path, e))?;
        Ok(OutDir { path })
    }

    pub fn file(&self, name: &str) -> PathBuf {
        self.path.join(name)
    }

    fn write(&self, name: &str, content: &str) -> Result<()> {
        let path = self.file(name);
        std::fs::write(&path, content).map_err(|e| CliError::io(&path, e))
    }

    pub fn write_metrics(&self, m: &MetricsFile) -> Result<()> {
        let mut text = serde_json::to_string_pretty(m).expect("metrics serialize");
        text.push('\n');
        self.write("metrics.json", &text)
    }

    pub fn write_run(&self, r: &RunFile) -> Result<()> {
        let mut text = serde_json::to_string_pretty(r).expect("run serialize");
        text.push('\n');
        self.write("run.json", &text)
    }

    pub fn write_config_echo(&self, cfg: &ExperimentConfig) -> Result<()> {
        let text = toml::to_string_pretty(cfg).expect("config serialize");
        self.write("config_echo.toml", &text)
    }

    pub fn write_loss_curve(&self, curve: &[EpochRecord]) -> Result<()> {
        let mut text = String::from("epoch,loss,tau\n");
        for e in curve {
            text.push_str(&format!("{},{:.17e},{}\n", e.epoch, e.loss, e.tau));
        }
        self.write("loss_curve.csv", &text)
    }

    pub fn write_confusion(&self, c: &Confusion) -> Result<()> {
        let mut text = String::from("true\\pred");
        for p in 0..c.classes {
            text.push_str(&format!(",{p}"));
        }
        text.push('\n');
        for (t, row) in c.counts.iter().enumerate() {
            text.push_str(&t.to_string());
            for &v in row {
                text.push_str(&format!(",{v}"));
            }
            text.push('\n');
        }
        self.write("confusion.csv", &text)
    }

    /// Final-epoch selection trace: which neighborhood type each node
    /// chose at each layer, with the full selection distribution.
    pub fn write_trace(
        &self,
        traces: &[LayerTrace],
        lattice: &NeighborhoodLattice,
        relation_names: &[String],
    ) -> Result<()> {
        let mut text = format!("# relations: {}\n", relation_names.join(","));
        let width = traces.iter().map(|t| t.rho.cols()).max().unwrap_or(0);
        text.push_str("layer,node,chosen_index,chosen_mask");
        for c in 0..width {
            text.push_str(&format!(",rho_{c}"));
        }
        text.push('\n');
        for t in traces {
            for (node, &chosen) in t.chosen.iter().enumerate() {
                let mask = lattice.mask(chosen as usize);
                text.push_str(&format!("{},{node},{chosen},{mask}", t.layer));
                if t.rho.rows() > node && t.rho.cols() > 0 {
                    for &v in t.rho.row(node) {
                        text.push_str(&format!(",{v:.17e}"));
                    }
                }
                text.push('\n');
            }
        }
        self.write("trace.csv", &text)
    }
}

/// One row of a parsed trace file.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub layer: usize,
    pub node: usize,
    pub chosen_index: usize,
    pub chosen_mask: u16,
}

pub struct ParsedTrace {
    pub relation_names: Vec<String>,
    pub rows: Vec<TraceRow>,
}

pub fn read_trace(path: &Path) -> Result<ParsedTrace> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let fail = |line: usize, message: String| CliError::Format {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut relation_names = Vec::new();
    let mut rows = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix("# relations:") {
            relation_names =
                rest.trim().split(',').map(|s| s.trim().to_string()).collect();
            continue;
        }
        if line.starts_with('#') || line.starts_with("layer,") {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() < 4 {
            return Err(fail(i + 1, String::from("expected at least 4 columns")));
        }
        let parse = |s: &str, what: &str| {
            s.parse::<usize>()
                .map_err(|_| fail(i + 1, format!("bad {what} {s:?}")))
        };
        rows.push(TraceRow {
            layer: parse(fields[0], "layer")?,
            node: parse(fields[1], "node")?,
            chosen_index: parse(fields[2], "chosen index")?,
            chosen_mask: parse(fields[3], "mask")? as u16,
        });
    }
    if rows.is_empty() {
        return Err(fail(0, String::from("no trace rows")));
    }
    Ok(ParsedTrace { relation_names, rows })
}
