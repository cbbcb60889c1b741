//! Plain-text serialization of the heterogeneous graph, one undirected
//! edge per line:
//!
//! ```text
//! n 200
//! relation speaker
//! edge 0 5
//! edge 3 17
//! relation knn
//! edge 0 2
//! ```

use std::fmt::Write as _;
use std::path::Path;

use dhgat_core::graph::{Csr, HeteroGraph, RelationId};

use crate::{CliError, Result};

pub fn render_graph(hg: &HeteroGraph) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "n {}", hg.n);
    for i in 0..hg.relation_count() {
        let id = RelationId(i as u16);
        let _ = writeln!(out, "relation {}", hg.registry.name(id));
        let csr = hg.relation(id);
        for u in 0..hg.n {
            for &v in csr.neighbors(u) {
                if (u as u32) < v {
                    let _ = writeln!(out, "edge {u} {v}");
                }
            }
        }
    }
    out
}

pub fn write_graph(path: &Path, hg: &HeteroGraph) -> Result<()> {
    std::fs::write(path, render_graph(hg)).map_err(|e| CliError::io(path, e))
}

pub fn read_graph(path: &Path) -> Result<HeteroGraph> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    parse_graph(path, &text)
}

fn parse_graph(path: &Path, text: &str) -> Result<HeteroGraph> {
    let fail = |line: usize, message: String| CliError::Format {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut n: Option<usize> = None;
    let mut hg: Option<HeteroGraph> = None;
    let mut pending: Option<(String, Vec<(u32, u32)>)> = None;

    let flush =
        |hg: &mut Option<HeteroGraph>, pending: &mut Option<(String, Vec<(u32, u32)>)>,
         line: usize|
         -> Result<()> {
            if let Some((name, edges)) = pending.take() {
                let g = hg.as_mut().expect("graph initialized before relations");
                let csr = Csr::from_edges(g.n, &edges);
                g.add_relation(&name, csr)
                    .map_err(|e| fail(line, e.to_string()))?;
            }
            Ok(())
        };

    for (i, raw) in text.lines().enumerate() {
        let row = i + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut parts = line.split_whitespace();
        match parts.next() {
            Some("n") => {
                if n.is_some() {
                    return Err(fail(row, String::from("repeated n line")));
                }
                let count: usize = parts
                    .next()
                    .and_then(|s| s.parse().ok())
                    .ok_or_else(|| fail(row, String::from("n needs a count")))?;
                n = Some(count);
                hg = Some(HeteroGraph::new(count));
            }
            Some("relation") => {
                if hg.is_none() {
                    return Err(fail(row, String::from("relation before n line")));
                }
                flush(&mut hg, &mut pending, row)?;
                let name = parts
                    .next()
                    .ok_or_else(|| fail(row, String::from("relation needs a name")))?;
                pending = Some((name.to_string(), Vec::new()));
            }
            Some("edge") => {
                let nn = n.ok_or_else(|| fail(row, String::from("edge before n line")))?;
                let (_, edges) = pending
                    .as_mut()
                    .ok_or_else(|| fail(row, String::from("edge before any relation")))?;
                let u: u32 = parts
                    .next()
                    .and_then(|s| s.parse().ok())
                    .ok_or_else(|| fail(row, String::from("edge needs two endpoints")))?;
                let v: u32 = parts
                    .next()
                    .and_then(|s| s.parse().ok())
                    .ok_or_else(|| fail(row, String::from("edge needs two endpoints")))?;
                if (u as usize) >= nn || (v as usize) >= nn {
                    return Err(fail(row, format!("edge {u} {v} outside 0..{nn}")));
                }
                edges.push((u, v));
            }
            Some(other) => {
                return Err(fail(row, format!("unknown directive {other:?}")));
            }
            None => unreachable!("blank lines are skipped"),
        }
    }
    let last = text.lines().count();
    flush(&mut hg, &mut pending, last)?;
    hg.ok_or_else(|| fail(0, String::from("empty graph file")))
}
