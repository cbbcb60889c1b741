//! Heterogeneous news graph: one symmetric relation per shared attribute or
//! KNN radius, a lattice of neighborhood types (relation subsets), and the
//! union attention structure the layers run on.
//!
//! Relations are bitmask-indexed (at most 16), so a neighborhood type is a
//! `u16` and "does this edge survive selection `t`" is one `&`.

use alloc::collections::BTreeMap;
use alloc::rc::Rc;
use alloc::string::String;
use alloc::vec::Vec;

use rand::Rng;

use crate::error::{Error, Result};
use crate::rng::stream_rng;
use crate::tape::{AttGraph, EdgeCompat};

pub const MAX_RELATIONS: usize = 16;

/// Sentinel mask recorded for self edges, which belong to no relation but
/// are always active.
pub const SELF_EDGE_MASK: u16 = u16::MAX;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct RelationId(pub u16);

impl RelationId {
    pub fn bit(self) -> u16 {
        1 << self.0
    }
}

/// Symmetric adjacency in compressed sparse rows: per-node neighbor lists,
/// sorted ascending, deduplicated, self loops dropped.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Csr {
    n: usize,
    offsets: Vec<usize>,
    neighbors: Vec<u32>,
}

impl Csr {
    pub fn empty(n: usize) -> Self {
        Csr { n, offsets: alloc::vec![0; n + 1], neighbors: Vec::new() }
    }

    /// Builds from directed pairs: both directions are inserted, duplicates
    /// collapse, self loops are discarded.
    pub fn from_edges(n: usize, edges: &[(u32, u32)]) -> Self {
        let mut degree = alloc::vec![0usize; n];
        for &(u, v) in edges {
            assert!((u as usize) < n && (v as usize) < n, "edge endpoint out of range");
            if u != v {
                degree[u as usize] += 1;
                degree[v as usize] += 1;
            }
        }
        let mut offsets = alloc::vec![0usize; n + 1];
        for i in 0..n {
            offsets[i + 1] = offsets[i] + degree[i];
        }
        let mut neighbors = alloc::vec![0u32; offsets[n]];
        let mut cursor = offsets.clone();
        for &(u, v) in edges {
            if u == v {
                continue;
            }
            neighbors[cursor[u as usize]] = v;
            cursor[u as usize] += 1;
            neighbors[cursor[v as usize]] = u;
            cursor[v as usize] += 1;
        }
        // Sort and dedup each row in place, then compact.
        let mut out_offsets = alloc::vec![0usize; n + 1];
        let mut write = 0;
        for v in 0..n {
            let row = &mut neighbors[offsets[v]..offsets[v + 1]];
            row.sort_unstable();
            let mut last: Option<u32> = None;
            let lo = offsets[v];
            let hi = offsets[v + 1];
            let mut w = write;
            for i in lo..hi {
                let x = neighbors[i];
                if last != Some(x) {
                    neighbors[w] = x;
                    w += 1;
                    last = Some(x);
                }
            }
            write = w;
            out_offsets[v + 1] = write;
        }
        neighbors.truncate(write);
        Csr { n, offsets: out_offsets, neighbors }
    }

    pub fn node_count(&self) -> usize {
        self.n
    }

    pub fn neighbors(&self, v: usize) -> &[u32] {
        &self.neighbors[self.offsets[v]..self.offsets[v + 1]]
    }

    pub fn degree(&self, v: usize) -> usize {
        self.offsets[v + 1] - self.offsets[v]
    }

    /// Number of undirected edges.
    pub fn edge_count(&self) -> usize {
        self.neighbors.len() / 2
    }

    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        self.neighbors(u).binary_search(&(v as u32)).is_ok()
    }

    pub fn is_symmetric(&self) -> bool {
        (0..self.n).all(|u| self.neighbors(u).iter().all(|&v| self.has_edge(v as usize, u)))
    }
}

#[derive(Debug, Clone, Default)]
pub struct RelationRegistry {
    names: Vec<String>,
    by_name: BTreeMap<String, u16>,
}

impl RelationRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: &str) -> Result<RelationId> {
        if self.by_name.contains_key(name) {
            return Err(Error::Graph(alloc::format!("duplicate relation {name:?}")));
        }
        if self.names.len() >= MAX_RELATIONS {
            return Err(Error::Graph(alloc::format!(
                "relation limit {MAX_RELATIONS} exceeded by {name:?}"
            )));
        }
        let id = self.names.len() as u16;
        self.names.push(String::from(name));
        self.by_name.insert(String::from(name), id);
        Ok(RelationId(id))
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn name(&self, id: RelationId) -> &str {
        &self.names[id.0 as usize]
    }

    pub fn lookup(&self, name: &str) -> Option<RelationId> {
        self.by_name.get(name).copied().map(RelationId)
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }
}

/// All relations over one node set.
#[derive(Debug, Clone)]
pub struct HeteroGraph {
    pub n: usize,
    pub registry: RelationRegistry,
    pub relations: Vec<Csr>,
}

impl HeteroGraph {
    pub fn new(n: usize) -> Self {
        HeteroGraph { n, registry: RelationRegistry::new(), relations: Vec::new() }
    }

    pub fn add_relation(&mut self, name: &str, csr: Csr) -> Result<RelationId> {
        if csr.node_count() != self.n {
            return Err(Error::Graph(alloc::format!(
                "relation {name:?} has {} nodes, graph has {}",
                csr.node_count(),
                self.n
            )));
        }
        let id = self.registry.add(name)?;
        self.relations.push(csr);
        Ok(id)
    }

    pub fn relation(&self, id: RelationId) -> &Csr {
        &self.relations[id.0 as usize]
    }

    pub fn relation_count(&self) -> usize {
        self.relations.len()
    }

    /// Sorted union of `v`'s neighbors over the relations set in `mask`.
    pub fn active_neighbors(&self, mask: u16, v: usize) -> Vec<u32> {
        let mut out: Vec<u32> = Vec::new();
        for (i, csr) in self.relations.iter().enumerate() {
            if mask & (1 << i) != 0 {
                out.extend_from_slice(csr.neighbors(v));
            }
        }
        out.sort_unstable();
        out.dedup();
        out
    }
}

/// The candidate neighborhood types a node may select among, each a relation
/// bitmask. Ordered by (popcount, mask value); the empty type comes first.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NeighborhoodLattice {
    pub types: Vec<u16>,
    pub relation_count: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LatticeMode {
    /// Every subset of relations: `2^R` types.
    Full,
    /// Empty set, each singleton, and the full set.
    Restricted,
}

impl NeighborhoodLattice {
    pub fn build(relation_count: usize, mode: LatticeMode) -> Result<Self> {
        if relation_count == 0 {
            return Err(Error::Graph(String::from("lattice over zero relations")));
        }
        if relation_count > MAX_RELATIONS {
            return Err(Error::Graph(alloc::format!(
                "lattice over {relation_count} relations exceeds limit {MAX_RELATIONS}"
            )));
        }
        let mut types: Vec<u16> = match mode {
            LatticeMode::Full => {
                if relation_count > 12 {
                    return Err(Error::Graph(alloc::format!(
                        "full lattice over {relation_count} relations is too large; \
                         use the restricted lattice"
                    )));
                }
                (0..(1u32 << relation_count)).map(|m| m as u16).collect()
            }
            LatticeMode::Restricted => {
                let full: u16 = if relation_count == 16 {
                    u16::MAX
                } else {
                    (1u16 << relation_count) - 1
                };
                let mut t: Vec<u16> = alloc::vec![0];
                t.extend((0..relation_count).map(|i| 1u16 << i));
                t.push(full);
                t
            }
        };
        types.sort_unstable_by_key(|&m| (m.count_ones(), m));
        types.dedup();
        Ok(NeighborhoodLattice { types, relation_count })
    }

    pub fn len(&self) -> usize {
        self.types.len()
    }

    pub fn is_empty(&self) -> bool {
        self.types.is_empty()
    }

    pub fn mask(&self, index: usize) -> u16 {
        self.types[index]
    }

    pub fn index_of(&self, mask: u16) -> Option<usize> {
        self.types.iter().position(|&m| m == mask)
    }

    /// Human-readable relation list for a type, e.g. `{speaker,knn-5}`.
    pub fn describe(&self, index: usize, registry: &RelationRegistry) -> String {
        let mask = self.types[index];
        if mask == 0 {
            return String::from("{}");
        }
        let mut out = String::from("{");
        let mut first = true;
        for i in 0..self.relation_count {
            if mask & (1 << i) != 0 {
                if !first {
                    out.push(',');
                }
                out.push_str(registry.name(RelationId(i as u16)));
                first = false;
            }
        }
        out.push('}');
        out
    }
}

/// Union attention structure: every relation edge plus a self edge per node,
/// grouped by destination with the self edge first, each edge tagged with
/// the bitmask of relations it appears in.
#[derive(Debug, Clone)]
pub struct UnionGraph {
    pub att: Rc<AttGraph>,
    pub compat: Rc<EdgeCompat>,
    /// Per-edge relation bitmask; `SELF_EDGE_MASK` for self edges.
    pub edge_masks: Vec<u16>,
}

impl UnionGraph {
    pub fn build(hg: &HeteroGraph, lattice: &NeighborhoodLattice) -> Self {
        assert_eq!(
            lattice.relation_count,
            hg.relation_count(),
            "lattice relation count vs graph"
        );
        let n = hg.n;
        let mut seg = Vec::with_capacity(n + 1);
        let mut src: Vec<u32> = Vec::new();
        let mut edge_masks: Vec<u16> = Vec::new();
        // Distinct masks -> compat list index; list 0 is the self-edge list
        // holding every type.
        let all_types: Vec<u32> = (0..lattice.len() as u32).collect();
        let mut lists: Vec<Vec<u32>> = alloc::vec![all_types];
        let mut list_of_mask: BTreeMap<u16, u32> = BTreeMap::new();
        let mut list_of_edge: Vec<u32> = Vec::new();

        seg.push(0);
        let mut mask_buf: BTreeMap<u32, u16> = BTreeMap::new();
        for v in 0..n {
            // Self edge first in every segment.
            src.push(v as u32);
            edge_masks.push(SELF_EDGE_MASK);
            list_of_edge.push(0);

            mask_buf.clear();
            for (i, csr) in hg.relations.iter().enumerate() {
                let bit = 1u16 << i;
                for &u in csr.neighbors(v) {
                    *mask_buf.entry(u).or_insert(0) |= bit;
                }
            }
            for (&u, &mask) in mask_buf.iter() {
                src.push(u);
                edge_masks.push(mask);
                let next_id = lists.len() as u32;
                let lid = *list_of_mask.entry(mask).or_insert_with(|| {
                    lists.push(
                        lattice
                            .types
                            .iter()
                            .enumerate()
                            .filter(|(_, &t)| t & mask != 0)
                            .map(|(i, _)| i as u32)
                            .collect(),
                    );
                    next_id
                });
                list_of_edge.push(lid);
            }
            seg.push(src.len());
        }
        let att = AttGraph { n, seg, src };
        att.check();
        UnionGraph {
            att: Rc::new(att),
            compat: Rc::new(EdgeCompat { list_of_edge, lists }),
            edge_masks,
        }
    }

    pub fn edge_count(&self) -> usize {
        self.att.edge_count()
    }
}

/// Builds a relation linking statements that share a value of one attribute.
///
/// `values[v]` lists node `v`'s values (empty list: no edges). Nodes sharing
/// any value form a clique. With `cap = Some(c)`, each node keeps a seeded
/// sample of at most `c` co-members before symmetrization, so final degrees
/// can slightly exceed `c` where other nodes sampled inward.
pub fn build_attribute_relation(
    n: usize,
    values: &[Vec<String>],
    cap: Option<usize>,
    seed: u64,
    relation_name: &str,
) -> Result<Csr> {
    if values.len() != n {
        return Err(Error::Graph(alloc::format!(
            "attribute {relation_name:?}: {} value rows for {} nodes",
            values.len(),
            n
        )));
    }
    let mut groups: BTreeMap<&str, Vec<u32>> = BTreeMap::new();
    for (v, vals) in values.iter().enumerate() {
        for val in vals {
            groups.entry(val.as_str()).or_default().push(v as u32);
        }
    }
    let mut rng = stream_rng(seed, &alloc::format!("cap/{relation_name}"));
    let mut edges: Vec<(u32, u32)> = Vec::new();
    let mut scratch: Vec<u32> = Vec::new();
    for v in 0..n as u32 {
        scratch.clear();
        for val in &values[v as usize] {
            let group = &groups[val.as_str()];
            scratch.extend(group.iter().copied().filter(|&u| u != v));
        }
        scratch.sort_unstable();
        scratch.dedup();
        if let Some(c) = cap {
            if scratch.len() > c {
                // Partial Fisher-Yates: first c entries become the sample.
                for i in 0..c {
                    let j = i + rng.gen_range(0..scratch.len() - i);
                    scratch.swap(i, j);
                }
                scratch.truncate(c);
            }
        }
        edges.extend(scratch.iter().map(|&u| (v, u)));
    }
    Ok(Csr::from_edges(n, &edges))
}
