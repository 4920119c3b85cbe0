//! Co-visitation graph construction and subgraph sampling.
//!
//! An undirected weighted graph over cells: every pair of distinct cells an
//! entity visits within the same time bucket gains +1 edge weight, summed
//! across entities and buckets. Stored in compressed sparse row form with
//! both directions of every edge present.

use crate::error::{Error, Result};
use crate::hexgrid::CellId;
use crate::rng;
use rand::Rng;
use std::collections::{BTreeMap, BTreeSet, HashMap};

/// One visit: an entity was seen in a cell during a time bucket.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EventRecord {
    pub entity: String,
    pub cell: CellId,
    pub bucket: u32,
}

/// Undirected weighted graph in CSR form. Nodes are sorted by cell id;
/// columns are sorted within each row; every edge appears in both rows.
#[derive(Debug, Clone, PartialEq)]
pub struct MobilityGraph {
    nodes: Vec<CellId>,
    row_offsets: Vec<usize>,
    col_indices: Vec<u32>,
    weights: Vec<f64>,
}

impl MobilityGraph {
    /// Assemble from a symmetric (min, max) ordinal edge map. `nodes` must be
    /// sorted and deduplicated.
    fn from_edge_map(nodes: Vec<CellId>, edges: &BTreeMap<(u32, u32), f64>) -> Result<Self> {
        let n = nodes.len();
        for (&(a, b), &w) in edges {
            if a as usize >= n || b as usize >= n {
                return Err(Error::Validation(format!("edge ({a},{b}) references unknown node")));
            }
            if a == b {
                return Err(Error::Validation(format!("self-loop on node {a}")));
            }
            if !(w.is_finite() && w > 0.0) {
                return Err(Error::Validation(format!("edge ({a},{b}) weight {w} not positive")));
            }
        }
        let mut degree = vec![0usize; n];
        for &(a, b) in edges.keys() {
            degree[a as usize] += 1;
            degree[b as usize] += 1;
        }
        let mut row_offsets = vec![0usize; n + 1];
        for i in 0..n {
            row_offsets[i + 1] = row_offsets[i] + degree[i];
        }
        let m2 = row_offsets[n];
        let mut col_indices = vec![0u32; m2];
        let mut weights = vec![0.0f64; m2];
        let mut cursor = row_offsets.clone();
        // BTreeMap iteration is ordered by (a, b), so each row's columns come
        // out sorted without a separate pass.
        for (&(a, b), &w) in edges {
            let ca = cursor[a as usize];
            col_indices[ca] = b;
            weights[ca] = w;
            cursor[a as usize] += 1;
        }
        for (&(a, b), &w) in edges {
            let cb = cursor[b as usize];
            col_indices[cb] = a;
            weights[cb] = w;
            cursor[b as usize] += 1;
        }
        // The second pass appends the (b, a) direction after all (a, b)
        // entries of each row; restore column order per row.
        let mut graph = MobilityGraph { nodes, row_offsets, col_indices, weights };
        graph.sort_rows();
        Ok(graph)
    }

    fn sort_rows(&mut self) {
        for i in 0..self.len() {
            let (lo, hi) = (self.row_offsets[i], self.row_offsets[i + 1]);
            let mut paired: Vec<(u32, f64)> = self.col_indices[lo..hi]
                .iter()
                .copied()
                .zip(self.weights[lo..hi].iter().copied())
                .collect();
            paired.sort_by_key(|&(c, _)| c);
            for (k, (c, w)) in paired.into_iter().enumerate() {
                self.col_indices[lo + k] = c;
                self.weights[lo + k] = w;
            }
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Number of stored CSR entries (2x the undirected edge count).
    pub fn num_arcs(&self) -> usize {
        self.col_indices.len()
    }

    pub fn nodes(&self) -> &[CellId] {
        &self.nodes
    }

    pub fn row_offsets(&self) -> &[usize] {
        &self.row_offsets
    }

    pub fn col_indices(&self) -> &[u32] {
        &self.col_indices
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn degree(&self, i: usize) -> usize {
        self.row_offsets[i + 1] - self.row_offsets[i]
    }

    pub fn weighted_degree(&self, i: usize) -> f64 {
        let (lo, hi) = (self.row_offsets[i], self.row_offsets[i + 1]);
        self.weights[lo..hi].iter().sum()
    }

    /// Neighbors and weights of node `i`.
    pub fn row(&self, i: usize) -> (&[u32], &[f64]) {
        let (lo, hi) = (self.row_offsets[i], self.row_offsets[i + 1]);
        (&self.col_indices[lo..hi], &self.weights[lo..hi])
    }

    pub fn ordinal_of(&self, cell: CellId) -> Option<usize> {
        self.nodes.binary_search(&cell).ok()
    }

    /// Undirected edges as (ordinal a, ordinal b, weight) with a < b.
    pub fn undirected_edges(&self) -> Vec<(u32, u32, f64)> {
        let mut out = Vec::with_capacity(self.num_arcs() / 2);
        for i in 0..self.len() {
            let (cols, ws) = self.row(i);
            for (&j, &w) in cols.iter().zip(ws) {
                if (i as u32) < j {
                    out.push((i as u32, j, w));
                }
            }
        }
        out
    }

    /// Build from undirected (cell, cell, weight) pairs keyed by raw cell id.
    pub fn from_weighted_pairs(pairs: BTreeMap<(u64, u64), f64>) -> Result<Self> {
        let mut node_set: BTreeSet<CellId> = BTreeSet::new();
        for &(a, b) in pairs.keys() {
            node_set.insert(CellId(a));
            node_set.insert(CellId(b));
        }
        let nodes: Vec<CellId> = node_set.into_iter().collect();
        let ordinal: HashMap<u64, u32> =
            nodes.iter().enumerate().map(|(i, c)| (c.0, i as u32)).collect();
        let mut edges: BTreeMap<(u32, u32), f64> = BTreeMap::new();
        for ((a, b), w) in pairs {
            let (oa, ob) = (ordinal[&a], ordinal[&b]);
            let key = if oa < ob { (oa, ob) } else { (ob, oa) };
            *edges.entry(key).or_insert(0.0) += w;
        }
        MobilityGraph::from_edge_map(nodes, &edges)
    }

    /// Rebuild from raw CSR parts, validating all structural invariants.
    pub fn from_csr(
        nodes: Vec<CellId>,
        row_offsets: Vec<usize>,
        col_indices: Vec<u32>,
        weights: Vec<f64>,
    ) -> Result<Self> {
        let n = nodes.len();
        if row_offsets.len() != n + 1 || row_offsets[0] != 0 {
            return Err(Error::Validation("malformed row offsets".into()));
        }
        if col_indices.len() != weights.len() || *row_offsets.last().unwrap() != col_indices.len() {
            return Err(Error::Validation("CSR array lengths disagree".into()));
        }
        if nodes.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Validation("node index must be sorted and unique".into()));
        }
        let g = MobilityGraph { nodes, row_offsets, col_indices, weights };
        for i in 0..n {
            if g.row_offsets[i] > g.row_offsets[i + 1] {
                return Err(Error::Validation("row offsets must be nondecreasing".into()));
            }
            let (cols, ws) = g.row(i);
            for (k, (&j, &w)) in cols.iter().zip(ws).enumerate() {
                if j as usize >= n {
                    return Err(Error::Validation(format!("column {j} out of range")));
                }
                if j as usize == i {
                    return Err(Error::Validation(format!("self-loop on node {i}")));
                }
                if !(w.is_finite() && w > 0.0) {
                    return Err(Error::Validation(format!("weight {w} on edge ({i},{j})")));
                }
                if k > 0 && cols[k - 1] >= j {
                    return Err(Error::Validation(format!("row {i} columns not sorted")));
                }
                // Symmetry: the mirror entry must exist with equal weight.
                let (mcols, mws) = g.row(j as usize);
                match mcols.binary_search(&(i as u32)) {
                    Ok(p) if mws[p] == w => {}
                    _ => {
                        return Err(Error::Validation(format!(
                            "edge ({i},{j}) has no symmetric counterpart"
                        )))
                    }
                }
            }
        }
        Ok(g)
    }
}

/// Build the co-visitation graph from an event stream.
///
/// Per (entity, bucket), the set of distinct visited cells forms a clique;
/// each unordered pair contributes +1. Groups with a single cell contribute
/// nothing. The result is independent of event order.
pub fn build_graph(events: impl IntoIterator<Item = EventRecord>) -> Result<MobilityGraph> {
    let mut groups: HashMap<(String, u32), BTreeSet<CellId>> = HashMap::new();
    let mut node_set: BTreeSet<CellId> = BTreeSet::new();
    for ev in events {
        node_set.insert(ev.cell);
        groups.entry((ev.entity, ev.bucket)).or_default().insert(ev.cell);
    }
    let nodes: Vec<CellId> = node_set.into_iter().collect();
    let ordinal: HashMap<u64, u32> =
        nodes.iter().enumerate().map(|(i, c)| (c.0, i as u32)).collect();
    let mut edges: BTreeMap<(u32, u32), f64> = BTreeMap::new();
    for cells in groups.values() {
        let ords: Vec<u32> = cells.iter().map(|c| ordinal[&c.0]).collect();
        for (k, &a) in ords.iter().enumerate() {
            for &b in &ords[k + 1..] {
                let key = if a < b { (a, b) } else { (b, a) };
                *edges.entry(key).or_insert(0.0) += 1.0;
            }
        }
    }
    MobilityGraph::from_edge_map(nodes, &edges)
}

fn validate_ratio(ratio: f64) -> Result<()> {
    if !(ratio.is_finite() && ratio > 0.0 && ratio <= 1.0) {
        return Err(Error::Validation(format!("sampling ratio {ratio} outside (0, 1]")));
    }
    Ok(())
}

fn keep_count(ratio: f64, degree: usize) -> usize {
    if degree == 0 {
        0
    } else {
        ((ratio * degree as f64).ceil() as usize).clamp(1, degree)
    }
}

/// Per-node top-k selection: for each node, the positions (into its CSR row)
/// of its ceil(ratio * degree) highest-weight incident edges, ties broken by
/// smaller neighbor cell id.
pub fn per_node_topk(g: &MobilityGraph, ratio: f64) -> Result<Vec<Vec<u32>>> {
    validate_ratio(ratio)?;
    let mut keep = Vec::with_capacity(g.len());
    for i in 0..g.len() {
        let (cols, ws) = g.row(i);
        let k = keep_count(ratio, cols.len());
        let mut order: Vec<usize> = (0..cols.len()).collect();
        order.sort_by(|&a, &b| {
            ws[b].partial_cmp(&ws[a])
                .unwrap()
                .then_with(|| g.nodes[cols[a] as usize].cmp(&g.nodes[cols[b] as usize]))
        });
        let mut chosen: Vec<u32> = order[..k].iter().map(|&p| cols[p]).collect();
        chosen.sort_unstable();
        keep.push(chosen);
    }
    Ok(keep)
}

/// Per-node uniform selection without replacement, seeded per node so the
/// outcome is independent of traversal order.
pub fn per_node_random(g: &MobilityGraph, ratio: f64, seed: u64) -> Result<Vec<Vec<u32>>> {
    validate_ratio(ratio)?;
    let mut keep = Vec::with_capacity(g.len());
    for i in 0..g.len() {
        let (cols, _) = g.row(i);
        let d = cols.len();
        let k = keep_count(ratio, d);
        let mut idx: Vec<usize> = (0..d).collect();
        let mut rng = rng::pcg(rng::derive_seed(seed, i as u64));
        // Partial Fisher-Yates: the first k slots are a uniform sample.
        for s in 0..k {
            let j = rng.gen_range(s..d);
            idx.swap(s, j);
        }
        let mut chosen: Vec<u32> = idx[..k].iter().map(|&p| cols[p]).collect();
        chosen.sort_unstable();
        keep.push(chosen);
    }
    Ok(keep)
}

fn subgraph_from_keep(g: &MobilityGraph, keep: &[Vec<u32>]) -> Result<MobilityGraph> {
    // Union symmetrization: an edge survives if either endpoint kept it.
    let mut edges: BTreeMap<(u32, u32), f64> = BTreeMap::new();
    for (i, chosen) in keep.iter().enumerate() {
        let (cols, ws) = g.row(i);
        for &j in chosen {
            let p = cols.binary_search(&j).expect("kept neighbor must exist");
            let key = if (i as u32) < j { (i as u32, j) } else { (j, i as u32) };
            edges.insert(key, ws[p]);
        }
    }
    MobilityGraph::from_edge_map(g.nodes.clone(), &edges)
}

/// Keep each node's highest-flow edges; kept sets are unioned so an edge
/// chosen by either endpoint survives.
pub fn sample_topk(g: &MobilityGraph, ratio: f64) -> Result<MobilityGraph> {
    let keep = per_node_topk(g, ratio)?;
    subgraph_from_keep(g, &keep)
}

/// Keep a uniform random fraction of each node's edges; deterministic given
/// the seed.
pub fn sample_random(g: &MobilityGraph, ratio: f64, seed: u64) -> Result<MobilityGraph> {
    let keep = per_node_random(g, ratio, seed)?;
    subgraph_from_keep(g, &keep)
}
