//! LightGCN mobility encoder: a learnable per-node table propagated L layers
//! over the normalized binary adjacency of the sampled subgraph, with all
//! layer outputs summed. No weight matrices, no nonlinearities — the node
//! table is the only parameter, and propagation is a fixed linear operator.

use crate::embed::EmbeddingTable;
use crate::error::{Error, Result};
use crate::graph::MobilityGraph;
use crate::hexgrid::CellId;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NormMode {
    /// 1/sqrt(d_i d_j) on the binary adjacency (standard LightGCN).
    #[default]
    Symmetric,
    /// 1/sqrt(d_i): row-side normalization only.
    Row,
}

/// Normalized adjacency in CSR form plus the layer count.
#[derive(Debug, Clone)]
pub struct PropagationPlan {
    n: usize,
    pub layers: usize,
    pub norm_mode: NormMode,
    row_offsets: Vec<usize>,
    col_indices: Vec<u32>,
    /// Coefficients of A-hat.
    vals: Vec<f64>,
    /// Coefficients of A-hat transposed (same sparsity pattern since the
    /// adjacency is symmetric); None when A-hat is itself symmetric.
    vals_t: Option<Vec<f64>>,
}

impl PropagationPlan {
    pub fn new(g: &MobilityGraph, layers: usize, norm_mode: NormMode) -> Self {
        let n = g.len();
        let degrees: Vec<f64> = (0..n).map(|i| g.degree(i) as f64).collect();
        let row_offsets = g.row_offsets().to_vec();
        let col_indices = g.col_indices().to_vec();
        let mut vals = vec![0.0; col_indices.len()];
        let mut vals_t = vec![0.0; col_indices.len()];
        for i in 0..n {
            for e in row_offsets[i]..row_offsets[i + 1] {
                let j = col_indices[e] as usize;
                match norm_mode {
                    NormMode::Symmetric => {
                        vals[e] = 1.0 / (degrees[i] * degrees[j]).sqrt();
                    }
                    NormMode::Row => {
                        vals[e] = 1.0 / degrees[i].sqrt();
                        // Transposed entry at the same (i, j) slot: A[j][i].
                        vals_t[e] = 1.0 / degrees[j].sqrt();
                    }
                }
            }
        }
        PropagationPlan {
            n,
            layers,
            norm_mode,
            row_offsets,
            col_indices,
            vals,
            vals_t: matches!(norm_mode, NormMode::Row).then_some(vals_t),
        }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    fn spmm(&self, coeffs: &[f64], x: &[f64], d: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.n * d];
        for i in 0..self.n {
            let dst = &mut out[i * d..(i + 1) * d];
            for e in self.row_offsets[i]..self.row_offsets[i + 1] {
                let j = self.col_indices[e] as usize;
                let c = coeffs[e];
                let src = &x[j * d..(j + 1) * d];
                for (o, s) in dst.iter_mut().zip(src) {
                    *o += c * s;
                }
            }
        }
        out
    }

    fn check_shape(&self, x: &[f64], d: usize) -> Result<()> {
        if d == 0 || x.len() != self.n * d {
            return Err(Error::Validation(format!(
                "matrix of {} values does not match {} nodes x dim {}",
                x.len(),
                self.n,
                d
            )));
        }
        Ok(())
    }

    /// sum_{k=0..L} A-hat^k X.
    pub fn propagate_matrix(&self, x: &[f64], d: usize) -> Result<Vec<f64>> {
        self.check_shape(x, d)?;
        let mut acc = x.to_vec();
        let mut cur = x.to_vec();
        for _ in 0..self.layers {
            cur = self.spmm(&self.vals, &cur, d);
            for (a, c) in acc.iter_mut().zip(&cur) {
                *a += c;
            }
        }
        Ok(acc)
    }

    /// Adjoint of `propagate_matrix`: sum_{k=0..L} (A-hat^T)^k G. With
    /// symmetric normalization the operator is self-adjoint.
    pub fn propagate_backward_matrix(&self, grad_out: &[f64], d: usize) -> Result<Vec<f64>> {
        self.check_shape(grad_out, d)?;
        let coeffs = self.vals_t.as_deref().unwrap_or(&self.vals);
        let mut acc = grad_out.to_vec();
        let mut cur = grad_out.to_vec();
        for _ in 0..self.layers {
            cur = self.spmm(coeffs, &cur, d);
            for (a, c) in acc.iter_mut().zip(&cur) {
                *a += c;
            }
        }
        Ok(acc)
    }
}

/// The encoder's only parameters: one learnable row per subgraph node.
#[derive(Debug, Clone)]
pub struct NodeEmbeddingParams {
    pub dim: usize,
    pub table: Vec<f64>,
}

impl NodeEmbeddingParams {
    /// Initialize from a pre-encoding table, rows gathered in graph-node
    /// order. Every graph node must be present in the table.
    pub fn from_table(init: &EmbeddingTable, nodes: &[CellId]) -> Result<Self> {
        let dim = init.dim();
        let mut table = Vec::with_capacity(nodes.len() * dim);
        for &cell in nodes {
            let row = init.get(cell).ok_or_else(|| {
                Error::Validation(format!("node {cell} missing from the init table"))
            })?;
            table.extend_from_slice(row);
        }
        Ok(NodeEmbeddingParams { dim, table })
    }

    pub fn all_finite(&self) -> bool {
        self.table.iter().all(|v| v.is_finite())
    }
}

/// Layer-summed propagation of the node table, reassembled as an embedding
/// table over `nodes`.
pub fn propagate(
    params: &NodeEmbeddingParams,
    plan: &PropagationPlan,
    nodes: &[CellId],
) -> Result<EmbeddingTable> {
    if nodes.len() != plan.len() {
        return Err(Error::Validation(format!(
            "{} nodes vs plan over {}",
            nodes.len(),
            plan.len()
        )));
    }
    let out = plan.propagate_matrix(&params.table, params.dim)?;
    EmbeddingTable::new(nodes.to_vec(), params.dim, out)
}
