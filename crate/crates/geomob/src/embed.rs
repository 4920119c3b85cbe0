//! Dense per-cell embedding table with an id index.

use crate::error::{Error, Result};
use crate::hexgrid::CellId;
use std::collections::HashMap;

/// Row-major matrix of per-cell vectors keyed by cell id.
#[derive(Debug, Clone)]
pub struct EmbeddingTable {
    cells: Vec<CellId>,
    dim: usize,
    data: Vec<f64>,
    index: HashMap<u64, usize>,
}

impl EmbeddingTable {
    pub fn new(cells: Vec<CellId>, dim: usize, data: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Validation("embedding dimension must be positive".into()));
        }
        if data.len() != cells.len() * dim {
            return Err(Error::Validation(format!(
                "embedding data length {} does not match {} cells x dim {}",
                data.len(),
                cells.len(),
                dim
            )));
        }
        let mut index = HashMap::with_capacity(cells.len());
        for (i, c) in cells.iter().enumerate() {
            if index.insert(c.0, i).is_some() {
                return Err(Error::Validation(format!("duplicate cell id {c}")));
            }
        }
        Ok(EmbeddingTable { cells, dim, data, index })
    }

    pub fn zeros(cells: Vec<CellId>, dim: usize) -> Result<Self> {
        let n = cells.len();
        Self::new(cells, dim, vec![0.0; n * dim])
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn cells(&self) -> &[CellId] {
        &self.cells
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn position(&self, cell: CellId) -> Option<usize> {
        self.index.get(&cell.0).copied()
    }

    pub fn get(&self, cell: CellId) -> Option<&[f64]> {
        self.position(cell).map(|i| self.row(i))
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cell(q: i64) -> CellId {
        CellId::from_axial(6, q, 0).unwrap()
    }

    #[test]
    fn lookup_by_cell_id() {
        let t = EmbeddingTable::new(vec![cell(0), cell(1)], 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(t.get(cell(1)).unwrap(), &[3.0, 4.0]);
        assert_eq!(t.get(cell(5)), None);
    }

    #[test]
    fn rejects_shape_mismatch_and_duplicates() {
        assert!(EmbeddingTable::new(vec![cell(0)], 2, vec![1.0]).is_err());
        assert!(EmbeddingTable::new(vec![cell(0), cell(0)], 1, vec![1.0, 2.0]).is_err());
        assert!(EmbeddingTable::new(vec![], 0, vec![]).is_err());
    }
}
