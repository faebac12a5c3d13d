//! Flattening a table into the token sequence the encoder sees.

use std::ops::Range;

use ndarray::Array2;

use super::vocab::Vocabulary;
use crate::table::{CellLoc, Table};

/// Whether two cells may attend to each other: same cell, same body row,
/// same column (the header belongs to its column), or both in the header row.
pub fn cells_visible(a: CellLoc, b: CellLoc) -> bool {
    match (a, b) {
        (CellLoc::Header { .. }, CellLoc::Header { .. }) => true,
        (CellLoc::Body { row: r1, col: c1 }, CellLoc::Body { row: r2, col: c2 }) => r1 == r2 || c1 == c2,
        (CellLoc::Header { col: c1 }, CellLoc::Body { col: c2, .. })
        | (CellLoc::Body { col: c1, .. }, CellLoc::Header { col: c2 }) => c1 == c2,
    }
}

/// A table flattened to tokens: header cells first, then body cells row by
/// row, each cell truncated to `max_tokens_per_cell`.
#[derive(Clone, Debug)]
pub struct PreparedTable {
    pub table_id: String,
    pub token_ids: Vec<usize>,
    /// Position of each token within its cell.
    pub positions: Vec<usize>,
    /// Cell of each token.
    pub token_cells: Vec<CellLoc>,
    /// Token range of every cell, in canonical cell order. Empty cells have
    /// empty ranges.
    pub cells: Vec<(CellLoc, Range<usize>)>,
    /// Number of tokens dropped by truncation.
    pub truncated: usize,
}

impl PreparedTable {
    pub fn new(table: &Table, vocab: &Vocabulary, max_tokens_per_cell: usize) -> Self {
        let mut prepared = PreparedTable {
            table_id: table.id().to_string(),
            token_ids: Vec::new(),
            positions: Vec::new(),
            token_cells: Vec::new(),
            cells: Vec::with_capacity(table.n_cells()),
            truncated: 0,
        };
        for loc in table.locs() {
            let cell = table.cell(loc).expect("canonical locations are in range");
            let start = prepared.token_ids.len();
            let kept = cell.len().min(max_tokens_per_cell);
            prepared.truncated += cell.len() - kept;
            for (z, tok) in cell.tokens()[..kept].iter().enumerate() {
                prepared.token_ids.push(vocab.id_of_display(tok));
                prepared.positions.push(z);
                prepared.token_cells.push(loc);
            }
            prepared.cells.push((loc, start..prepared.token_ids.len()));
        }
        if prepared.truncated > 0 {
            log::warn!(
                "table {}: {} tokens beyond {max_tokens_per_cell} per cell were truncated",
                table.id(),
                prepared.truncated
            );
        }
        prepared
    }

    pub fn len(&self) -> usize {
        self.token_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.token_ids.is_empty()
    }

    /// Token range of a cell, if the cell exists.
    pub fn cell_range(&self, loc: CellLoc) -> Option<Range<usize>> {
        self.cells.iter().find(|(l, _)| *l == loc).map(|(_, r)| r.clone())
    }

    /// Token-pair visibility; `[u, v]` is true when token `u` may attend to `v`.
    pub fn visibility(&self) -> Array2<bool> {
        let n = self.len();
        Array2::from_shape_fn((n, n), |(u, v)| cells_visible(self.token_cells[u], self.token_cells[v]))
    }

    /// Additive attention mask: 0 where visible, `-inf` elsewhere.
    pub(crate) fn attention_bias(&self) -> Array2<f64> {
        self.visibility().mapv(|v| if v { 0.0 } else { f64::NEG_INFINITY })
    }
}

/// Token-level visibility matrix of a table, with tokens in canonical order.
pub fn visibility_matrix(table: &Table, max_tokens_per_cell: usize) -> Array2<bool> {
    // token identity does not matter for visibility
    PreparedTable::new(table, &Vocabulary::from(Vec::new()), max_tokens_per_cell).visibility()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_cell_sees_itself() {
        let t = Table::from_text("t", &[""], &[vec!["flow rate"]]).unwrap();
        let v = visibility_matrix(&t, 16);
        assert_eq!(v.dim(), (2, 2));
        assert!(v.iter().all(|&x| x));
    }

    #[test]
    fn truncates_long_cells() {
        let t = Table::from_text("t", &["a b c d"], &[vec!["e"]]).unwrap();
        let p = PreparedTable::new(&t, &Vocabulary::from(Vec::new()), 2);
        assert_eq!(p.len(), 3);
        assert_eq!(p.truncated, 2);
        assert_eq!(p.positions, [0, 1, 0]);
        assert_eq!(p.cell_range(CellLoc::Body { row: 0, col: 0 }), Some(2..3));
    }
}
