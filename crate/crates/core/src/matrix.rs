//! Row-major dense and compressed-sparse-row storage for data blocks.
//!
//! Solvers only ever touch one observation at a time, so both layouts are
//! accessed through [`RowView`], which also supports restricting a row to a
//! contiguous column range (a sub-block).

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch(format!(
                "dense {rows}x{cols} matrix needs {} entries, got {}",
                rows * cols,
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != cols {
                return Err(Error::DimensionMismatch(format!(
                    "row {i} has {} columns, expected {cols}",
                    row.len()
                )));
            }
            data.extend_from_slice(row);
        }
        Ok(Self { rows: rows.len(), cols, data })
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }
}

/// Compressed sparse rows. Column indices are local to the block and
/// strictly increasing within each row.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    rows: usize,
    cols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    pub fn new(
        rows: usize,
        cols: usize,
        indptr: Vec<usize>,
        indices: Vec<usize>,
        values: Vec<f64>,
    ) -> Result<Self> {
        let bad = |msg: String| Err(Error::DimensionMismatch(msg));
        if indptr.len() != rows + 1 || indptr[0] != 0 {
            return bad(format!("indptr must have {} entries starting at 0", rows + 1));
        }
        if indices.len() != values.len() || *indptr.last().unwrap() != indices.len() {
            return bad("indptr, indices and values disagree on nonzero count".into());
        }
        for i in 0..rows {
            if indptr[i] > indptr[i + 1] {
                return bad(format!("indptr decreases at row {i}"));
            }
            let row = &indices[indptr[i]..indptr[i + 1]];
            if row.windows(2).any(|w| w[0] >= w[1]) {
                return bad(format!("column indices of row {i} are not strictly increasing"));
            }
            if row.last().is_some_and(|&j| j >= cols) {
                return bad(format!("row {i} has a column index beyond {cols}"));
            }
        }
        Ok(Self { rows, cols, indptr, indices, values })
    }

    /// Builds a matrix from per-row `(column, value)` lists.
    pub fn from_rows(cols: usize, rows: &[Vec<(usize, f64)>]) -> Result<Self> {
        let mut indptr = Vec::with_capacity(rows.len() + 1);
        let mut indices = Vec::new();
        let mut values = Vec::new();
        indptr.push(0);
        for row in rows {
            for &(j, v) in row {
                indices.push(j);
                values.push(v);
            }
            indptr.push(indices.len());
        }
        Self::new(rows.len(), cols, indptr, indices, values)
    }

    pub fn indptr(&self) -> &[usize] {
        &self.indptr
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }
}

/// A data matrix in either layout.
#[derive(Debug, Clone, PartialEq)]
pub enum Matrix {
    Dense(DenseMatrix),
    Sparse(CsrMatrix),
}

impl From<DenseMatrix> for Matrix {
    fn from(m: DenseMatrix) -> Self {
        Matrix::Dense(m)
    }
}

impl From<CsrMatrix> for Matrix {
    fn from(m: CsrMatrix) -> Self {
        Matrix::Sparse(m)
    }
}

impl Matrix {
    pub fn rows(&self) -> usize {
        match self {
            Matrix::Dense(d) => d.rows,
            Matrix::Sparse(s) => s.rows,
        }
    }

    pub fn cols(&self) -> usize {
        match self {
            Matrix::Dense(d) => d.cols,
            Matrix::Sparse(s) => s.cols,
        }
    }

    /// Stored entries: every cell for dense storage, explicit entries for CSR.
    pub fn nnz(&self) -> usize {
        match self {
            Matrix::Dense(d) => d.data.len(),
            Matrix::Sparse(s) => s.values.len(),
        }
    }

    pub fn is_sparse(&self) -> bool {
        matches!(self, Matrix::Sparse(_))
    }

    pub fn row(&self, i: usize) -> RowView<'_> {
        match self {
            Matrix::Dense(d) => RowView::Dense(d.row(i)),
            Matrix::Sparse(s) => {
                let range = s.indptr[i]..s.indptr[i + 1];
                RowView::Sparse { indices: &s.indices[range.clone()], values: &s.values[range], offset: 0 }
            }
        }
    }

    pub fn to_dense_rows(&self) -> Vec<Vec<f64>> {
        (0..self.rows())
            .map(|i| {
                let mut out = vec![0.0; self.cols()];
                for (j, v) in self.row(i).iter() {
                    out[j] = v;
                }
                out
            })
            .collect()
    }

    /// Copies the rectangle `rows x cols` into a new matrix of the same layout.
    pub fn submatrix(&self, rows: std::ops::Range<usize>, cols: std::ops::Range<usize>) -> Matrix {
        let width = cols.end - cols.start;
        match self {
            Matrix::Dense(d) => {
                let mut data = Vec::with_capacity(rows.len() * width);
                for i in rows.clone() {
                    data.extend_from_slice(&d.row(i)[cols.clone()]);
                }
                Matrix::Dense(DenseMatrix { rows: rows.len(), cols: width, data })
            }
            Matrix::Sparse(_) => {
                let mut indptr = Vec::with_capacity(rows.len() + 1);
                let mut indices = Vec::new();
                let mut values = Vec::new();
                indptr.push(0);
                for i in rows.clone() {
                    for (j, v) in self.row(i).slice(cols.start, cols.end).iter() {
                        indices.push(j);
                        values.push(v);
                    }
                    indptr.push(indices.len());
                }
                Matrix::Sparse(CsrMatrix { rows: rows.len(), cols: width, indptr, indices, values })
            }
        }
    }

    /// Stitches a grid of blocks back together. `blocks[p][q]` must agree on
    /// row counts along `p` and column counts along `q`; the result is sparse
    /// if any block is sparse.
    pub fn hstack_vstack(blocks: &[Vec<&Matrix>]) -> Result<Matrix> {
        let any_sparse = blocks.iter().flatten().any(|b| b.is_sparse());
        let cols: usize = blocks.first().map_or(0, |r| r.iter().map(|b| b.cols()).sum());
        let mut dense_rows = Vec::new();
        let mut sparse_rows = Vec::new();
        for row_blocks in blocks {
            let height = row_blocks.first().map_or(0, |b| b.rows());
            let width: usize = row_blocks.iter().map(|b| b.cols()).sum();
            if width != cols || row_blocks.iter().any(|b| b.rows() != height) {
                return Err(Error::DimensionMismatch("blocks do not tile a rectangle".into()));
            }
            for i in 0..height {
                let mut offset = 0;
                if any_sparse {
                    let mut entries = Vec::new();
                    for b in row_blocks {
                        entries.extend(b.row(i).iter().map(|(j, v)| (j + offset, v)));
                        offset += b.cols();
                    }
                    sparse_rows.push(entries);
                } else {
                    let mut dense = Vec::with_capacity(cols);
                    for b in row_blocks {
                        match b.row(i) {
                            RowView::Dense(r) => dense.extend_from_slice(r),
                            RowView::Sparse { .. } => unreachable!(),
                        }
                    }
                    dense_rows.push(dense);
                }
            }
        }
        if any_sparse {
            Ok(CsrMatrix::from_rows(cols, &sparse_rows)?.into())
        } else {
            let rows = dense_rows.len();
            Ok(DenseMatrix::new(rows, cols, dense_rows.concat())?.into())
        }
    }
}

/// One observation of a block, possibly restricted to a column range.
///
/// Column positions reported by a view are relative to the start of the
/// range it was sliced to.
#[derive(Debug, Clone, Copy)]
pub enum RowView<'a> {
    Dense(&'a [f64]),
    Sparse { indices: &'a [usize], values: &'a [f64], offset: usize },
}

impl<'a> RowView<'a> {
    /// Restricts the view to columns `lo..hi` (relative to this view).
    pub fn slice(self, lo: usize, hi: usize) -> RowView<'a> {
        match self {
            RowView::Dense(r) => RowView::Dense(&r[lo..hi]),
            RowView::Sparse { indices, values, offset } => {
                let a = indices.partition_point(|&j| j < lo + offset);
                let b = indices.partition_point(|&j| j < hi + offset);
                RowView::Sparse { indices: &indices[a..b], values: &values[a..b], offset: offset + lo }
            }
        }
    }

    pub fn dot(&self, w: &[f64]) -> f64 {
        match *self {
            RowView::Dense(r) => {
                debug_assert_eq!(r.len(), w.len());
                r.iter().zip(w).map(|(a, b)| a * b).sum()
            }
            RowView::Sparse { indices, values, offset } => {
                indices.iter().zip(values).map(|(&j, v)| v * w[j - offset]).sum()
            }
        }
    }

    /// `out += scale * row`.
    pub fn axpy(&self, scale: f64, out: &mut [f64]) {
        match *self {
            RowView::Dense(r) => {
                for (o, v) in out.iter_mut().zip(r) {
                    *o += scale * v;
                }
            }
            RowView::Sparse { indices, values, offset } => {
                for (&j, v) in indices.iter().zip(values) {
                    out[j - offset] += scale * v;
                }
            }
        }
    }

    pub fn norm_sq(&self) -> f64 {
        match *self {
            RowView::Dense(r) => r.iter().map(|v| v * v).sum(),
            RowView::Sparse { values, .. } => values.iter().map(|v| v * v).sum(),
        }
    }

    /// Explicit entries as `(column, value)`; dense rows yield every column.
    pub fn iter(&self) -> Box<dyn Iterator<Item = (usize, f64)> + 'a> {
        match *self {
            RowView::Dense(r) => Box::new(r.iter().copied().enumerate()),
            RowView::Sparse { indices, values, offset } => {
                Box::new(indices.iter().zip(values).map(move |(&j, &v)| (j - offset, v)))
            }
        }
    }
}
