//! Domain types for a dataset split across both observations and features.
//!
//! The `n x m` data matrix is cut into a `P x Q` grid: row partition `p`
//! holds observations `row_bounds[p]..row_bounds[p + 1]` and column partition
//! `q` holds features `col_bounds[q]..col_bounds[q + 1]`. Cell `(p, q)` is a
//! [`DataBlock`], owned by one logical worker. All indices are 0-based.

use std::ops::Range;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossKind {
    Hinge,
    Logistic,
}

/// Dimensions, loss and regularization of
/// `F(w) = (1/n) sum_i f_i(w'x_i) + lambda ||w||^2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProblemSpec {
    pub n: usize,
    pub m: usize,
    pub lambda: f64,
    pub loss: LossKind,
}

impl ProblemSpec {
    pub fn new(n: usize, m: usize, lambda: f64, loss: LossKind) -> Result<Self> {
        if n == 0 || m == 0 {
            return Err(Error::InvalidProblem(format!("empty problem: n={n}, m={m}")));
        }
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(Error::InvalidProblem(format!("lambda must be positive, got {lambda}")));
        }
        Ok(Self { n, m, lambda, loss })
    }

    /// Strong-convexity modulus of the regularizer, `sigma = 2 lambda`.
    ///
    /// `lambda ||w||^2 = (sigma / 2) ||w||^2`, so the dual objective, the
    /// primal-dual map and the coordinate steps are all written in terms of
    /// `sigma` to stay consistent with the primal objective.
    pub fn sigma(&self) -> f64 {
        2.0 * self.lambda
    }

    /// `sigma * n`, the scale that appears in `w(alpha) = (1/(sigma n)) X' alpha`.
    pub fn sigma_n(&self) -> f64 {
        self.sigma() * self.n as f64
    }
}

/// Row, column and sub-block boundaries of a `P x Q` partition.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PartitionGrid {
    row_bounds: Vec<usize>,
    col_bounds: Vec<usize>,
    sub_bounds: Vec<Vec<usize>>,
}

impl PartitionGrid {
    /// Validates raw boundaries. Sub-block bounds are local to their column
    /// block and may contain empty sub-blocks when `m_q < P`.
    pub fn from_bounds(
        row_bounds: Vec<usize>,
        col_bounds: Vec<usize>,
        sub_bounds: Vec<Vec<usize>>,
    ) -> Result<Self> {
        let strictly_increasing = |b: &[usize]| b.len() >= 2 && b[0] == 0 && b.windows(2).all(|w| w[0] < w[1]);
        if !strictly_increasing(&row_bounds) || !strictly_increasing(&col_bounds) {
            return Err(Error::InvalidProblem("row/column bounds must start at 0 and increase".into()));
        }
        let p = row_bounds.len() - 1;
        let q = col_bounds.len() - 1;
        if sub_bounds.len() != q {
            return Err(Error::InvalidProblem(format!("expected {q} sub-block boundary lists")));
        }
        for (qi, sb) in sub_bounds.iter().enumerate() {
            let width = col_bounds[qi + 1] - col_bounds[qi];
            let ok = sb.len() == p + 1 && sb[0] == 0 && sb[p] == width && sb.windows(2).all(|w| w[0] <= w[1]);
            if !ok {
                return Err(Error::InvalidProblem(format!("sub-blocks of column block {qi} do not tile it")));
            }
        }
        Ok(Self { row_bounds, col_bounds, sub_bounds })
    }

    pub fn p(&self) -> usize {
        self.row_bounds.len() - 1
    }

    pub fn q(&self) -> usize {
        self.col_bounds.len() - 1
    }

    /// Number of logical workers, `K = P * Q`.
    pub fn workers(&self) -> usize {
        self.p() * self.q()
    }

    pub fn n(&self) -> usize {
        *self.row_bounds.last().unwrap()
    }

    pub fn m(&self) -> usize {
        *self.col_bounds.last().unwrap()
    }

    pub fn row_bounds(&self) -> &[usize] {
        &self.row_bounds
    }

    pub fn col_bounds(&self) -> &[usize] {
        &self.col_bounds
    }

    pub fn rows(&self, p: usize) -> Range<usize> {
        self.row_bounds[p]..self.row_bounds[p + 1]
    }

    pub fn cols(&self, q: usize) -> Range<usize> {
        self.col_bounds[q]..self.col_bounds[q + 1]
    }

    pub fn n_p(&self, p: usize) -> usize {
        self.rows(p).len()
    }

    pub fn m_q(&self, q: usize) -> usize {
        self.cols(q).len()
    }

    /// Columns of sub-block `sub` of column block `q`, relative to the block.
    pub fn sub_range(&self, q: usize, sub: usize) -> Range<usize> {
        self.sub_bounds[q][sub]..self.sub_bounds[q][sub + 1]
    }

    pub fn sub_bounds(&self, q: usize) -> &[usize] {
        &self.sub_bounds[q]
    }

    /// Worker id of block `(p, q)`; workers are numbered row-major.
    pub fn worker(&self, p: usize, q: usize) -> usize {
        p * self.q() + q
    }

    /// Global observation index to `(p, local row)`.
    pub fn locate_row(&self, i: usize) -> Option<(usize, usize)> {
        locate(&self.row_bounds, i)
    }

    /// Global feature index to `(q, local column)`.
    pub fn locate_col(&self, j: usize) -> Option<(usize, usize)> {
        locate(&self.col_bounds, j)
    }
}

fn locate(bounds: &[usize], i: usize) -> Option<(usize, usize)> {
    if i >= *bounds.last()? {
        return None;
    }
    let part = bounds.partition_point(|&b| b <= i) - 1;
    Some((part, i - bounds[part]))
}

/// Cell `(p, q)` of the grid: `x[p,q]` plus the labels `y[p]` of its rows.
///
/// Labels are shared (not copied) between all blocks of a row partition.
#[derive(Debug, Clone, PartialEq)]
pub struct DataBlock {
    pub p: usize,
    pub q: usize,
    pub matrix: Matrix,
    pub labels: Arc<Vec<f64>>,
}

impl DataBlock {
    pub fn new(p: usize, q: usize, matrix: Matrix, labels: Arc<Vec<f64>>) -> Result<Self> {
        if labels.len() != matrix.rows() {
            return Err(Error::BlockDimensionMismatch { p, q });
        }
        if let Some(i) = labels.iter().position(|&y| y != 1.0 && y != -1.0) {
            return Err(Error::NonBinaryLabels(format!("block ({p}, {q}) row {i} has label {}", labels[i])));
        }
        Ok(Self { p, q, matrix, labels })
    }

    pub fn rows(&self) -> usize {
        self.matrix.rows()
    }

    pub fn cols(&self) -> usize {
        self.matrix.cols()
    }
}

/// Checks that `blocks` tile `grid` exactly and agree on labels per row.
pub fn validate_dataset(blocks: &[DataBlock], grid: &PartitionGrid) -> Result<()> {
    let mut slots: Vec<Option<&DataBlock>> = vec![None; grid.workers()];
    for b in blocks {
        if b.p >= grid.p() || b.q >= grid.q() {
            return Err(Error::BlockDimensionMismatch { p: b.p, q: b.q });
        }
        slots[grid.worker(b.p, b.q)] = Some(b);
    }
    for p in 0..grid.p() {
        let mut first: Option<&DataBlock> = None;
        for q in 0..grid.q() {
            let b = slots[grid.worker(p, q)].ok_or(Error::MissingBlock { p, q })?;
            if b.rows() != grid.n_p(p) || b.cols() != grid.m_q(q) || b.labels.len() != b.rows() {
                return Err(Error::BlockDimensionMismatch { p, q });
            }
            match first {
                None => first = Some(b),
                Some(f) if !Arc::ptr_eq(&f.labels, &b.labels) && f.labels != b.labels => {
                    return Err(Error::LabelMismatch { p });
                }
                Some(_) => {}
            }
        }
    }
    Ok(())
}

/// A validated grid together with its `P * Q` blocks, stored row-major.
#[derive(Debug, Clone)]
pub struct PartitionedData {
    grid: PartitionGrid,
    blocks: Vec<DataBlock>,
}

impl PartitionedData {
    pub fn new(grid: PartitionGrid, mut blocks: Vec<DataBlock>) -> Result<Self> {
        validate_dataset(&blocks, &grid)?;
        if blocks.len() != grid.workers() {
            return Err(Error::DimensionMismatch(format!(
                "{} blocks for a grid of {} cells",
                blocks.len(),
                grid.workers()
            )));
        }
        blocks.sort_by_key(|b| grid.worker(b.p, b.q));
        Ok(Self { grid, blocks })
    }

    pub fn grid(&self) -> &PartitionGrid {
        &self.grid
    }

    pub fn blocks(&self) -> &[DataBlock] {
        &self.blocks
    }

    pub fn block(&self, p: usize, q: usize) -> &DataBlock {
        &self.blocks[self.grid.worker(p, q)]
    }

    pub fn labels(&self, p: usize) -> &[f64] {
        &self.block(p, 0).labels
    }

    pub fn n(&self) -> usize {
        self.grid.n()
    }

    pub fn m(&self) -> usize {
        self.grid.m()
    }

    pub fn nnz(&self) -> usize {
        self.blocks.iter().map(|b| b.matrix.nnz()).sum()
    }

    pub fn into_blocks(self) -> Vec<DataBlock> {
        self.blocks
    }
}

fn check_block_lengths(kind: &str, blocks: &[Vec<f64>], bounds: &[usize]) -> Result<()> {
    if blocks.len() + 1 != bounds.len()
        || blocks.iter().enumerate().any(|(k, b)| b.len() != bounds[k + 1] - bounds[k])
    {
        return Err(Error::DimensionMismatch(format!("{kind} blocks do not match the grid")));
    }
    Ok(())
}

/// Primal weights split by column partition: `w = [w[.,1], ..., w[.,Q]]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PrimalVector {
    pub blocks: Vec<Vec<f64>>,
}

impl PrimalVector {
    pub fn zeros(grid: &PartitionGrid) -> Self {
        Self { blocks: (0..grid.q()).map(|q| vec![0.0; grid.m_q(q)]).collect() }
    }

    pub fn from_blocks(grid: &PartitionGrid, blocks: Vec<Vec<f64>>) -> Result<Self> {
        check_block_lengths("primal", &blocks, grid.col_bounds())?;
        Ok(Self { blocks })
    }

    pub fn from_flat(grid: &PartitionGrid, flat: &[f64]) -> Result<Self> {
        if flat.len() != grid.m() {
            return Err(Error::DimensionMismatch(format!("primal vector of length {} for m={}", flat.len(), grid.m())));
        }
        Ok(Self { blocks: (0..grid.q()).map(|q| flat[grid.cols(q)].to_vec()).collect() })
    }

    pub fn check(&self, grid: &PartitionGrid) -> Result<()> {
        check_block_lengths("primal", &self.blocks, grid.col_bounds())
    }

    pub fn to_flat(&self) -> Vec<f64> {
        self.blocks.concat()
    }

    pub fn norm_sq(&self) -> f64 {
        self.blocks.iter().flatten().map(|v| v * v).sum()
    }
}

/// Dual variables split by row partition: `alpha = [alpha[1,.], ..., alpha[P,.]]`.
#[derive(Debug, Clone, PartialEq)]
pub struct DualVector {
    pub blocks: Vec<Vec<f64>>,
}

impl DualVector {
    pub fn zeros(grid: &PartitionGrid) -> Self {
        Self { blocks: (0..grid.p()).map(|p| vec![0.0; grid.n_p(p)]).collect() }
    }

    pub fn from_blocks(grid: &PartitionGrid, blocks: Vec<Vec<f64>>) -> Result<Self> {
        check_block_lengths("dual", &blocks, grid.row_bounds())?;
        Ok(Self { blocks })
    }

    pub fn from_flat(grid: &PartitionGrid, flat: &[f64]) -> Result<Self> {
        if flat.len() != grid.n() {
            return Err(Error::DimensionMismatch(format!("dual vector of length {} for n={}", flat.len(), grid.n())));
        }
        Ok(Self { blocks: (0..grid.p()).map(|p| flat[grid.rows(p)].to_vec()).collect() })
    }

    pub fn check(&self, grid: &PartitionGrid) -> Result<()> {
        check_block_lengths("dual", &self.blocks, grid.row_bounds())
    }

    pub fn to_flat(&self) -> Vec<f64> {
        self.blocks.concat()
    }

    /// Conjugate domain `0 <= alpha_i y_i <= 1` (hinge and logistic) within
    /// `tol`; reports the first violating global index.
    pub fn check_dual_domain(&self, data: &PartitionedData, tol: f64) -> Result<()> {
        let mut offset = 0;
        for (p, block) in self.blocks.iter().enumerate() {
            for (i, (&a, &y)) in block.iter().zip(data.labels(p)).enumerate() {
                let s = a * y;
                if !(s >= -tol && s <= 1.0 + tol) {
                    return Err(Error::InfeasibleDual { index: offset + i });
                }
            }
            offset += block.len();
        }
        Ok(())
    }
}

/// One recorded outer iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub t: usize,
    pub primal_value: f64,
    pub dual_value: Option<f64>,
    pub rel_opt: Option<f64>,
    /// Reduction phases performed so far.
    pub reduce_ops: u64,
    /// Scalars moved through reductions so far.
    pub elements_communicated: u64,
}

impl IterationRecord {
    pub fn duality_gap(&self) -> Option<f64> {
        self.dual_value.map(|d| self.primal_value - d)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunHistory {
    pub records: Vec<IterationRecord>,
}

impl RunHistory {
    pub fn push(&mut self, record: IterationRecord) {
        debug_assert!(self.records.last().map_or(true, |r| r.t < record.t));
        self.records.push(record);
    }

    pub fn last(&self) -> Option<&IterationRecord> {
        self.records.last()
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// First iteration whose relative optimality is at or below `target`.
    pub fn first_reaching(&self, target: f64) -> Option<&IterationRecord> {
        self.records.iter().find(|r| r.rel_opt.is_some_and(|v| v <= target))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::DenseMatrix;

    fn block(p: usize, q: usize, rows: usize, cols: usize, labels: &Arc<Vec<f64>>) -> DataBlock {
        DataBlock::new(p, q, DenseMatrix::zeros(rows, cols).into(), labels.clone()).unwrap()
    }

    fn grid_8x6() -> PartitionGrid {
        PartitionGrid::from_bounds(vec![0, 4, 8], vec![0, 3, 6], vec![vec![0, 2, 3], vec![0, 2, 3]]).unwrap()
    }

    fn tiling() -> Vec<DataBlock> {
        let y0 = Arc::new(vec![1.0, -1.0, 1.0, 1.0]);
        let y1 = Arc::new(vec![-1.0, -1.0, 1.0, -1.0]);
        vec![block(0, 0, 4, 3, &y0), block(0, 1, 4, 3, &y0), block(1, 0, 4, 3, &y1), block(1, 1, 4, 3, &y1)]
    }

    #[test]
    fn complete_tiling_validates() {
        validate_dataset(&tiling(), &grid_8x6()).unwrap();
    }

    #[test]
    fn missing_block_is_reported() {
        let mut blocks = tiling();
        blocks.remove(2); // (p=1, q=0), i.e. block (2,1) counting from one
        assert!(matches!(validate_dataset(&blocks, &grid_8x6()), Err(Error::MissingBlock { p: 1, q: 0 })));
    }

    #[test]
    fn label_mismatch_within_a_row_partition() {
        let mut blocks = tiling();
        let mut other = (*blocks[0].labels).clone();
        other[2] = -other[2];
        blocks[1].labels = Arc::new(other);
        assert!(matches!(validate_dataset(&blocks, &grid_8x6()), Err(Error::LabelMismatch { p: 0 })));
    }

    #[test]
    fn wrong_block_shape() {
        let mut blocks = tiling();
        let y = blocks[3].labels.clone();
        blocks[3] = block(1, 1, 4, 2, &y);
        assert!(matches!(validate_dataset(&blocks, &grid_8x6()), Err(Error::BlockDimensionMismatch { p: 1, q: 1 })));
    }

    #[test]
    fn locate_maps_global_indices() {
        let g = grid_8x6();
        assert_eq!(g.locate_row(0), Some((0, 0)));
        assert_eq!(g.locate_row(5), Some((1, 1)));
        assert_eq!(g.locate_col(3), Some((1, 0)));
        assert_eq!(g.locate_col(6), None);
    }

    #[test]
    fn problem_spec_rejects_bad_lambda() {
        assert!(ProblemSpec::new(3, 2, 0.0, LossKind::Hinge).is_err());
        assert!(ProblemSpec::new(0, 2, 1.0, LossKind::Hinge).is_err());
        assert!(ProblemSpec::new(3, 2, 1e-3, LossKind::Hinge).is_ok());
    }

    #[test]
    fn vectors_round_trip_through_flat_form() {
        let g = grid_8x6();
        let flat: Vec<f64> = (0..6).map(f64::from).collect();
        assert_eq!(PrimalVector::from_flat(&g, &flat).unwrap().to_flat(), flat);
        assert!(PrimalVector::from_flat(&g, &flat[..5]).is_err());
    }
}
