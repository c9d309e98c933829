//! Dataset generation, LIBSVM ingestion, standardization and partitioning.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::sync::Arc;

use crate::engine::{rng_stream, sample_index, sample_uniform};
use crate::error::{Error, Result};
use crate::matrix::{CsrMatrix, DenseMatrix, Matrix};
use crate::model::{DataBlock, PartitionedData};
use crate::partition::make_grid;

/// An unpartitioned labelled dataset, labels in `{-1, +1}`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub labels: Vec<f64>,
    pub matrix: Matrix,
}

impl Dataset {
    pub fn new(labels: Vec<f64>, matrix: Matrix) -> Result<Self> {
        if labels.len() != matrix.rows() {
            return Err(Error::DimensionMismatch(format!("{} labels for {} rows", labels.len(), matrix.rows())));
        }
        Ok(Self { labels, matrix })
    }

    pub fn n(&self) -> usize {
        self.matrix.rows()
    }

    pub fn m(&self) -> usize {
        self.matrix.cols()
    }

    pub fn nnz(&self) -> usize {
        self.matrix.nnz()
    }

    /// Fraction of stored entries, `nnz / (n m)`.
    pub fn density(&self) -> f64 {
        self.nnz() as f64 / (self.n() as f64 * self.m() as f64)
    }
}

/// Synthetic classification data: planted `w` and features from `U[-1, 1]`,
/// `y = sgn(w'x)` with each label flipped with probability `flip_prob`,
/// features then scaled to unit variance.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticConfig {
    pub p: usize,
    pub q: usize,
    pub rows_per_block: usize,
    pub cols_per_block: usize,
    /// Fraction of nonzeros per row; `1.0` produces dense blocks.
    pub density: f64,
    pub seed: u64,
    pub flip_prob: f64,
}

impl SyntheticConfig {
    pub fn new(p: usize, q: usize, rows_per_block: usize, cols_per_block: usize, density: f64, seed: u64) -> Self {
        Self { p, q, rows_per_block, cols_per_block, density, seed, flip_prob: 0.1 }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.density > 0.0 && self.density <= 1.0) {
            return Err(Error::InvalidDensity(self.density));
        }
        if self.p == 0 || self.q == 0 || self.rows_per_block == 0 || self.cols_per_block == 0 {
            return Err(Error::InvalidConfig("synthetic dimensions must be at least 1".into()));
        }
        Ok(())
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.p * self.rows_per_block, self.q * self.cols_per_block)
    }

    pub fn is_dense(&self) -> bool {
        self.density >= 1.0
    }

    /// Nonzeros drawn per row in sparse mode (at least one).
    pub fn nonzeros_per_row(&self) -> usize {
        let m = self.shape().1;
        if self.is_dense() {
            m
        } else {
            ((self.density * m as f64).round() as usize).clamp(1, m)
        }
    }

    /// Stored entries of the generated dataset, known without generating it.
    pub fn nonzeros(&self) -> u64 {
        self.shape().0 as u64 * self.nonzeros_per_row() as u64
    }
}

/// Sorted sample of `k` distinct indices from `0..m` (Floyd's algorithm).
fn sample_positions(rng: &mut crate::engine::RngStream, m: usize, k: usize) -> Vec<usize> {
    let mut chosen = std::collections::BTreeSet::new();
    for j in m - k..m {
        let t = sample_index(rng, j + 1);
        if !chosen.insert(t) {
            chosen.insert(j);
        }
    }
    chosen.into_iter().collect()
}

pub fn generate_dataset(config: &SyntheticConfig) -> Result<Dataset> {
    config.validate()?;
    let (n, m) = config.shape();
    let mut wrng = rng_stream(config.seed, "synthetic/w", &[]);
    let planted: Vec<f64> = (0..m).map(|_| sample_uniform(&mut wrng, -1.0, 1.0)).collect();
    let k = config.nonzeros_per_row();
    let mut labels = Vec::with_capacity(n);
    let matrix = if config.is_dense() {
        let mut data = Vec::with_capacity(n * m);
        for i in 0..n {
            let mut rng = rng_stream(config.seed, "synthetic/row", &[i as u64]);
            let row: Vec<f64> = (0..m).map(|_| sample_uniform(&mut rng, -1.0, 1.0)).collect();
            let z: f64 = row.iter().zip(&planted).map(|(a, b)| a * b).sum();
            labels.push(label_for(z, &mut rng, config.flip_prob));
            data.extend(row);
        }
        Matrix::from(DenseMatrix::new(n, m, data)?)
    } else {
        let mut indptr = Vec::with_capacity(n + 1);
        let mut indices = Vec::with_capacity(n * k);
        let mut values = Vec::with_capacity(n * k);
        indptr.push(0);
        for i in 0..n {
            let mut rng = rng_stream(config.seed, "synthetic/row", &[i as u64]);
            let cols = sample_positions(&mut rng, m, k);
            let mut z = 0.0;
            for &j in &cols {
                let v = sample_uniform(&mut rng, -1.0, 1.0);
                z += v * planted[j];
                indices.push(j);
                values.push(v);
            }
            labels.push(label_for(z, &mut rng, config.flip_prob));
            indptr.push(indices.len());
        }
        Matrix::from(CsrMatrix::new(n, m, indptr, indices, values)?)
    };
    let mut ds = Dataset::new(labels, matrix)?;
    standardize(&mut ds);
    Ok(ds)
}

/// `sgn(z)` with `sgn(0) = +1`, flipped with probability `flip_prob`.
fn label_for(z: f64, rng: &mut crate::engine::RngStream, flip_prob: f64) -> f64 {
    let y = if z >= 0.0 { 1.0 } else { -1.0 };
    if sample_uniform(rng, 0.0, 1.0) < flip_prob {
        -y
    } else {
        y
    }
}

/// Generates the dataset and partitions it on the `P x Q` grid.
pub fn generate_synthetic(config: &SyntheticConfig) -> Result<PartitionedData> {
    let ds = generate_dataset(config)?;
    Ok(partition_dataset(&ds, config.p, config.q, None)?.data)
}

/// Scales every column to unit population variance without centering it.
/// Columns with zero variance are left untouched.
pub fn standardize(ds: &mut Dataset) {
    let (n, m) = (ds.n(), ds.m());
    if n == 0 {
        return;
    }
    let mut sum = vec![0.0; m];
    let mut sum_sq = vec![0.0; m];
    for i in 0..n {
        for (j, v) in ds.matrix.row(i).iter() {
            sum[j] += v;
            sum_sq[j] += v * v;
        }
    }
    let scale: Vec<f64> = sum
        .iter()
        .zip(&sum_sq)
        .map(|(&s, &ss)| {
            let mean = s / n as f64;
            let var = (ss / n as f64 - mean * mean).max(0.0);
            if var > 0.0 {
                1.0 / var.sqrt()
            } else {
                1.0
            }
        })
        .collect();
    match &mut ds.matrix {
        Matrix::Dense(d) => {
            for row in d.data_mut().chunks_mut(m) {
                for (v, s) in row.iter_mut().zip(&scale) {
                    *v *= s;
                }
            }
        }
        Matrix::Sparse(s) => {
            let indices = s.indices().to_vec();
            for (v, &j) in s.values_mut().iter_mut().zip(&indices) {
                *v *= scale[j];
            }
        }
    }
}

/// Partitioned data plus the permutations applied before tiling.
#[derive(Debug, Clone)]
pub struct Partitioned {
    pub data: PartitionedData,
    /// `row_order[k]` is the original index of row `k` of the tiled data.
    pub row_order: Option<Vec<usize>>,
    pub col_order: Option<Vec<usize>>,
}

fn seeded_permutation(seed: u64, domain: &str, len: usize) -> Vec<usize> {
    let mut rng = rng_stream(seed, domain, &[]);
    let mut perm: Vec<usize> = (0..len).collect();
    for i in (1..len).rev() {
        let j = sample_index(&mut rng, i + 1);
        perm.swap(i, j);
    }
    perm
}

fn permuted(ds: &Dataset, rows: &[usize], cols: &[usize]) -> Result<Dataset> {
    let mut inv_col = vec![0; cols.len()];
    for (new, &old) in cols.iter().enumerate() {
        inv_col[old] = new;
    }
    let labels = rows.iter().map(|&i| ds.labels[i]).collect();
    let matrix = match &ds.matrix {
        Matrix::Dense(_) => {
            let rows: Vec<Vec<f64>> = rows
                .iter()
                .map(|&i| {
                    let r = ds.matrix.row(i);
                    let mut out = vec![0.0; cols.len()];
                    for (j, v) in r.iter() {
                        out[inv_col[j]] = v;
                    }
                    out
                })
                .collect();
            Matrix::from(DenseMatrix::from_rows(&rows)?)
        }
        Matrix::Sparse(_) => {
            let rows: Vec<Vec<(usize, f64)>> = rows
                .iter()
                .map(|&i| {
                    let mut e: Vec<(usize, f64)> = ds.matrix.row(i).iter().map(|(j, v)| (inv_col[j], v)).collect();
                    e.sort_by_key(|&(j, _)| j);
                    e
                })
                .collect();
            Matrix::from(CsrMatrix::from_rows(cols.len(), &rows)?)
        }
    };
    Dataset::new(labels, matrix)
}

/// Tiles `ds` onto a `P x Q` grid, optionally after a seeded shuffle of rows
/// and columns.
pub fn partition_dataset(ds: &Dataset, p: usize, q: usize, shuffle_seed: Option<u64>) -> Result<Partitioned> {
    let grid = make_grid(ds.n(), ds.m(), p, q)?;
    let (source, row_order, col_order) = match shuffle_seed {
        Some(seed) => {
            let rows = seeded_permutation(seed, "shuffle/rows", ds.n());
            let cols = seeded_permutation(seed, "shuffle/cols", ds.m());
            (permuted(ds, &rows, &cols)?, Some(rows), Some(cols))
        }
        None => (ds.clone(), None, None),
    };
    let mut blocks = Vec::with_capacity(grid.workers());
    for pi in 0..grid.p() {
        let labels = Arc::new(source.labels[grid.rows(pi)].to_vec());
        for qi in 0..grid.q() {
            let matrix = source.matrix.submatrix(grid.rows(pi), grid.cols(qi));
            blocks.push(DataBlock::new(pi, qi, matrix, labels.clone())?);
        }
    }
    Ok(Partitioned { data: PartitionedData::new(grid, blocks)?, row_order, col_order })
}

/// Reassembles the tiled blocks into one dataset (in tiled order).
pub fn assemble(data: &PartitionedData) -> Result<Dataset> {
    let grid = data.grid();
    let rows: Vec<Vec<&Matrix>> = (0..grid.p()).map(|p| (0..grid.q()).map(|q| &data.block(p, q).matrix).collect()).collect();
    let matrix = Matrix::hstack_vstack(&rows)?;
    let labels = (0..grid.p()).flat_map(|p| data.labels(p).iter().copied()).collect();
    Dataset::new(labels, matrix)
}

/// Undoes the shuffle recorded in `part`, returning the dataset in its
/// original row and column order.
pub fn unshuffle(part: &Partitioned) -> Result<Dataset> {
    let tiled = assemble(&part.data)?;
    let (Some(rows), Some(cols)) = (&part.row_order, &part.col_order) else {
        return Ok(tiled);
    };
    let mut inv_rows = vec![0; rows.len()];
    for (new, &old) in rows.iter().enumerate() {
        inv_rows[old] = new;
    }
    let mut inv_cols = vec![0; cols.len()];
    for (new, &old) in cols.iter().enumerate() {
        inv_cols[old] = new;
    }
    permuted(&tiled, &inv_rows, &inv_cols)
}

fn map_labels(raw: &[f64]) -> Result<Vec<f64>> {
    let within = |set: [f64; 2]| raw.iter().all(|v| set.contains(v));
    let (neg, pos) = if within([-1.0, 1.0]) {
        (-1.0, 1.0)
    } else if within([0.0, 1.0]) {
        (0.0, 1.0)
    } else if within([1.0, 2.0]) {
        (1.0, 2.0)
    } else {
        let mut distinct: Vec<f64> = raw.to_vec();
        distinct.sort_by(f64::total_cmp);
        distinct.dedup();
        distinct.truncate(5);
        return Err(Error::NonBinaryLabels(format!("label values include {distinct:?}")));
    };
    Ok(raw.iter().map(|&v| if v == pos { 1.0 } else { debug_assert_eq!(v, neg); -1.0 }).collect())
}

/// Parses LIBSVM text: `label idx:val idx:val ...` with 1-based, strictly
/// increasing indices. Blank lines are skipped; the feature count is the
/// largest index seen.
pub fn parse_libsvm(reader: impl BufRead) -> Result<Dataset> {
    let mut raw_labels = Vec::new();
    let mut indptr = vec![0];
    let mut indices = Vec::new();
    let mut values = Vec::new();
    let mut m = 0;
    for (k, line) in reader.lines().enumerate() {
        let line_no = k + 1;
        let line = line?;
        let content = line.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let err = |reason: String| Error::Parse { line: line_no, reason };
        let mut tokens = content.split_whitespace();
        let label_tok = tokens.next().unwrap();
        let label: f64 = label_tok.parse().map_err(|_| err(format!("bad label {label_tok:?}")))?;
        let mut last: Option<usize> = None;
        for tok in tokens {
            let (idx, val) = tok.split_once(':').ok_or_else(|| err(format!("expected idx:val, got {tok:?}")))?;
            let idx: usize = idx.parse().map_err(|_| err(format!("bad index {idx:?}")))?;
            if idx == 0 {
                return Err(err("indices are 1-based".into()));
            }
            let val: f64 = val.parse().map_err(|_| err(format!("bad value {val:?}")))?;
            if last.is_some_and(|l| idx <= l) {
                return Err(err("non-increasing index".into()));
            }
            last = Some(idx);
            m = m.max(idx);
            indices.push(idx - 1);
            values.push(val);
        }
        raw_labels.push(label);
        indptr.push(indices.len());
    }
    let labels = map_labels(&raw_labels)?;
    let n = labels.len();
    Dataset::new(labels, CsrMatrix::new(n, m, indptr, indices, values)?.into())
}

pub fn read_libsvm(path: impl AsRef<Path>) -> Result<Dataset> {
    parse_libsvm(BufReader::new(File::open(path)?))
}

/// Writes LIBSVM text with `+1`/`-1` labels; zero entries are omitted.
pub fn write_libsvm(ds: &Dataset, mut out: impl Write) -> Result<()> {
    for i in 0..ds.n() {
        write!(out, "{}", if ds.labels[i] > 0.0 { "+1" } else { "-1" })?;
        for (j, v) in ds.matrix.row(i).iter() {
            if v != 0.0 {
                write!(out, " {}:{}", j + 1, v)?;
            }
        }
        writeln!(out)?;
    }
    Ok(())
}

/// Header of the binary dataset cache.
#[derive(Debug, Clone, PartialEq)]
pub struct CacheHeader {
    pub n: u64,
    pub m: u64,
    pub p: u32,
    pub q: u32,
    pub density: f64,
    pub seed: u64,
}

pub const CACHE_MAGIC: &[u8; 5] = b"GOPT1";

/// Writes `data` as: magic `GOPT1`, header `{n, m, P, Q, density, seed}`,
/// then every block in `(p, q)` row-major order. All integers are
/// little-endian `u64` except `P` and `Q` (`u32`); reals are `f64`.
///
/// A block record is `rows, cols, kind (u8: 0 dense, 1 sparse)`, the row
/// labels as `i8`, then either `rows * cols` values or
/// `indptr (rows + 1), indices (nnz), values (nnz)`.
pub fn write_cache(path: impl AsRef<Path>, data: &PartitionedData, density: f64, seed: u64) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    let grid = data.grid();
    out.write_all(CACHE_MAGIC)?;
    out.write_all(&(data.n() as u64).to_le_bytes())?;
    out.write_all(&(data.m() as u64).to_le_bytes())?;
    out.write_all(&(grid.p() as u32).to_le_bytes())?;
    out.write_all(&(grid.q() as u32).to_le_bytes())?;
    out.write_all(&density.to_le_bytes())?;
    out.write_all(&seed.to_le_bytes())?;
    for block in data.blocks() {
        out.write_all(&(block.rows() as u64).to_le_bytes())?;
        out.write_all(&(block.cols() as u64).to_le_bytes())?;
        out.write_all(&[u8::from(block.matrix.is_sparse())])?;
        let labels: Vec<u8> = block.labels.iter().map(|&y| (y as i8) as u8).collect();
        out.write_all(&labels)?;
        match &block.matrix {
            Matrix::Dense(d) => write_f64s(&mut out, d.data())?,
            Matrix::Sparse(s) => {
                write_u64s(&mut out, s.indptr())?;
                write_u64s(&mut out, s.indices())?;
                write_f64s(&mut out, s.values())?;
            }
        }
    }
    out.flush()?;
    Ok(())
}

fn write_f64s(out: &mut impl Write, v: &[f64]) -> Result<()> {
    for x in v {
        out.write_all(&x.to_le_bytes())?;
    }
    Ok(())
}

fn write_u64s(out: &mut impl Write, v: &[usize]) -> Result<()> {
    for &x in v {
        out.write_all(&(x as u64).to_le_bytes())?;
    }
    Ok(())
}

struct CacheReader<R> {
    inner: R,
}

impl<R: Read> CacheReader<R> {
    fn bytes<const N: usize>(&mut self) -> Result<[u8; N]> {
        let mut b = [0u8; N];
        self.inner.read_exact(&mut b).map_err(|e| Error::Cache(format!("truncated file: {e}")))?;
        Ok(b)
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.bytes()?))
    }

    fn usize(&mut self) -> Result<usize> {
        usize::try_from(self.u64()?).map_err(|_| Error::Cache("size overflows usize".into()))
    }

    fn f64s(&mut self, len: usize) -> Result<Vec<f64>> {
        (0..len).map(|_| Ok(f64::from_le_bytes(self.bytes()?))).collect()
    }

    fn usizes(&mut self, len: usize) -> Result<Vec<usize>> {
        (0..len).map(|_| self.usize()).collect()
    }
}

#[allow(clippy::needless_range_loop)]
pub fn read_cache(path: impl AsRef<Path>) -> Result<(CacheHeader, PartitionedData)> {
    let mut r = CacheReader { inner: BufReader::new(File::open(path)?) };
    if &r.bytes::<5>()? != CACHE_MAGIC {
        return Err(Error::Cache("bad magic".into()));
    }
    let header = CacheHeader {
        n: r.u64()?,
        m: r.u64()?,
        p: u32::from_le_bytes(r.bytes()?),
        q: u32::from_le_bytes(r.bytes()?),
        density: f64::from_le_bytes(r.bytes()?),
        seed: r.u64()?,
    };
    let grid = make_grid(header.n as usize, header.m as usize, header.p as usize, header.q as usize)?;
    let mut blocks = Vec::with_capacity(grid.workers());
    let mut row_labels: Vec<Option<Arc<Vec<f64>>>> = vec![None; grid.p()];
    for p in 0..grid.p() {
        for q in 0..grid.q() {
            let rows = r.usize()?;
            let cols = r.usize()?;
            if rows != grid.n_p(p) || cols != grid.m_q(q) {
                return Err(Error::BlockDimensionMismatch { p, q });
            }
            let [kind] = r.bytes::<1>()?;
            let mut raw = vec![0u8; rows];
            r.inner.read_exact(&mut raw).map_err(|e| Error::Cache(format!("truncated labels: {e}")))?;
            let labels: Vec<f64> = raw.iter().map(|&b| f64::from(b as i8)).collect();
            let labels = match &row_labels[p] {
                Some(shared) if **shared == labels => shared.clone(),
                Some(_) => return Err(Error::LabelMismatch { p }),
                None => {
                    let shared = Arc::new(labels);
                    row_labels[p] = Some(shared.clone());
                    shared
                }
            };
            let matrix = match kind {
                0 => Matrix::from(DenseMatrix::new(rows, cols, r.f64s(rows * cols)?)?),
                1 => {
                    let indptr = r.usizes(rows + 1)?;
                    let nnz = *indptr.last().unwrap();
                    let indices = r.usizes(nnz)?;
                    let values = r.f64s(nnz)?;
                    Matrix::from(CsrMatrix::new(rows, cols, indptr, indices, values)?)
                }
                other => return Err(Error::Cache(format!("unknown block kind {other}"))),
            };
            blocks.push(DataBlock::new(p, q, matrix, labels)?);
        }
    }
    Ok((header, PartitionedData::new(grid, blocks)?))
}
