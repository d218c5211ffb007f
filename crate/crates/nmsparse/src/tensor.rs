//! Dense matrices, binary masks, N:M configs and block decomposition.
//!
//! Everything here is immutable after construction and safe to share
//! across threads. Magnitude comparisons are exact on the f64 bits;
//! ties are broken by the lowest flat row-major index, which makes all
//! downstream mask builders bit-reproducible regardless of thread count.

use crate::error::{Error, Result};
use std::fmt;
use std::str::FromStr;

/// Dense 2-D real-valued matrix, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    /// Rejects empty shapes, length mismatches and non-finite entries.
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::Dimension(format!(
                "matrix dimensions must be >= 1, got {rows}x{cols}"
            )));
        }
        if data.len() != rows * cols {
            return Err(Error::Dimension(format!(
                "data length {} does not match {rows}x{cols}",
                data.len()
            )));
        }
        if let Some(index) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { index });
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, |row| row.len());
        if rows.iter().any(|row| row.len() != c) {
            return Err(Error::Dimension("ragged rows".into()));
        }
        Self::new(r, c, rows.concat())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        debug_assert!(i < self.rows && j < self.cols);
        self.data[i * self.cols + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn transpose(&self) -> Matrix {
        let mut data = vec![0.0; self.data.len()];
        for i in 0..self.rows {
            for j in 0..self.cols {
                data[j * self.rows + i] = self.get(i, j);
            }
        }
        Matrix {
            rows: self.cols,
            cols: self.rows,
            data,
        }
    }

    /// Total ℓ1 norm, summed in flat row-major order.
    pub fn l1(&self) -> f64 {
        self.data.iter().map(|v| v.abs()).sum()
    }

    /// Values of a block in row-major order within the block.
    pub fn block_values(&self, view: &BlockView) -> Vec<f64> {
        let m = view.m;
        match view.kind {
            BlockKind::RowRun => self.data[view.row * self.cols + view.col..][..m].to_vec(),
            BlockKind::Square => {
                let mut out = Vec::with_capacity(m * m);
                for i in 0..m {
                    let start = (view.row + i) * self.cols + view.col;
                    out.extend_from_slice(&self.data[start..start + m]);
                }
                out
            }
        }
    }
}

/// Binary mask congruent to a [`Matrix`]; 1 = kept, 0 = pruned.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask {
    rows: usize,
    cols: usize,
    bits: Vec<u8>,
}

impl Mask {
    pub fn new(rows: usize, cols: usize, bits: Vec<u8>) -> Result<Self> {
        if rows == 0 || cols == 0 || bits.len() != rows * cols {
            return Err(Error::Dimension(format!(
                "mask bits length {} does not match {rows}x{cols}",
                bits.len()
            )));
        }
        if bits.iter().any(|&b| b > 1) {
            return Err(Error::InvalidMask("mask bits must be 0 or 1".into()));
        }
        Ok(Self { rows, cols, bits })
    }

    pub fn all_ones(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            bits: vec![1; rows * cols],
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn bits(&self) -> &[u8] {
        &self.bits
    }

    #[inline]
    pub fn kept(&self, i: usize, j: usize) -> bool {
        self.bits[i * self.cols + j] == 1
    }

    pub fn kept_count(&self) -> usize {
        self.bits.iter().map(|&b| b as usize).sum()
    }

    pub fn zeros_count(&self) -> usize {
        self.rows * self.cols - self.kept_count()
    }

    /// Kept entries inside a block; O(block size).
    pub fn kept_in_block(&self, view: &BlockView) -> usize {
        let m = view.m;
        match view.kind {
            BlockKind::RowRun => self.bits[view.row * self.cols + view.col..][..m]
                .iter()
                .map(|&b| b as usize)
                .sum(),
            BlockKind::Square => (0..m)
                .map(|i| {
                    let start = (view.row + i) * self.cols + view.col;
                    self.bits[start..start + m]
                        .iter()
                        .map(|&b| b as usize)
                        .sum::<usize>()
                })
                .sum(),
        }
    }

    pub fn transpose(&self) -> Mask {
        let mut bits = vec![0u8; self.bits.len()];
        for i in 0..self.rows {
            for j in 0..self.cols {
                bits[j * self.rows + i] = self.bits[i * self.cols + j];
            }
        }
        Mask {
            rows: self.cols,
            cols: self.rows,
            bits,
        }
    }

    pub fn complement(&self) -> Mask {
        Mask {
            rows: self.rows,
            cols: self.cols,
            bits: self.bits.iter().map(|&b| 1 - b).collect(),
        }
    }

    /// Intersection of kept sets; shapes must match.
    pub fn intersect(&self, other: &Mask) -> Result<Mask> {
        if (self.rows, self.cols) != (other.rows, other.cols) {
            return Err(Error::ShapeMismatch {
                expected: (self.rows, self.cols),
                got: (other.rows, other.cols),
            });
        }
        Ok(Mask {
            rows: self.rows,
            cols: self.cols,
            bits: self
                .bits
                .iter()
                .zip(&other.bits)
                .map(|(&a, &b)| a & b)
                .collect(),
        })
    }
}

/// The pair (N, M): at least N zeros per M contiguous elements.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NmConfig {
    n: usize,
    m: usize,
}

impl NmConfig {
    pub fn new(n: usize, m: usize) -> Result<Self> {
        if n < 1 || n >= m {
            return Err(Error::InvalidConfig(format!(
                "need 1 <= N < M, got {n}:{m}"
            )));
        }
        Ok(Self { n, m })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }
}

impl fmt::Display for NmConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.n, self.m)
    }
}

impl FromStr for NmConfig {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (n, m) = s
            .split_once(':')
            .ok_or_else(|| Error::InvalidConfig(format!("expected N:M, got '{s}'")))?;
        let n = n
            .trim()
            .parse::<usize>()
            .map_err(|e| Error::InvalidConfig(format!("bad N in '{s}': {e}")))?;
        let m = m
            .trim()
            .parse::<usize>()
            .map_err(|e| Error::InvalidConfig(format!("bad M in '{s}': {e}")))?;
        NmConfig::new(n, m)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BlockKind {
    RowRun,
    Square,
}

/// Origin and extent of one block inside a parent matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BlockView {
    pub row: usize,
    pub col: usize,
    pub m: usize,
    pub kind: BlockKind,
}

/// Tile a matrix into 1×M row runs, row-major.
pub fn iter_row_blocks(mat: &Matrix, cfg: &NmConfig) -> Result<Vec<BlockView>> {
    let m = cfg.m();
    if !mat.cols().is_multiple_of(m) {
        return Err(Error::Dimension(format!(
            "cols {} not divisible by M={m}",
            mat.cols()
        )));
    }
    let mut out = Vec::with_capacity(mat.rows() * (mat.cols() / m));
    for row in 0..mat.rows() {
        for b in 0..mat.cols() / m {
            out.push(BlockView {
                row,
                col: b * m,
                m,
                kind: BlockKind::RowRun,
            });
        }
    }
    Ok(out)
}

/// Tile a matrix into non-overlapping M×M squares.
pub fn iter_square_blocks(mat: &Matrix, cfg: &NmConfig) -> Result<Vec<BlockView>> {
    let m = cfg.m();
    if !mat.rows().is_multiple_of(m) || !mat.cols().is_multiple_of(m) {
        return Err(Error::Dimension(format!(
            "shape {}x{} not divisible by M={m}",
            mat.rows(),
            mat.cols()
        )));
    }
    let mut out = Vec::with_capacity((mat.rows() / m) * (mat.cols() / m));
    for bi in 0..mat.rows() / m {
        for bj in 0..mat.cols() / m {
            out.push(BlockView {
                row: bi * m,
                col: bj * m,
                m,
                kind: BlockKind::Square,
            });
        }
    }
    Ok(out)
}

fn check_congruent(mat: &Matrix, mask: &Mask) -> Result<()> {
    if (mat.rows(), mat.cols()) != (mask.rows(), mask.cols()) {
        return Err(Error::ShapeMismatch {
            expected: (mat.rows(), mat.cols()),
            got: (mask.rows(), mask.cols()),
        });
    }
    Ok(())
}

/// Σ mask_ij · |W_ij| in flat row-major order.
pub fn masked_l1(mat: &Matrix, mask: &Mask) -> Result<f64> {
    check_congruent(mat, mask)?;
    Ok(mat
        .data()
        .iter()
        .zip(mask.bits())
        .map(|(&v, &b)| if b == 1 { v.abs() } else { 0.0 })
        .sum())
}

/// ℓ1 of the pruned entries, i.e. masked_l1 with the complemented mask.
pub fn pruned_l1(mat: &Matrix, mask: &Mask) -> Result<f64> {
    check_congruent(mat, mask)?;
    Ok(mat
        .data()
        .iter()
        .zip(mask.bits())
        .map(|(&v, &b)| if b == 0 { v.abs() } else { 0.0 })
        .sum())
}

/// Sort key for magnitude pruning: exact |value| ascending, then lowest
/// flat index first.
pub(crate) fn magnitude_order(values: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[a].abs().total_cmp(&values[b].abs()).then(a.cmp(&b)));
    idx
}
