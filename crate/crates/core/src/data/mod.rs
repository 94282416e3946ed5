//! Dense row-major containers, block views and vector norms.
//!
//! Values are held as `f64` so that norms and transforms accumulate in
//! double precision; the on-disk format stores `f32`.

pub mod io;
pub mod synth;

use serde::{Deserialize, Serialize};

use crate::error::{dim_err, Error, Result};

pub use io::{load_activations, read_activations, save_activations, write_activations};
pub use synth::{fit_per_token, generate, Distribution, FitFamily, SyntheticSpec};

/// Row-major `rows × cols` matrix of finite reals.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

/// A batch of `m` activation vectors of dimension `d`.
pub type ActivationSet = Matrix;

impl Matrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return dim_err(format!("matrix must be non-empty, got {rows}x{cols}"));
        }
        if data.len() != rows * cols {
            return dim_err(format!(
                "expected {} values for {rows}x{cols}, got {}",
                rows * cols,
                data.len()
            ));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                row: pos / cols,
                col: pos % cols,
            });
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let cols = rows.first().map(|r| r.as_ref().len()).unwrap_or(0);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (i, r) in rows.iter().enumerate() {
            let r = r.as_ref();
            if r.len() != cols {
                return dim_err(format!("row {i} has {} values, expected {cols}", r.len()));
            }
            data.extend_from_slice(r);
        }
        Matrix::new(rows.len(), cols, data)
    }

    pub fn zeros(rows: usize, cols: usize) -> Result<Self> {
        Matrix::new(rows, cols, vec![0.0; rows * cols])
    }

    /// Builds a matrix without the finiteness scan. Callers guarantee the
    /// invariants (used on outputs of already-validated computations).
    pub(crate) fn from_parts(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), rows * cols);
        Matrix { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn iter_rows(&self) -> std::slice::ChunksExact<'_, f64> {
        self.data.chunks_exact(self.cols)
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn transpose(&self) -> Matrix {
        let mut out = vec![0.0; self.data.len()];
        for r in 0..self.rows {
            for c in 0..self.cols {
                out[c * self.rows + r] = self.data[r * self.cols + c];
            }
        }
        Matrix::from_parts(self.cols, self.rows, out)
    }

    /// `self · rhs` with f64 accumulation.
    pub fn matmul(&self, rhs: &Matrix) -> Result<Matrix> {
        if self.cols != rhs.rows {
            return dim_err(format!(
                "cannot multiply {}x{} by {}x{}",
                self.rows, self.cols, rhs.rows, rhs.cols
            ));
        }
        let mut out = vec![0.0; self.rows * rhs.cols];
        for (r, out_row) in out.chunks_exact_mut(rhs.cols).enumerate() {
            for (k, &a) in self.row(r).iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                for (o, &b) in out_row.iter_mut().zip(rhs.row(k)) {
                    *o += a * b;
                }
            }
        }
        Ok(Matrix::from_parts(self.rows, rhs.cols, out))
    }

    /// Applies `f` to every row in place.
    pub fn map_rows(&self, mut f: impl FnMut(&[f64], &mut [f64])) -> Matrix {
        let mut out = vec![0.0; self.data.len()];
        for (src, dst) in self.iter_rows().zip(out.chunks_exact_mut(self.cols)) {
            f(src, dst);
        }
        Matrix::from_parts(self.rows, self.cols, out)
    }

    pub fn block(&self, row: usize, block_size: usize, index: usize) -> Result<BlockView<'_>> {
        if row >= self.rows {
            return dim_err(format!("row {row} out of range for {} rows", self.rows));
        }
        BlockView::new(self.row(row), block_size, index)
    }
}

/// The `index`-th contiguous block of size `block_size` in a row.
#[derive(Clone, Copy, Debug)]
pub struct BlockView<'a> {
    parent: &'a [f64],
    block_size: usize,
    index: usize,
}

impl<'a> BlockView<'a> {
    pub fn new(parent: &'a [f64], block_size: usize, index: usize) -> Result<Self> {
        let n = block_count(parent.len(), block_size)?;
        if index >= n {
            return dim_err(format!("block {index} out of range for {n} blocks"));
        }
        Ok(BlockView {
            parent,
            block_size,
            index,
        })
    }

    pub fn as_slice(&self) -> &'a [f64] {
        &self.parent[self.index * self.block_size..(self.index + 1) * self.block_size]
    }

    pub fn index(&self) -> usize {
        self.index
    }

    pub fn block_size(&self) -> usize {
        self.block_size
    }
}

/// Number of blocks `d / b`, failing unless `b` divides `d`.
pub fn block_count(d: usize, b: usize) -> Result<usize> {
    if b == 0 || d == 0 || !d.is_multiple_of(b) {
        return dim_err(format!("block size {b} does not divide dimension {d}"));
    }
    Ok(d / b)
}

/// Iterates over the blocks of a row.
pub fn blocks(row: &[f64], b: usize) -> Result<impl Iterator<Item = BlockView<'_>>> {
    let n = block_count(row.len(), b)?;
    Ok((0..n).map(move |index| BlockView {
        parent: row,
        block_size: b,
        index,
    }))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Norms {
    pub l1: f64,
    pub l2: f64,
    pub linf: f64,
}

pub fn norms(row: &[f64]) -> Result<Norms> {
    if row.is_empty() {
        return dim_err("norms of an empty vector");
    }
    Ok(norms_unchecked(row))
}

pub(crate) fn norms_unchecked(row: &[f64]) -> Norms {
    let (mut l1, mut sq, mut linf) = (0.0f64, 0.0f64, 0.0f64);
    for &x in row {
        let a = x.abs();
        l1 += a;
        sq += a * a;
        linf = linf.max(a);
    }
    Norms {
        l1,
        l2: sq.sqrt(),
        linf,
    }
}

pub(crate) fn l1(row: &[f64]) -> f64 {
    row.iter().map(|x| x.abs()).sum()
}

pub(crate) fn linf(row: &[f64]) -> f64 {
    row.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

pub(crate) fn sq_l2(row: &[f64]) -> f64 {
    row.iter().map(|x| x * x).sum()
}
