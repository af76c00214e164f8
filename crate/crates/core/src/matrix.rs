//! Dense matrices, submatrix index sets and the two block statistics.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::rng;

/// A dense `rows × cols` matrix of finite reals stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct DataMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DataMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(invalid(format!(
                "matrix dimensions must be positive, got {rows}x{cols}"
            )));
        }
        if data.len() != rows * cols {
            return Err(invalid(format!(
                "{rows}x{cols} matrix needs {} entries, got {}",
                rows * cols,
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(invalid(format!(
                "entry ({}, {}) is not finite",
                pos / cols,
                pos % cols
            )));
        }
        Ok(Self { rows, cols, data })
    }

    /// Builds a matrix from nested rows; all rows must have the same length.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        if rows.iter().any(|r| r.as_ref().len() != cols) {
            return Err(invalid("ragged rows"));
        }
        let data = rows
            .iter()
            .flat_map(|r| r.as_ref().iter().copied())
            .collect();
        Self::new(rows.len(), cols, data)
    }

    pub fn zeros(rows: usize, cols: usize) -> Result<Self> {
        Self::new(rows, cols, vec![0.0; rows * cols])
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    /// Mean of all entries, accumulated row-major.
    pub fn grand_mean(&self) -> f64 {
        self.data.iter().sum::<f64>() / self.data.len() as f64
    }

    /// Copies out the block indexed by `index` in row-major order.
    pub fn block(&self, index: &SubmatrixIndex) -> Result<Vec<f64>> {
        index.check_fits(self)?;
        Ok(gather(self, &index.rows, &index.cols))
    }
}

/// A submatrix index set `A × B`: sorted, duplicate-free, 0-based row and
/// column ids.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SubmatrixIndex {
    rows: Vec<usize>,
    cols: Vec<usize>,
}

impl SubmatrixIndex {
    /// Sorts both id lists. Empty lists and duplicate ids are rejected.
    pub fn new(mut rows: Vec<usize>, mut cols: Vec<usize>) -> Result<Self> {
        for (name, ids) in [("row", &mut rows), ("column", &mut cols)] {
            if ids.is_empty() {
                return Err(invalid(format!("{name} id set is empty")));
            }
            ids.sort_unstable();
            if let Some(w) = ids.windows(2).find(|w| w[0] == w[1]) {
                return Err(invalid(format!("duplicate {name} id {}", w[0])));
            }
        }
        Ok(Self { rows, cols })
    }

    /// Index set covering the whole `m × n` matrix.
    pub fn full(m: usize, n: usize) -> Result<Self> {
        Self::new((0..m).collect(), (0..n).collect())
    }

    pub(crate) fn from_sorted(rows: Vec<usize>, cols: Vec<usize>) -> Self {
        debug_assert!(rows.windows(2).all(|w| w[0] < w[1]));
        debug_assert!(cols.windows(2).all(|w| w[0] < w[1]));
        Self { rows, cols }
    }

    pub fn rows(&self) -> &[usize] {
        &self.rows
    }

    pub fn cols(&self) -> &[usize] {
        &self.cols
    }

    /// `|A| · |B|`.
    pub fn cell_count(&self) -> usize {
        self.rows.len() * self.cols.len()
    }

    pub fn contains(&self, i: usize, j: usize) -> bool {
        self.rows.binary_search(&i).is_ok() && self.cols.binary_search(&j).is_ok()
    }

    /// True when no cell belongs to both index sets.
    pub fn is_disjoint(&self, other: &SubmatrixIndex) -> bool {
        let shares = |a: &[usize], b: &[usize]| a.iter().any(|x| b.binary_search(x).is_ok());
        !(shares(&self.rows, &other.rows) && shares(&self.cols, &other.cols))
    }

    pub fn check_fits(&self, w: &DataMatrix) -> Result<()> {
        let max_row = *self.rows.last().expect("nonempty");
        let max_col = *self.cols.last().expect("nonempty");
        if max_row >= w.rows() || max_col >= w.cols() {
            return Err(invalid(format!(
                "index ({max_row}, {max_col}) out of bounds for {}x{} matrix",
                w.rows(),
                w.cols()
            )));
        }
        Ok(())
    }
}

/// A constant `amplitude` added to every cell of `index`.
#[derive(Debug, Clone, PartialEq)]
pub struct PlantedSignal {
    pub index: SubmatrixIndex,
    pub amplitude: f64,
}

impl PlantedSignal {
    pub fn new(index: SubmatrixIndex, amplitude: f64) -> Result<Self> {
        if !amplitude.is_finite() {
            return Err(invalid("signal amplitude must be finite"));
        }
        Ok(Self { index, amplitude })
    }
}

/// An `m × n` matrix of independent standard normals.
///
/// Cell `(i, j)` is the `(i·n + j)`-th variate of the counter-based stream
/// `seed` (see [`crate::rng`]), so the output is bit-identical for a given
/// `(m, n, seed)` whatever the thread count.
pub fn gaussian_matrix(m: usize, n: usize, seed: u64) -> Result<DataMatrix> {
    if m == 0 || n == 0 {
        return Err(invalid(format!(
            "matrix dimensions must be positive, got {m}x{n}"
        )));
    }
    let data: Vec<f64> = (0..(m * n) as u64)
        .into_par_iter()
        .map(|c| rng::standard_normal_at(seed, c))
        .collect();
    DataMatrix::new(m, n, data)
}

/// `F(U)`: the average of the block, summed row-major in plain double
/// precision (no compensation).
pub fn submatrix_average(w: &DataMatrix, index: &SubmatrixIndex) -> Result<f64> {
    index.check_fits(w)?;
    Ok(block_sum(w, index.rows(), index.cols()) / index.cell_count() as f64)
}

pub(crate) fn block_sum(w: &DataMatrix, rows: &[usize], cols: &[usize]) -> f64 {
    let mut acc = 0.0;
    for &i in rows {
        let row = w.row(i);
        for &j in cols {
            acc += row[j];
        }
    }
    acc
}

pub(crate) fn gather(w: &DataMatrix, rows: &[usize], cols: &[usize]) -> Vec<f64> {
    let mut out = Vec::with_capacity(rows.len() * cols.len());
    gather_into(w, rows, cols, &mut out);
    out
}

pub(crate) fn gather_into(w: &DataMatrix, rows: &[usize], cols: &[usize], out: &mut Vec<f64>) {
    out.clear();
    for &i in rows {
        let row = w.row(i);
        out.extend(cols.iter().map(|&j| row[j]));
    }
}

/// `G(U)`: mean squared residual of the best additive (row + column +
/// constant) fit to the block, normalized by `(|A| − 1)(|B| − 1)`.
pub fn anova_residual(w: &DataMatrix, index: &SubmatrixIndex) -> Result<f64> {
    index.check_fits(w)?;
    let (k, l) = (index.rows().len(), index.cols().len());
    if k < 2 || l < 2 {
        return Err(invalid(format!(
            "ANOVA residual needs at least a 2x2 block, got {k}x{l}"
        )));
    }
    let block = gather(w, index.rows(), index.cols());
    Ok(anova_block(&block, k, l, &mut Vec::new()))
}

/// Closed form via row, column and grand means of a row-major `k × l` block.
/// `scratch` is reused for the column means.
pub(crate) fn anova_block(block: &[f64], k: usize, l: usize, scratch: &mut Vec<f64>) -> f64 {
    scratch.clear();
    scratch.resize(l, 0.0);
    let mut grand = 0.0;
    for row in block.chunks_exact(l) {
        for (c, v) in scratch.iter_mut().zip(row) {
            *c += v;
        }
    }
    for c in scratch.iter_mut() {
        grand += *c;
        *c /= k as f64;
    }
    grand /= (k * l) as f64;
    let mut ss = 0.0;
    for row in block.chunks_exact(l) {
        let row_mean = row.iter().sum::<f64>() / l as f64;
        for (v, col_mean) in row.iter().zip(scratch.iter()) {
            let r = v - row_mean - col_mean + grand;
            ss += r * r;
        }
    }
    ss / ((k - 1) * (l - 1)) as f64
}

/// `Y = W + S`: adds the signal amplitude on its index set; `w` is untouched.
pub fn embed_signal(w: &DataMatrix, signal: &PlantedSignal) -> Result<DataMatrix> {
    signal.index.check_fits(w)?;
    let mut data = w.as_slice().to_vec();
    for &i in signal.index.rows() {
        for &j in signal.index.cols() {
            data[i * w.cols() + j] += signal.amplitude;
        }
    }
    DataMatrix::new(w.rows(), w.cols(), data)
}
