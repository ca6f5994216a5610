//! Dense matrix types: binary incidence matrices, small integer transforms and
//! real feature matrices.

use std::fmt;
use std::ops::Deref;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{dim_err, Error, Result};
use crate::instrument::record_row_scan;

/// Relative singular-value threshold below which a matrix is rank deficient.
pub const RANK_TOLERANCE: f64 = 1e-8;

/// An N×K matrix with entries in {0, 1}, stored row-major.
#[derive(Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BinaryMatrix {
    rows: usize,
    cols: usize,
    data: Vec<u8>,
}

impl BinaryMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<u8>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(dim_err("BinaryMatrix::new", "N >= 1 and K >= 1", format!("{rows}x{cols}")));
        }
        if data.len() != rows * cols {
            return Err(dim_err("BinaryMatrix::new", rows * cols, data.len()));
        }
        if let Some(bad) = data.iter().find(|&&v| v > 1) {
            return Err(Error::Domain(format!("binary matrix entry {bad} is not 0 or 1")));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        assert!(rows > 0 && cols > 0, "BinaryMatrix needs at least one row and column");
        Self { rows, cols, data: vec![0; rows * cols] }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut m = Self::zeros(rows, cols);
        for n in 0..rows {
            for k in 0..cols {
                m.data[n * cols + k] = f(n, k) as u8;
            }
        }
        m
    }

    pub fn from_rows(rows: &[Vec<u8>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if let Some(r) = rows.iter().find(|r| r.len() != cols) {
            return Err(dim_err("BinaryMatrix::from_rows", cols, r.len()));
        }
        Self::new(rows.len(), cols, rows.concat())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    #[inline]
    pub fn get(&self, n: usize, k: usize) -> u8 {
        self.data[n * self.cols + k]
    }

    #[inline]
    pub fn set(&mut self, n: usize, k: usize, value: bool) {
        self.data[n * self.cols + k] = value as u8;
    }

    pub fn row(&self, n: usize) -> &[u8] {
        &self.data[n * self.cols..(n + 1) * self.cols]
    }

    pub fn row_mut(&mut self, n: usize) -> &mut [u8] {
        &mut self.data[n * self.cols..(n + 1) * self.cols]
    }

    pub fn column(&self, k: usize) -> Vec<u8> {
        (0..self.rows).map(|n| self.get(n, k)).collect()
    }

    pub fn as_slice(&self) -> &[u8] {
        &self.data
    }

    pub fn to_real(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.rows, self.cols, |n, k| self.get(n, k) as f64)
    }

    /// Integer Gram matrix ZᵀZ.
    pub fn gram(&self) -> IntMatrix {
        record_row_scan();
        let k = self.cols;
        let mut g = IntMatrix::zeros(k, k);
        for row in self.data.chunks_exact(k) {
            for (a, &za) in row.iter().enumerate() {
                if za == 0 {
                    continue;
                }
                for (b, &zb) in row.iter().enumerate() {
                    g.data[a * k + b] += zb as i64;
                }
            }
        }
        g
    }

    /// Column sums Zᵀ1.
    pub fn colsum(&self) -> Vec<i64> {
        record_row_scan();
        let mut s = vec![0i64; self.cols];
        for row in self.data.chunks_exact(self.cols) {
            for (acc, &z) in s.iter_mut().zip(row) {
                *acc += z as i64;
            }
        }
        s
    }

    /// Integer product Zu for a length-K column.
    pub fn mul_column(&self, u: &[i64]) -> Vec<i64> {
        assert_eq!(u.len(), self.cols, "column length must equal K");
        record_row_scan();
        self.data
            .chunks_exact(self.cols)
            .map(|row| row.iter().zip(u).map(|(&z, &x)| z as i64 * x).sum())
            .collect()
    }

    /// Integer product ZU.
    pub fn mul_int(&self, u: &IntMatrix) -> Result<IntMatrix> {
        if u.rows != self.cols {
            return Err(dim_err("BinaryMatrix::mul_int", format!("{}xM", self.cols), format!("{}x{}", u.rows, u.cols)));
        }
        record_row_scan();
        let mut out = IntMatrix::zeros(self.rows, u.cols);
        for n in 0..self.rows {
            for (k, &z) in self.row(n).iter().enumerate() {
                if z == 0 {
                    continue;
                }
                for j in 0..u.cols {
                    out.data[n * u.cols + j] += u.data[k * u.cols + j];
                }
            }
        }
        Ok(out)
    }

    /// Reorders columns so that output column `j` is input column `perm[j]`.
    pub fn permute_columns(&self, perm: &[usize]) -> Self {
        assert_eq!(perm.len(), self.cols);
        Self::from_fn(self.rows, self.cols, |n, j| self.get(n, perm[j]) == 1)
    }

    pub fn select_rows(&self, rows: &[usize]) -> Self {
        Self::from_fn(rows.len(), self.cols, |i, k| self.get(rows[i], k) == 1)
    }

    pub fn singular_values(&self) -> Vec<f64> {
        let mut sv: Vec<f64> = self.to_real().singular_values().iter().copied().collect();
        sv.sort_by(|a, b| b.total_cmp(a));
        sv
    }

    /// Numerical rank with the crate-wide relative tolerance.
    pub fn rank(&self) -> usize {
        let sv = self.singular_values();
        let largest = sv.first().copied().unwrap_or(0.0);
        sv.iter().filter(|&&s| s > RANK_TOLERANCE * largest && s > 0.0).count()
    }

    /// Fails with a rank error unless Z has full column rank.
    pub fn require_full_column_rank(&self) -> Result<()> {
        let mut sv = self.singular_values();
        // an N < K matrix has K - N implicit zero singular values
        sv.resize(self.cols, 0.0);
        let largest = sv.first().copied().unwrap_or(0.0);
        let tolerance = RANK_TOLERANCE * largest;
        let deficient: Vec<f64> = sv.iter().copied().filter(|&s| s <= tolerance).collect();
        if deficient.is_empty() && largest > 0.0 {
            Ok(())
        } else {
            Err(Error::Rank { deficient, largest, tolerance })
        }
    }
}

impl fmt::Debug for BinaryMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "BinaryMatrix {}x{} [", self.rows, self.cols)?;
        for n in 0..self.rows {
            let row: String = self.row(n).iter().map(|v| if *v == 1 { '1' } else { '0' }).collect();
            writeln!(f, "  {row}")?;
        }
        write!(f, "]")
    }
}

/// A dense integer matrix, row-major. Used for transforms U and for ZU.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct IntMatrix {
    rows: usize,
    cols: usize,
    data: Vec<i64>,
}

/// A K×K regular integer matrix acting on solution pairs as (ZU, U⁻¹W).
pub type TransformMatrix = IntMatrix;

impl IntMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<i64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(dim_err("IntMatrix::new", rows * cols, data.len()));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![0; rows * cols] }
    }

    pub fn identity(k: usize) -> Self {
        let mut m = Self::zeros(k, k);
        for i in 0..k {
            m.data[i * k + i] = 1;
        }
        m
    }

    pub fn from_rows(rows: &[Vec<i64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if let Some(r) = rows.iter().find(|r| r.len() != cols) {
            return Err(dim_err("IntMatrix::from_rows", cols, r.len()));
        }
        Self::new(rows.len(), cols, rows.concat())
    }

    pub fn from_columns(columns: &[Vec<i64>]) -> Result<Self> {
        let rows = columns.first().map_or(0, Vec::len);
        if let Some(c) = columns.iter().find(|c| c.len() != rows) {
            return Err(dim_err("IntMatrix::from_columns", rows, c.len()));
        }
        let cols = columns.len();
        let mut m = Self::zeros(rows, cols);
        for (j, c) in columns.iter().enumerate() {
            for (i, &v) in c.iter().enumerate() {
                m.data[i * cols + j] = v;
            }
        }
        Ok(m)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> i64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: i64) {
        self.data[i * self.cols + j] = v;
    }

    pub fn as_slice(&self) -> &[i64] {
        &self.data
    }

    pub fn column(&self, j: usize) -> Vec<i64> {
        (0..self.rows).map(|i| self.get(i, j)).collect()
    }

    pub fn columns(&self) -> Vec<Vec<i64>> {
        (0..self.cols).map(|j| self.column(j)).collect()
    }

    pub fn set_column(&mut self, j: usize, col: &[i64]) {
        assert_eq!(col.len(), self.rows);
        for (i, &v) in col.iter().enumerate() {
            self.set(i, j, v);
        }
    }

    pub fn to_real(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.rows, self.cols, |i, j| self.get(i, j) as f64)
    }

    pub fn mul(&self, other: &IntMatrix) -> Result<IntMatrix> {
        if self.cols != other.rows {
            return Err(dim_err("IntMatrix::mul", self.cols, other.rows));
        }
        let mut out = IntMatrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.get(i, k);
                if a == 0 {
                    continue;
                }
                for j in 0..other.cols {
                    out.data[i * other.cols + j] += a * other.get(k, j);
                }
            }
        }
        Ok(out)
    }

    pub fn is_binary(&self) -> bool {
        self.data.iter().all(|&v| v == 0 || v == 1)
    }

    /// Entries clamped to the nearest of {0, 1}.
    pub fn clamp01(&self) -> BinaryMatrix {
        let data = self.data.iter().map(|&v| v.clamp(0, 1) as u8).collect();
        BinaryMatrix { rows: self.rows, cols: self.cols, data }
    }

    /// Exact determinant by fraction-free (Bareiss) elimination.
    pub fn det(&self) -> i128 {
        assert_eq!(self.rows, self.cols, "determinant of a non-square matrix");
        exact_det(self.data.iter().map(|&v| v as i128).collect(), self.rows)
    }

    pub fn is_regular(&self) -> bool {
        self.rows == self.cols && self.det() != 0
    }

    /// Columns sorted lexicographically; representative of the S_K orbit.
    pub fn canonical(&self) -> IntMatrix {
        let mut cols = self.columns();
        cols.sort();
        IntMatrix::from_columns(&cols).expect("columns share a length")
    }

    pub fn is_permutation(&self) -> bool {
        self.rows == self.cols
            && self.is_binary()
            && (0..self.rows).all(|i| (0..self.cols).map(|j| self.get(i, j)).sum::<i64>() == 1)
            && (0..self.cols).all(|j| (0..self.rows).map(|i| self.get(i, j)).sum::<i64>() == 1)
    }

    pub fn max_abs(&self) -> i64 {
        self.data.iter().map(|v| v.abs()).max().unwrap_or(0)
    }
}

impl fmt::Debug for IntMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let rows: Vec<&[i64]> = self.data.chunks(self.cols.max(1)).collect();
        write!(f, "IntMatrix{rows:?}")
    }
}

pub(crate) fn exact_det(mut a: Vec<i128>, n: usize) -> i128 {
    if n == 0 {
        return 1;
    }
    let mut sign = 1i128;
    let mut prev = 1i128;
    for k in 0..n - 1 {
        if a[k * n + k] == 0 {
            let Some(p) = (k + 1..n).find(|&i| a[i * n + k] != 0) else {
                return 0;
            };
            for j in 0..n {
                a.swap(k * n + j, p * n + j);
            }
            sign = -sign;
        }
        let pivot = a[k * n + k];
        for i in k + 1..n {
            for j in k + 1..n {
                a[i * n + j] = (a[i * n + j] * pivot - a[i * n + k] * a[k * n + j]) / prev;
            }
        }
        prev = pivot;
    }
    sign * a[n * n - 1]
}

/// A K×D real feature matrix with finite entries.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureMatrix(DMatrix<f64>);

impl FeatureMatrix {
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        if let Some(bad) = m.iter().find(|v| !v.is_finite()) {
            return Err(Error::Domain(format!("feature matrix entry {bad} is not finite")));
        }
        Ok(Self(m))
    }

    pub fn zeros(k: usize, d: usize) -> Self {
        Self(DMatrix::zeros(k, d))
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.0
    }
}

impl Deref for FeatureMatrix {
    type Target = DMatrix<f64>;

    fn deref(&self) -> &DMatrix<f64> {
        &self.0
    }
}

impl From<FeatureMatrix> for DMatrix<f64> {
    fn from(w: FeatureMatrix) -> Self {
        w.0
    }
}
