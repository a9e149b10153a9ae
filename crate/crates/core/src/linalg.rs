//! Dense square matrices and the symmetric eigensolver.
//!
//! Only what the recovery algorithms need: a row-major matrix type and a
//! symmetric eigendecomposition (backed by `faer`) with eigenvalues in
//! descending order and a deterministic eigenvector sign.

use std::ops::{Index, IndexMut};

#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    pub fn from_row_major(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols, "data length does not match shape");
        Self { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        self.rows == self.cols
            && (0..self.rows)
                .all(|i| (0..i).all(|j| (self[(i, j)] - self[(j, i)]).abs() <= tol))
    }

    pub fn max_abs_diff(&self, other: &DenseMatrix) -> f64 {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

impl Index<(usize, usize)> for DenseMatrix {
    type Output = f64;

    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for DenseMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.cols + j]
    }
}

/// Eigenpairs of a symmetric matrix, sorted by descending eigenvalue.
#[derive(Debug, Clone)]
pub struct SymmetricEigen {
    /// Eigenvalues, largest first.
    pub values: Vec<f64>,
    /// `vectors[k]` is the unit eigenvector of `values[k]`, with its first
    /// non-negligible coordinate positive.
    pub vectors: Vec<Vec<f64>>,
}

const SIGN_EPS: f64 = 1e-12;

/// Eigendecomposition of a symmetric matrix. Only the lower triangle is read.
pub fn symmetric_eigen(m: &DenseMatrix) -> SymmetricEigen {
    assert_eq!(m.rows, m.cols, "eigendecomposition needs a square matrix");
    let n = m.rows;
    if n == 0 {
        return SymmetricEigen {
            values: Vec::new(),
            vectors: Vec::new(),
        };
    }
    let fm = faer::Mat::<f64>::from_fn(n, n, |i, j| m[(i, j)]);
    let evd = fm.selfadjoint_eigendecomposition(faer::Side::Lower);
    let s = evd.s().column_vector();
    let u = evd.u();

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| s.read(b).total_cmp(&s.read(a)));

    let mut values = Vec::with_capacity(n);
    let mut vectors = Vec::with_capacity(n);
    for k in order {
        values.push(s.read(k));
        let mut v: Vec<f64> = (0..n).map(|i| u.read(i, k)).collect();
        if let Some(first) = v.iter().copied().find(|x| x.abs() > SIGN_EPS) {
            if first < 0.0 {
                v.iter_mut().for_each(|x| *x = -*x);
            }
        }
        vectors.push(v);
    }
    SymmetricEigen { values, vectors }
}
