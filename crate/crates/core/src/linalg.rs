//! Sparse matrix glue: triplet accumulation, matrix-vector products, and a
//! direct LU factorization (backed by faer) behind a small interface.

use crate::error::{CoreError, Result};
use faer::prelude::*;
use faer::sparse::{SparseColMat, Triplet};

/// Square sparse matrix in triplet (COO) form; duplicate entries add.
#[derive(Debug, Clone)]
pub struct SparseTriplets {
    n: usize,
    rows: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
}

impl SparseTriplets {
    pub fn new(n: usize) -> Self {
        Self {
            n,
            rows: Vec::new(),
            cols: Vec::new(),
            vals: Vec::new(),
        }
    }

    pub fn with_capacity(n: usize, nnz: usize) -> Self {
        Self {
            n,
            rows: Vec::with_capacity(nnz),
            cols: Vec::with_capacity(nnz),
            vals: Vec::with_capacity(nnz),
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn push(&mut self, row: usize, col: usize, val: f64) {
        debug_assert!(row < self.n && col < self.n);
        if val != 0.0 {
            self.rows.push(row);
            self.cols.push(col);
            self.vals.push(val);
        }
    }

    pub fn entries(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.rows
            .iter()
            .zip(&self.cols)
            .zip(&self.vals)
            .map(|((&r, &c), &v)| (r, c, v))
    }

    /// `out = self * x`.
    pub fn mul_vec(&self, x: &[f64], out: &mut [f64]) {
        assert_eq!(x.len(), self.n);
        assert_eq!(out.len(), self.n);
        out.fill(0.0);
        for ((&r, &c), &v) in self.rows.iter().zip(&self.cols).zip(&self.vals) {
            out[r] += v * x[c];
        }
    }

    /// Dense copy, for small-system diagnostics.
    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut dense = vec![vec![0.0; self.n]; self.n];
        for ((&r, &c), &v) in self.rows.iter().zip(&self.cols).zip(&self.vals) {
            dense[r][c] += v;
        }
        dense
    }

    /// LU factorization of `self + diag(shift)`.
    pub fn factorize_with_shift(&self, shift: &[f64]) -> Result<LuFactors> {
        assert_eq!(shift.len(), self.n);
        let mut triplets: Vec<Triplet<usize, usize, f64>> = self
            .rows
            .iter()
            .zip(&self.cols)
            .zip(&self.vals)
            .map(|((&r, &c), &v)| Triplet::new(r, c, v))
            .collect();
        for (i, &s) in shift.iter().enumerate() {
            if s != 0.0 {
                triplets.push(Triplet::new(i, i, s));
            }
        }
        let mat = SparseColMat::<usize, f64>::try_new_from_triplets(self.n, self.n, &triplets)
            .map_err(|e| CoreError::LinearSolve(format!("matrix assembly failed: {e:?}")))?;
        let lu = mat
            .sp_lu()
            .map_err(|e| CoreError::LinearSolve(format!("sparse LU failed: {e:?}")))?;
        Ok(LuFactors { lu, n: self.n })
    }

    pub fn factorize(&self) -> Result<LuFactors> {
        self.factorize_with_shift(&vec![0.0; self.n])
    }
}

/// A computed sparse LU factorization.
pub struct LuFactors {
    lu: faer::sparse::linalg::solvers::Lu<usize, f64>,
    n: usize,
}

impl LuFactors {
    pub fn solve_in_place(&self, rhs: &mut [f64]) -> Result<()> {
        if rhs.len() != self.n {
            return Err(CoreError::LinearSolve(format!(
                "rhs has length {}, matrix is {}x{}",
                rhs.len(),
                self.n,
                self.n
            )));
        }
        let mut mat = faer::Mat::from_fn(self.n, 1, |i, _| rhs[i]);
        self.lu.solve_in_place(mat.as_mut());
        for (i, r) in rhs.iter_mut().enumerate() {
            *r = mat[(i, 0)];
        }
        Ok(())
    }
}
