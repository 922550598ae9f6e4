//! Compressed sparse row storage for the symmetric system matrices,
//! plus Matrix Market export.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Symmetric sparse matrix in CSR form. Both triangles are stored so that
/// the row-parallel matrix-vector product needs no transpose pass; symmetry
/// is a checked invariant, not a storage convention.
#[derive(Debug, Clone)]
pub struct SparseSym {
    n: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl SparseSym {
    pub fn order(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let lo = self.row_ptr[i];
        let hi = self.row_ptr[i + 1];
        (&self.col_idx[lo..hi], &self.values[lo..hi])
    }

    /// Entry lookup by binary search within the row.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (cols, vals) = self.row(i);
        match cols.binary_search(&j) {
            Ok(k) => vals[k],
            Err(_) => 0.0,
        }
    }

    /// `y = A x`.
    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        debug_assert_eq!(x.len(), self.n);
        debug_assert_eq!(y.len(), self.n);
        for i in 0..self.n {
            let (cols, vals) = self.row(i);
            let mut acc = 0.0;
            for (&j, &v) in cols.iter().zip(vals) {
                acc += v * x[j];
            }
            y[i] = acc;
        }
    }

    /// `y = A x` with the rows split over the thread pool in fixed-size
    /// blocks. Every row is computed independently, so the result is
    /// bitwise identical to the serial product for any schedule.
    pub fn matvec_par(&self, x: &[f64], y: &mut [f64]) {
        use rayon::prelude::*;
        debug_assert_eq!(x.len(), self.n);
        debug_assert_eq!(y.len(), self.n);
        const BLOCK: usize = 512;
        y.par_chunks_mut(BLOCK).enumerate().for_each(|(ci, chunk)| {
            let base = ci * BLOCK;
            for (r, slot) in chunk.iter_mut().enumerate() {
                let i = base + r;
                let lo = self.row_ptr[i];
                let hi = self.row_ptr[i + 1];
                let mut acc = 0.0;
                for k in lo..hi {
                    acc += self.values[k] * x[self.col_idx[k]];
                }
                *slot = acc;
            }
        });
    }

    pub fn identity(n: usize) -> Self {
        SparseSym {
            n,
            row_ptr: (0..=n).collect(),
            col_idx: (0..n).collect(),
            values: vec![1.0; n],
        }
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.get(i, i)).collect()
    }

    pub fn is_identity(&self) -> bool {
        if self.nnz() != self.n {
            return false;
        }
        (0..self.n).all(|i| {
            let (cols, vals) = self.row(i);
            cols == [i] && (vals[0] - 1.0).abs() == 0.0
        })
    }

    /// `self - sigma * other`, entrywise union of patterns.
    pub fn shifted(&self, sigma: f64, other: &SparseSym) -> Result<SparseSym> {
        if other.order() != self.n {
            return Err(Error::ShapeMismatch(format!(
                "cannot combine orders {} and {}",
                self.n,
                other.order()
            )));
        }
        let mut b = SparseBuilder::new(self.n);
        for i in 0..self.n {
            let (cols, vals) = self.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                b.add(i, j, v);
            }
            let (cols, vals) = other.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                b.add(i, j, -sigma * v);
            }
        }
        Ok(b.build())
    }

    /// Max asymmetry `|A_ij - A_ji|` over the stored pattern.
    pub fn symmetry_deviation(&self) -> f64 {
        let mut dev: f64 = 0.0;
        for i in 0..self.n {
            let (cols, vals) = self.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                dev = dev.max((v - self.get(j, i)).abs());
            }
        }
        dev
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.n, self.n);
        for i in 0..self.n {
            let (cols, vals) = self.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                m[(i, j)] = v;
            }
        }
        m
    }

    pub fn from_dense(m: &DMatrix<f64>, drop_tol: f64) -> SparseSym {
        let mut b = SparseBuilder::new(m.nrows());
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                if m[(i, j)].abs() > drop_tol {
                    b.add(i, j, m[(i, j)]);
                }
            }
        }
        b.build()
    }

    /// Writes the lower triangle in Matrix Market symmetric coordinate
    /// format (1-based indices).
    pub fn write_matrix_market<W: std::io::Write>(&self, w: &mut W) -> Result<()> {
        let nnz_lower = (0..self.n)
            .map(|i| self.row(i).0.iter().filter(|&&j| j <= i).count())
            .sum::<usize>();
        writeln!(w, "%%MatrixMarket matrix coordinate real symmetric")?;
        writeln!(w, "{} {} {}", self.n, self.n, nnz_lower)?;
        for i in 0..self.n {
            let (cols, vals) = self.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                if j <= i {
                    writeln!(w, "{} {} {:.16e}", i + 1, j + 1, v)?;
                }
            }
        }
        Ok(())
    }
}

/// Accumulating triplet builder; duplicate entries are summed.
#[derive(Debug)]
pub struct SparseBuilder {
    n: usize,
    triplets: Vec<(usize, usize, f64)>,
}

impl SparseBuilder {
    pub fn new(n: usize) -> Self {
        SparseBuilder {
            n,
            triplets: Vec::new(),
        }
    }

    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        debug_assert!(i < self.n && j < self.n);
        if v != 0.0 {
            self.triplets.push((i, j, v));
        }
    }

    pub fn build(mut self) -> SparseSym {
        self.triplets.sort_by_key(|&(i, j, _)| (i, j));
        let mut rows: Vec<usize> = Vec::with_capacity(self.triplets.len());
        let mut col_idx: Vec<usize> = Vec::with_capacity(self.triplets.len());
        let mut values: Vec<f64> = Vec::with_capacity(self.triplets.len());
        for &(i, j, v) in &self.triplets {
            if rows.last() == Some(&i) && col_idx.last() == Some(&j) {
                *values.last_mut().unwrap() += v;
            } else {
                rows.push(i);
                col_idx.push(j);
                values.push(v);
            }
        }
        let mut row_ptr = vec![0usize; self.n + 1];
        for &i in &rows {
            row_ptr[i + 1] += 1;
        }
        for r in 0..self.n {
            row_ptr[r + 1] += row_ptr[r];
        }
        SparseSym {
            n: self.n,
            row_ptr,
            col_idx,
            values,
        }
    }
}
