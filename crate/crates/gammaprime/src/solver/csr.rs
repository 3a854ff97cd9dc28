//! Compressed-sparse-row matrices: the assembled Jacobian format and the
//! small algebra (products, scaled sums, matvec) used to build it from
//! stencil factors.
//!
//! Rows keep their column indices sorted; construction goes through
//! [`CsrMatrix::from_triplets`], which sorts and merges duplicates, so every
//! downstream consumer (ILU, banded LU, Schwarz extraction) can rely on
//! ordered rows with at most one entry per column.

#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    nrows: usize,
    ncols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    vals: Vec<f64>,
}

impl CsrMatrix {
    /// Build from (row, col, value) triplets; duplicates are summed.
    pub fn from_triplets(
        nrows: usize,
        ncols: usize,
        triplets: &mut Vec<(usize, usize, f64)>,
    ) -> CsrMatrix {
        triplets.sort_unstable_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        let mut row_ptr = vec![0usize; nrows + 1];
        let mut col_idx = Vec::with_capacity(triplets.len());
        let mut vals = Vec::with_capacity(triplets.len());
        for &(r, c, v) in triplets.iter() {
            debug_assert!(r < nrows && c < ncols, "triplet ({r},{c}) out of bounds");
            if let (Some(&lc), Some(lv)) = (col_idx.last(), vals.last_mut()) {
                if row_ptr[r + 1] > 0 && lc == c && col_idx.len() > row_ptr[r] {
                    // same row (we are still filling row r) and same column
                    *lv += v;
                    continue;
                }
            }
            // close out any rows between the previous one and r
            col_idx.push(c);
            vals.push(v);
            row_ptr[r + 1] = col_idx.len();
        }
        // prefix-max to make row_ptr monotone (rows with no entries)
        for r in 1..=nrows {
            if row_ptr[r] < row_ptr[r - 1] {
                row_ptr[r] = row_ptr[r - 1];
            }
        }
        CsrMatrix { nrows, ncols, row_ptr, col_idx, vals }
    }

    pub fn identity(n: usize) -> CsrMatrix {
        CsrMatrix {
            nrows: n,
            ncols: n,
            row_ptr: (0..=n).collect(),
            col_idx: (0..n).collect(),
            vals: vec![1.0; n],
        }
    }

    pub fn diagonal(d: &[f64]) -> CsrMatrix {
        let n = d.len();
        CsrMatrix {
            nrows: n,
            ncols: n,
            row_ptr: (0..=n).collect(),
            col_idx: (0..n).collect(),
            vals: d.to_vec(),
        }
    }

    #[inline]
    pub fn nrows(&self) -> usize {
        self.nrows
    }

    #[inline]
    pub fn ncols(&self) -> usize {
        self.ncols
    }

    #[inline]
    pub fn nnz(&self) -> usize {
        self.col_idx.len()
    }

    /// Column indices and values of one row (columns sorted ascending).
    #[inline]
    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let lo = self.row_ptr[i];
        let hi = self.row_ptr[i + 1];
        (&self.col_idx[lo..hi], &self.vals[lo..hi])
    }

    /// Value at (i, j), zero if not stored.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (cols, vals) = self.row(i);
        match cols.binary_search(&j) {
            Ok(p) => vals[p],
            Err(_) => 0.0,
        }
    }

    pub fn scale(&mut self, s: f64) {
        for v in self.vals.iter_mut() {
            *v *= s;
        }
    }

    /// y = A x.
    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        debug_assert_eq!(x.len(), self.ncols);
        debug_assert_eq!(y.len(), self.nrows);
        for i in 0..self.nrows {
            let (cols, vals) = self.row(i);
            let mut acc = 0.0;
            for (c, v) in cols.iter().zip(vals) {
                acc += v * x[*c];
            }
            y[i] = acc;
        }
    }

    /// Sparse product `self * rhs` (Gustavson's algorithm, rows emitted with
    /// sorted columns).
    pub fn matmul(&self, rhs: &CsrMatrix) -> CsrMatrix {
        assert_eq!(self.ncols, rhs.nrows, "matmul dimension mismatch");
        let n = self.nrows;
        let m = rhs.ncols;
        let mut acc = vec![0.0f64; m];
        let mut stamp = vec![usize::MAX; m];
        let mut touched: Vec<usize> = Vec::new();
        let mut row_ptr = vec![0usize; n + 1];
        let mut col_idx = Vec::new();
        let mut vals = Vec::new();
        for i in 0..n {
            touched.clear();
            let (acols, avals) = self.row(i);
            for (k, av) in acols.iter().zip(avals) {
                let (bcols, bvals) = rhs.row(*k);
                for (j, bv) in bcols.iter().zip(bvals) {
                    if stamp[*j] != i {
                        stamp[*j] = i;
                        acc[*j] = 0.0;
                        touched.push(*j);
                    }
                    acc[*j] += av * bv;
                }
            }
            touched.sort_unstable();
            for &j in &touched {
                col_idx.push(j);
                vals.push(acc[j]);
            }
            row_ptr[i + 1] = col_idx.len();
        }
        CsrMatrix { nrows: n, ncols: m, row_ptr, col_idx, vals }
    }

    /// `alpha * self + beta * other` with pattern union.
    pub fn add_scaled(&self, alpha: f64, other: &CsrMatrix, beta: f64) -> CsrMatrix {
        assert_eq!(self.nrows, other.nrows);
        assert_eq!(self.ncols, other.ncols);
        let n = self.nrows;
        let mut row_ptr = vec![0usize; n + 1];
        let mut col_idx = Vec::with_capacity(self.nnz() + other.nnz());
        let mut vals = Vec::with_capacity(self.nnz() + other.nnz());
        for i in 0..n {
            let (ac, av) = self.row(i);
            let (bc, bv) = other.row(i);
            let (mut p, mut q) = (0usize, 0usize);
            while p < ac.len() || q < bc.len() {
                let ca = if p < ac.len() { ac[p] } else { usize::MAX };
                let cb = if q < bc.len() { bc[q] } else { usize::MAX };
                if ca < cb {
                    col_idx.push(ca);
                    vals.push(alpha * av[p]);
                    p += 1;
                } else if cb < ca {
                    col_idx.push(cb);
                    vals.push(beta * bv[q]);
                    q += 1;
                } else {
                    col_idx.push(ca);
                    vals.push(alpha * av[p] + beta * bv[q]);
                    p += 1;
                    q += 1;
                }
            }
            row_ptr[i + 1] = col_idx.len();
        }
        CsrMatrix { nrows: n, ncols: self.ncols, row_ptr, col_idx, vals }
    }

    /// Replace row `i` with a single unit diagonal entry (used for gauge
    /// pin rows). Keeps the CSR arrays compact by rebuilding the row span.
    pub fn set_unit_row(&mut self, i: usize) {
        let lo = self.row_ptr[i];
        let hi = self.row_ptr[i + 1];
        let removed = hi - lo;
        self.col_idx.splice(lo..hi, [i]);
        self.vals.splice(lo..hi, [1.0]);
        let delta = removed as isize - 1;
        for r in (i + 1)..=self.nrows {
            self.row_ptr[r] = (self.row_ptr[r] as isize - delta) as usize;
        }
    }

    /// Dense copy (test helper; small matrices only).
    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut d = vec![vec![0.0; self.ncols]; self.nrows];
        for i in 0..self.nrows {
            let (cols, vals) = self.row(i);
            for (c, v) in cols.iter().zip(vals) {
                d[i][*c] = *v;
            }
        }
        d
    }
}
