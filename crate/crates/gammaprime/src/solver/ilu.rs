//! Incomplete and complete sparse LU factorizations for subdomain solves.
//!
//! Both share one code path: a level-of-fill symbolic phase followed by an
//! IKJ numeric phase. `FillRule::Level(k)` keeps fill entries whose level
//! does not exceed `k` (ILU(k)); `FillRule::Full` keeps everything, which
//! *is* the complete (no-pivot) LU — on a banded matrix its fill stays
//! inside the band, so this doubles as the banded direct solver. No
//! pivoting is performed: the step matrices carry `1/dt` and stiffness mass
//! on the diagonal, and a vanishing pivot is reported as an error for the
//! caller to handle (the Schwarz layer falls back from ILU to LU and
//! records it).

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::solver::csr::CsrMatrix;

/// Subdomain solver choice, as configured.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SubdomainSolver {
    /// Incomplete LU with the given fill level (0, 1, or 2).
    Ilu(u8),
    /// Complete sparse LU.
    Lu,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FillRule {
    Level(u32),
    Full,
}

#[derive(Debug, Error)]
pub enum FactorError {
    #[error("vanishing pivot at row {0}")]
    ZeroPivot(usize),
}

/// Combined L\U factor on a fixed sparsity pattern. L is unit lower
/// triangular (its unit diagonal is not stored); U includes the diagonal.
#[derive(Debug, Clone)]
pub struct SparseFactor {
    n: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
    /// Position of the diagonal entry within each row's span.
    diag: Vec<usize>,
}

/// Symbolic phase: the fill pattern (sorted columns per row) plus per-entry
/// levels for the `Level` rule. The diagonal is always included.
fn symbolic(a: &CsrMatrix, rule: FillRule) -> (Vec<usize>, Vec<usize>, Vec<usize>) {
    let n = a.nrows();
    let cap = match rule {
        FillRule::Level(_) => u32::MAX - 1,
        FillRule::Full => u32::MAX - 1,
    };
    let keep = |lev: u32| match rule {
        FillRule::Level(k) => lev <= k,
        FillRule::Full => true,
    };
    let mut row_ptr = vec![0usize; n + 1];
    let mut cols: Vec<usize> = Vec::with_capacity(a.nnz() * 2);
    let mut diag = vec![0usize; n];
    // Levels of the stored U-part entries of already-factored rows,
    // parallel to `cols` (L-part slots unused).
    let mut levels: Vec<u32> = Vec::with_capacity(a.nnz() * 2);

    let mut lev = vec![u32::MAX; n];
    let mut touched: Vec<usize> = Vec::new();
    let mut heap: BinaryHeap<Reverse<usize>> = BinaryHeap::new();

    for i in 0..n {
        touched.clear();
        heap.clear();
        let (acols, _) = a.row(i);
        for &j in acols {
            lev[j] = 0;
            touched.push(j);
            if j < i {
                heap.push(Reverse(j));
            }
        }
        if lev[i] == u32::MAX {
            lev[i] = 0;
            touched.push(i);
        }
        while let Some(Reverse(k)) = heap.pop() {
            let lk = lev[k];
            if !keep(lk) {
                continue; // dropped entry: not a pivot
            }
            // Merge the U-part of factored row k.
            let lo = row_ptr[k] + diag[k] + 1;
            let hi = row_ptr[k + 1];
            for p in lo..hi {
                let j = cols[p];
                let nl = lk.saturating_add(levels[p]).saturating_add(1).min(cap);
                if keep(nl) && lev[j] > nl {
                    if lev[j] == u32::MAX {
                        touched.push(j);
                        if j < i {
                            heap.push(Reverse(j));
                        }
                    }
                    lev[j] = nl;
                }
            }
        }
        // Emit this row's kept pattern in sorted order.
        touched.sort_unstable();
        let start = cols.len();
        for &j in touched.iter() {
            if keep(lev[j]) {
                if j == i {
                    diag[i] = cols.len() - start;
                }
                cols.push(j);
                levels.push(lev[j]);
            }
            lev[j] = u32::MAX;
        }
        row_ptr[i + 1] = cols.len();
    }
    (row_ptr, cols, diag)
}

/// Factor `a` under the given fill rule.
pub fn factor(a: &CsrMatrix, rule: FillRule) -> Result<SparseFactor, FactorError> {
    assert_eq!(a.nrows(), a.ncols(), "factorization needs a square matrix");
    let n = a.nrows();
    let (row_ptr, cols, diag) = symbolic(a, rule);
    let mut vals = vec![0.0f64; cols.len()];

    // Dense scatter workspace: value + position-in-pattern per column.
    let mut w = vec![0.0f64; n];
    let mut pos = vec![usize::MAX; n];
    for i in 0..n {
        let lo = row_ptr[i];
        let hi = row_ptr[i + 1];
        for p in lo..hi {
            pos[cols[p]] = p;
            w[cols[p]] = 0.0;
        }
        let (acols, avals) = a.row(i);
        for (j, v) in acols.iter().zip(avals) {
            w[*j] = *v;
        }
        // Eliminate using pivots k < i in ascending column order.
        for p in lo..(lo + diag[i]) {
            let k = cols[p];
            let pk = row_ptr[k] + diag[k];
            let piv = vals[pk];
            if piv.abs() < 1e-300 {
                // Clean up workspace before bailing.
                for q in lo..hi {
                    pos[cols[q]] = usize::MAX;
                }
                return Err(FactorError::ZeroPivot(k));
            }
            let lik = w[k] / piv;
            w[k] = lik;
            for q in (pk + 1)..row_ptr[k + 1] {
                let j = cols[q];
                if pos[j] != usize::MAX {
                    w[j] -= lik * vals[q];
                }
            }
        }
        for p in lo..hi {
            vals[p] = w[cols[p]];
            pos[cols[p]] = usize::MAX;
        }
        if vals[lo + diag[i]].abs() < 1e-300 {
            return Err(FactorError::ZeroPivot(i));
        }
    }
    Ok(SparseFactor { n, row_ptr, cols, vals, diag })
}

impl SparseFactor {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.cols.len()
    }

    /// Solve `L U x = b`.
    pub fn solve(&self, b: &[f64], x: &mut [f64]) {
        debug_assert_eq!(b.len(), self.n);
        debug_assert_eq!(x.len(), self.n);
        // Forward: unit L.
        for i in 0..self.n {
            let lo = self.row_ptr[i];
            let mut acc = b[i];
            for p in lo..(lo + self.diag[i]) {
                acc -= self.vals[p] * x[self.cols[p]];
            }
            x[i] = acc;
        }
        // Backward: U.
        for i in (0..self.n).rev() {
            let lo = self.row_ptr[i];
            let hi = self.row_ptr[i + 1];
            let dp = lo + self.diag[i];
            let mut acc = x[i];
            for p in (dp + 1)..hi {
                acc -= self.vals[p] * x[self.cols[p]];
            }
            x[i] = acc / self.vals[dp];
        }
    }
}
