//! Overlapping additive Schwarz preconditioners.
//!
//! The unknown vector is blocked by cell ([c, eta, u...] per cell), and the
//! domain is split into `nsub` slabs of cells along the last grid axis, so
//! every subdomain is a contiguous range of whole point-blocks — a cell's
//! rows are never split across subdomains. Each slab is extended by
//! `overlap` cells across *internal* slab boundaries (never past the ends
//! of the axis; the decomposition ignores periodic wrap, which only affects
//! preconditioner quality, not correctness).
//!
//! Three combination rules are provided:
//! - `ClassicalAS`: gather the residual on the full overlapped slab, solve,
//!   scatter-add on the full overlapped slab (overlap regions add twice).
//! - `LeftRAS`: gather on the full overlapped slab, scatter only into the
//!   slab's own (disjoint) cells — restricted prolongation. Used as a left
//!   preconditioner.
//! - `RightRAS`: gather only from the slab's own cells, scatter-add on the
//!   full overlapped slab — restricted restriction. Used as a right
//!   preconditioner.
//!
//! Subdomain solves run in parallel, but results are accumulated serially
//! in subdomain order so the floating-point result is deterministic.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::grid::Grid;
use crate::solver::csr::CsrMatrix;
use crate::solver::ilu::{factor, FactorError, FillRule, SparseFactor, SubdomainSolver};

/// Which additive Schwarz combination rule to use (and, implicitly, on
/// which side of GMRES the preconditioner sits: right for `RightRAS`, left
/// otherwise).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SchwarzKind {
    ClassicalAS,
    LeftRAS,
    RightRAS,
}

/// Linear-solver configuration: domain decomposition plus the Krylov knobs
/// that ride along with it.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default)]
pub struct SchwarzConfig {
    pub kind: SchwarzKind,
    /// Number of subdomains (clamped to the split-axis length).
    pub nsub: usize,
    /// Overlap width in cells, extended across internal slab boundaries.
    pub overlap: usize,
    pub subdomain_solver: SubdomainSolver,
    /// Freeze subdomain factorizations across Newton iterations and time
    /// steps; the stepper invalidates the cache when the time step changes
    /// or a solve diverges.
    pub reuse: bool,
    /// GMRES restart length.
    pub gmres_restart: usize,
}

impl Default for SchwarzConfig {
    fn default() -> Self {
        SchwarzConfig {
            kind: SchwarzKind::ClassicalAS,
            nsub: 8,
            overlap: 1,
            subdomain_solver: SubdomainSolver::Ilu(1),
            reuse: true,
            gmres_restart: 30,
        }
    }
}

/// How cells map to matrix rows: `ncells * block` unknowns, cells ordered
/// so that the split axis is the slowest index (`plane` cells per slice).
#[derive(Debug, Clone, Copy)]
pub struct BlockLayout {
    pub ncells: usize,
    pub block: usize,
    pub axis_len: usize,
    pub plane: usize,
}

impl BlockLayout {
    /// Layout for a grid whose cells carry `block` unknowns each, split
    /// along the grid's last active axis (the slowest-varying index).
    pub fn for_grid(grid: &Grid, block: usize) -> Self {
        let dims = grid.dims();
        let ndim = grid.ndim();
        let axis_len = dims[ndim - 1];
        let plane: usize = dims[..ndim - 1].iter().product::<usize>().max(1);
        BlockLayout { ncells: grid.ncells(), block, axis_len, plane }
    }
}

/// One slab: own (disjoint) and overlapped cell ranges along the split
/// axis, plus the derived global matrix-row ranges.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Subdomain {
    pub own_lo: usize,
    pub own_hi: usize,
    pub ov_lo: usize,
    pub ov_hi: usize,
    pub row_lo: usize,
    pub row_hi: usize,
    pub own_row_lo: usize,
    pub own_row_hi: usize,
}

/// Split the axis into `nsub` nearly equal slabs and extend each by
/// `overlap` cells across internal boundaries. The own ranges are disjoint
/// and cover every cell exactly once.
pub fn partition(layout: &BlockLayout, nsub: usize, overlap: usize) -> Vec<Subdomain> {
    let nsub = nsub.clamp(1, layout.axis_len);
    let rows_per_slice = layout.plane * layout.block;
    (0..nsub)
        .map(|s| {
            let own_lo = s * layout.axis_len / nsub;
            let own_hi = (s + 1) * layout.axis_len / nsub;
            let ov_lo = if s == 0 { 0 } else { own_lo.saturating_sub(overlap) };
            let ov_hi = if s + 1 == nsub { layout.axis_len } else { (own_hi + overlap).min(layout.axis_len) };
            Subdomain {
                own_lo,
                own_hi,
                ov_lo,
                ov_hi,
                row_lo: ov_lo * rows_per_slice,
                row_hi: ov_hi * rows_per_slice,
                own_row_lo: own_lo * rows_per_slice,
                own_row_hi: own_hi * rows_per_slice,
            }
        })
        .collect()
}

/// Extract the principal submatrix over the contiguous row range
/// `[row_lo, row_hi)`, dropping couplings that leave the range.
fn extract_block(a: &CsrMatrix, row_lo: usize, row_hi: usize) -> CsrMatrix {
    let nloc = row_hi - row_lo;
    let mut triplets = Vec::new();
    for gi in row_lo..row_hi {
        let (cols, vals) = a.row(gi);
        for (j, v) in cols.iter().zip(vals) {
            if (row_lo..row_hi).contains(j) {
                triplets.push((gi - row_lo, j - row_lo, *v));
            }
        }
    }
    CsrMatrix::from_triplets(nloc, nloc, &mut triplets)
}

/// Factored additive Schwarz preconditioner, reusable across Newton
/// iterations and time steps while the caller keeps it.
pub struct SchwarzPreconditioner {
    kind: SchwarzKind,
    subs: Vec<Subdomain>,
    factors: Vec<SparseFactor>,
    n: usize,
    /// How many subdomains fell back from ILU to a complete LU because of a
    /// vanishing pivot.
    pub ilu_fallbacks: usize,
}

/// Build (partition, extract, factor) the preconditioner for `a`.
///
/// A vanishing ILU pivot on a block triggers a fallback to the complete LU
/// on that block (counted in `ilu_fallbacks`); a vanishing LU pivot is a
/// hard error.
pub fn build_preconditioner(
    a: &CsrMatrix,
    layout: &BlockLayout,
    cfg: &SchwarzConfig,
) -> Result<SchwarzPreconditioner, FactorError> {
    assert_eq!(a.nrows(), layout.ncells * layout.block, "matrix does not match layout");
    let subs = partition(layout, cfg.nsub, cfg.overlap);
    let results: Vec<Result<(SparseFactor, bool), FactorError>> = subs
        .par_iter()
        .map(|s| {
            let block = extract_block(a, s.row_lo, s.row_hi);
            match cfg.subdomain_solver {
                SubdomainSolver::Lu => factor(&block, FillRule::Full).map(|f| (f, false)),
                SubdomainSolver::Ilu(k) => match factor(&block, FillRule::Level(k as u32)) {
                    Ok(f) => Ok((f, false)),
                    Err(FactorError::ZeroPivot(_)) => {
                        factor(&block, FillRule::Full).map(|f| (f, true))
                    }
                },
            }
        })
        .collect();
    let mut factors = Vec::with_capacity(subs.len());
    let mut fallbacks = 0;
    for r in results {
        let (f, fell_back) = r?;
        if fell_back {
            fallbacks += 1;
        }
        factors.push(f);
    }
    if fallbacks > 0 {
        eprintln!("schwarz: ILU hit a vanishing pivot on {fallbacks} subdomain block(s); fell back to complete LU there");
    }
    Ok(SchwarzPreconditioner { kind: cfg.kind, subs, factors, n: a.nrows(), ilu_fallbacks: fallbacks })
}

impl SchwarzPreconditioner {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn kind(&self) -> SchwarzKind {
        self.kind
    }

    /// z := M^{-1} r under this preconditioner's combination rule.
    pub fn apply(&self, r: &[f64], z: &mut [f64]) {
        debug_assert_eq!(r.len(), self.n);
        debug_assert_eq!(z.len(), self.n);
        let kind = self.kind;
        let locals: Vec<Vec<f64>> = self
            .subs
            .par_iter()
            .zip(self.factors.par_iter())
            .map(|(s, f)| {
                let nloc = s.row_hi - s.row_lo;
                let mut rhs = vec![0.0f64; nloc];
                match kind {
                    // Restricted restriction: take residual only from own rows.
                    SchwarzKind::RightRAS => {
                        rhs[(s.own_row_lo - s.row_lo)..(s.own_row_hi - s.row_lo)]
                            .copy_from_slice(&r[s.own_row_lo..s.own_row_hi]);
                    }
                    _ => rhs.copy_from_slice(&r[s.row_lo..s.row_hi]),
                }
                let mut x = vec![0.0f64; nloc];
                f.solve(&rhs, &mut x);
                x
            })
            .collect();
        z.fill(0.0);
        // Serial accumulation in subdomain order keeps overlap sums
        // bit-reproducible.
        for (s, x) in self.subs.iter().zip(&locals) {
            match kind {
                // Restricted prolongation: write back only the own cells.
                SchwarzKind::LeftRAS => {
                    let off = s.own_row_lo - s.row_lo;
                    for (i, gi) in (s.own_row_lo..s.own_row_hi).enumerate() {
                        z[gi] += x[off + i];
                    }
                }
                _ => {
                    for (i, gi) in (s.row_lo..s.row_hi).enumerate() {
                        z[gi] += x[i];
                    }
                }
            }
        }
    }
}
