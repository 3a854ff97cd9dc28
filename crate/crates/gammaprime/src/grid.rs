//! Structured cell-centered grid (1D/2D/3D), boundary handling, and the
//! discrete operators the scheme is built from.
//!
//! Cells are indexed x-fastest: `idx = i + nx*(j + ny*k)`. Fields are flat
//! `Vec<f64>` of length `ncells`. Two boundary types are supported:
//!
//! * `Periodic` — all stencils wrap;
//! * `Neumann` — no-flux: divergence-form operators drop boundary faces,
//!   point stencils use mirror ghosts.
//!
//! The composition flux operator [`Grid::div_m_grad`] uses face mobilities
//! `M_{i+1/2} = kappa * [c_i(1-c_i) + c_j(1-c_j)] / 2` built from a frozen
//! mobility field. In flux-difference form it telescopes exactly, so the
//! cell sum of its output vanishes to roundoff on both boundary types, and
//! it satisfies the summation-by-parts identity
//!
//! ```text
//! -sum_i phi_i [div(M grad psi)]_i = sum_faces M_f (D+ phi)_f (D+ psi)_f
//! ```
//!
//! with each face counted once (equivalently `1/2` with the cell-pair
//! double-count convention). All reductions here use a fixed-shape pairwise
//! tree ([`tree_sum`]) so results are bit-identical run to run regardless of
//! worker count.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BoundaryCondition {
    Periodic,
    Neumann,
}

#[derive(Debug, Error)]
pub enum GridError {
    #[error("grid must have 1 to 3 axes, got {0}")]
    BadRank(usize),
    #[error("axis {axis} needs at least 2 cells, got {cells}")]
    TooFewCells { axis: usize, cells: usize },
    #[error("axis {axis} spacing must be positive and finite, got {h}")]
    BadSpacing { axis: usize, h: f64 },
}

/// Ghost-value rule for point stencils at Neumann boundaries.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Ghost {
    /// Ghost equals the boundary cell value (zero normal derivative).
    Mirror,
    /// Ghost equals the negated boundary cell value (zero boundary average;
    /// used for stresses so boundary faces carry no traction).
    AntiMirror,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    dims: [usize; 3],
    h: [f64; 3],
    strides: [usize; 3],
    ndim: usize,
    pub bc: BoundaryCondition,
}

impl Grid {
    pub fn new(dims: &[usize], h: &[f64], bc: BoundaryCondition) -> Result<Grid, GridError> {
        let ndim = dims.len();
        if ndim == 0 || ndim > 3 || h.len() != ndim {
            return Err(GridError::BadRank(ndim));
        }
        let mut d = [1usize; 3];
        let mut hh = [1f64; 3];
        for a in 0..ndim {
            if dims[a] < 2 {
                return Err(GridError::TooFewCells { axis: a, cells: dims[a] });
            }
            if !(h[a] > 0.0) || !h[a].is_finite() {
                return Err(GridError::BadSpacing { axis: a, h: h[a] });
            }
            d[a] = dims[a];
            hh[a] = h[a];
        }
        let strides = [1, d[0], d[0] * d[1]];
        Ok(Grid { dims: d, h: hh, strides, ndim, bc })
    }

    #[inline]
    pub fn ndim(&self) -> usize {
        self.ndim
    }

    #[inline]
    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    #[inline]
    pub fn spacing(&self) -> [f64; 3] {
        self.h
    }

    #[inline]
    pub fn ncells(&self) -> usize {
        self.dims[0] * self.dims[1] * self.dims[2]
    }

    /// Volume of one cell (product of spacings over active axes).
    #[inline]
    pub fn cell_volume(&self) -> f64 {
        let mut v = 1.0;
        for a in 0..self.ndim {
            v *= self.h[a];
        }
        v
    }

    /// Physical domain extent along an axis.
    #[inline]
    pub fn extent(&self, axis: usize) -> f64 {
        self.dims[axis] as f64 * self.h[axis]
    }

    /// Cell-center coordinate of cell `(i,j,k)` along `axis` (origin at h/2).
    #[inline]
    pub fn center(&self, coord: [usize; 3], axis: usize) -> f64 {
        (coord[axis] as f64 + 0.5) * self.h[axis]
    }

    #[inline]
    pub fn idx(&self, coord: [usize; 3]) -> usize {
        coord[0] + self.strides[1] * coord[1] + self.strides[2] * coord[2]
    }

    #[inline]
    pub fn coord(&self, idx: usize) -> [usize; 3] {
        let k = idx / self.strides[2];
        let r = idx % self.strides[2];
        let j = r / self.strides[1];
        let i = r % self.strides[1];
        [i, j, k]
    }

    /// Index of the neighbor one cell along `axis` in direction `dir`
    /// (+1/-1). `None` when the neighbor falls outside a Neumann boundary.
    #[inline]
    pub fn neighbor(&self, idx: usize, axis: usize, dir: i8) -> Option<usize> {
        let n = self.dims[axis];
        let pos = (idx / self.strides[axis]) % n;
        let inside = if dir > 0 { pos + 1 < n } else { pos > 0 };
        if inside {
            Some((idx as isize + dir as isize * self.strides[axis] as isize) as usize)
        } else {
            match self.bc {
                BoundaryCondition::Periodic => {
                    let wrap = (n - 1) * self.strides[axis];
                    Some(if dir > 0 { idx - wrap } else { idx + wrap })
                }
                BoundaryCondition::Neumann => None,
            }
        }
    }

    /// Neighbor value for point stencils: the real neighbor where one
    /// exists, otherwise the ghost value per `rule`.
    #[inline]
    pub fn ghosted(&self, f: &[f64], idx: usize, axis: usize, dir: i8, rule: Ghost) -> f64 {
        match self.neighbor(idx, axis, dir) {
            Some(n) => f[n],
            None => match rule {
                Ghost::Mirror => f[idx],
                Ghost::AntiMirror => -f[idx],
            },
        }
    }

    /// Face mobility between adjacent cells `a`, `b`:
    /// `kappa * [c_a(1-c_a) + c_b(1-c_b)] / 2`.
    #[inline]
    pub fn mobility_face(c_a: f64, c_b: f64, kappa: f64) -> f64 {
        kappa * (c_a * (1.0 - c_a) + c_b * (1.0 - c_b)) / 2.0
    }

    /// Conservative flux-difference operator `out = div(M grad f)` with face
    /// mobilities built from `c_mob` (the frozen mobility field) and `kappa`.
    /// Neumann boundaries carry no flux; periodic boundaries wrap.
    pub fn div_m_grad(&self, c_mob: &[f64], kappa: f64, f: &[f64], out: &mut [f64]) {
        debug_assert_eq!(f.len(), self.ncells());
        debug_assert_eq!(c_mob.len(), self.ncells());
        debug_assert_eq!(out.len(), self.ncells());
        out.fill(0.0);
        for axis in 0..self.ndim {
            let inv_h2 = 1.0 / (self.h[axis] * self.h[axis]);
            for i in 0..self.ncells() {
                let mut acc = 0.0;
                if let Some(p) = self.neighbor(i, axis, 1) {
                    acc += Self::mobility_face(c_mob[i], c_mob[p], kappa) * (f[p] - f[i]);
                }
                if let Some(m) = self.neighbor(i, axis, -1) {
                    acc -= Self::mobility_face(c_mob[m], c_mob[i], kappa) * (f[i] - f[m]);
                }
                out[i] += acc * inv_h2;
            }
        }
    }

    /// Unit-mobility Laplacian with the grid's boundary handling (no-flux
    /// one-sided differences at Neumann boundaries, wrap at periodic ones).
    pub fn laplacian(&self, f: &[f64], out: &mut [f64]) {
        debug_assert_eq!(f.len(), self.ncells());
        out.fill(0.0);
        for axis in 0..self.ndim {
            let inv_h2 = 1.0 / (self.h[axis] * self.h[axis]);
            for i in 0..self.ncells() {
                let mut acc = 0.0;
                if let Some(p) = self.neighbor(i, axis, 1) {
                    acc += f[p] - f[i];
                }
                if let Some(m) = self.neighbor(i, axis, -1) {
                    acc += f[m] - f[i];
                }
                out[i] += acc * inv_h2;
            }
        }
    }

    /// Central difference along one axis: `(f_+ - f_-) / (2 h_axis)`, with
    /// the given ghost rule at Neumann boundaries (wrap at periodic ones).
    /// Mirror ghosts make this the discrete strain operator; the adjoint of
    /// that operator is the same stencil with anti-mirror ghosts, which is
    /// how stress divergences are formed so that the elastic residual is the
    /// exact gradient of the elastic energy.
    pub fn central_diff(&self, f: &[f64], axis: usize, rule: Ghost, out: &mut [f64]) {
        debug_assert_eq!(f.len(), self.ncells());
        let inv_2h = 0.5 / self.h[axis];
        for i in 0..self.ncells() {
            let fp = self.ghosted(f, i, axis, 1, rule);
            let fm = self.ghosted(f, i, axis, -1, rule);
            out[i] = (fp - fm) * inv_2h;
        }
    }

    /// Second difference along one axis with mirror/wrap ghosts:
    /// `(f_+ - 2 f_i + f_-) / h_axis^2`. Symmetric as a matrix on both
    /// boundary types (used by the corner-balancing displacement penalty).
    pub fn axis_second_diff(&self, f: &[f64], axis: usize, out: &mut [f64]) {
        debug_assert_eq!(f.len(), self.ncells());
        let inv_h2 = 1.0 / (self.h[axis] * self.h[axis]);
        for i in 0..self.ncells() {
            let fp = self.ghosted(f, i, axis, 1, Ghost::Mirror);
            let fm = self.ghosted(f, i, axis, -1, Ghost::Mirror);
            out[i] = (fp - 2.0 * f[i] + fm) * inv_h2;
        }
    }

    /// Summation-by-parts defect of the flux operator:
    /// `| -<phi, div(M grad psi)> - sum_faces M_f (D+ phi)_f (D+ psi)_f |`
    /// (plain cell sums, faces counted once). Exact up to roundoff; used by
    /// the verification tests.
    pub fn sbp_defect(&self, c_mob: &[f64], kappa: f64, phi: &[f64], psi: &[f64]) -> f64 {
        let n = self.ncells();
        let mut lpsi = vec![0.0; n];
        self.div_m_grad(c_mob, kappa, psi, &mut lpsi);
        let mut prods: Vec<f64> = (0..n).map(|i| -phi[i] * lpsi[i]).collect();
        let lhs = tree_sum(&prods);
        prods.clear();
        for axis in 0..self.ndim {
            let inv_h2 = 1.0 / (self.h[axis] * self.h[axis]);
            for i in 0..n {
                // Count each face once via its minus-side cell.
                if let Some(p) = self.neighbor(i, axis, 1) {
                    let m = Self::mobility_face(c_mob[i], c_mob[p], kappa);
                    prods.push(m * (phi[p] - phi[i]) * (psi[p] - psi[i]) * inv_h2);
                }
            }
        }
        let rhs = tree_sum(&prods);
        (lhs - rhs).abs()
    }
}

/// Deterministic pairwise-tree sum. The reduction shape depends only on the
/// slice length, never on threading, so repeated runs produce bit-identical
/// results. Also substantially more accurate than a left fold.
pub fn tree_sum(v: &[f64]) -> f64 {
    if v.len() <= 32 {
        let mut s = 0.0;
        for &x in v {
            s += x;
        }
        return s;
    }
    let mid = v.len() / 2;
    tree_sum(&v[..mid]) + tree_sum(&v[mid..])
}

/// Pairwise-tree inner product of two equal-length slices (no allocation).
pub fn tree_dot(u: &[f64], v: &[f64]) -> f64 {
    debug_assert_eq!(u.len(), v.len());
    if u.len() <= 32 {
        let mut s = 0.0;
        for i in 0..u.len() {
            s += u[i] * v[i];
        }
        return s;
    }
    let mid = u.len() / 2;
    tree_dot(&u[..mid], &v[..mid]) + tree_dot(&u[mid..], &v[mid..])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rng_field(n: usize, seed: u64, lo: f64, hi: f64) -> Vec<f64> {
        // Small deterministic LCG; good enough for operator identities.
        let mut s = seed.wrapping_mul(0x9E3779B97F4A7C15).wrapping_add(1);
        (0..n)
            .map(|_| {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                let u = ((s >> 11) as f64) / ((1u64 << 53) as f64);
                lo + (hi - lo) * u
            })
            .collect()
    }

    #[test]
    fn indexing_round_trips() {
        let g = Grid::new(&[5, 4, 3], &[0.25, 0.5, 1.0], BoundaryCondition::Periodic).unwrap();
        assert_eq!(g.ncells(), 60);
        for idx in 0..g.ncells() {
            assert_eq!(g.idx(g.coord(idx)), idx);
        }
        assert_eq!(g.cell_volume(), 0.25 * 0.5 * 1.0);
        assert_eq!(g.extent(0), 1.25);
    }

    #[test]
    fn neighbors_wrap_and_clip() {
        let gp = Grid::new(&[4, 3], &[1.0, 1.0], BoundaryCondition::Periodic).unwrap();
        // +x from the last column wraps to the first.
        let last = gp.idx([3, 1, 0]);
        assert_eq!(gp.neighbor(last, 0, 1), Some(gp.idx([0, 1, 0])));
        let gn = Grid::new(&[4, 3], &[1.0, 1.0], BoundaryCondition::Neumann).unwrap();
        assert_eq!(gn.neighbor(last, 0, 1), None);
        assert_eq!(gn.neighbor(last, 0, -1), Some(gn.idx([2, 1, 0])));
        // Ghost rules at the clipped face.
        let f: Vec<f64> = (0..gn.ncells()).map(|i| i as f64 + 1.0).collect();
        assert_eq!(gn.ghosted(&f, last, 0, 1, Ghost::Mirror), f[last]);
        assert_eq!(gn.ghosted(&f, last, 0, 1, Ghost::AntiMirror), -f[last]);
    }

    /// Constant c = 0.5 and kappa = 0.008 give face mobility 0.002 on every
    /// face: kappa * [0.25 + 0.25]/2.
    #[test]
    fn mobility_face_value() {
        assert!((Grid::mobility_face(0.5, 0.5, 0.008) - 0.002).abs() <= 1e-18);
        // Arithmetic mean of the two one-sided degenerate mobilities.
        let want = 0.008 * (0.1 * 0.9 + 0.2 * 0.8) / 2.0;
        assert!((Grid::mobility_face(0.1, 0.2, 0.008) - want).abs() <= 1e-18);
    }

    #[test]
    fn div_m_grad_conserves_on_both_boundary_types() {
        for bc in [BoundaryCondition::Periodic, BoundaryCondition::Neumann] {
            let g = Grid::new(&[8, 6], &[0.25, 0.5], bc).unwrap();
            let c = rng_field(g.ncells(), 7, 0.1, 0.24);
            let f = rng_field(g.ncells(), 13, -2.0, 2.0);
            let mut out = vec![0.0; g.ncells()];
            g.div_m_grad(&c, 0.008, &f, &mut out);
            let total = tree_sum(&out);
            assert!(total.abs() <= 1e-13, "bc {bc:?}: sum = {total:e}");
        }
    }

    /// Summation-by-parts identity holds to roundoff, and the quadratic form
    /// is symmetric and negative semidefinite with Cauchy-Schwarz, across
    /// 100+ random fields on both boundary types.
    #[test]
    fn sbp_identity_and_semidefiniteness() {
        for bc in [BoundaryCondition::Periodic, BoundaryCondition::Neumann] {
            let g = Grid::new(&[9, 5], &[0.25, 0.4], bc).unwrap();
            let n = g.ncells();
            for trial in 0..60 {
                let c = rng_field(n, 1000 + trial, 0.05, 0.24);
                let phi = rng_field(n, 2000 + trial, -1.0, 1.0);
                let psi = rng_field(n, 3000 + trial, -1.0, 1.0);
                assert!(
                    g.sbp_defect(&c, 0.008, &phi, &psi) <= 1e-13,
                    "bc {bc:?} trial {trial}"
                );
                // a(u,v) = -<u, L v> must be symmetric, PSD, Cauchy-Schwarz.
                let mut lphi = vec![0.0; n];
                let mut lpsi = vec![0.0; n];
                g.div_m_grad(&c, 0.008, &phi, &mut lphi);
                g.div_m_grad(&c, 0.008, &psi, &mut lpsi);
                let a_pp = -tree_dot(&phi, &lphi);
                let a_ss = -tree_dot(&psi, &lpsi);
                let a_ps = -tree_dot(&phi, &lpsi);
                let a_sp = -tree_dot(&psi, &lphi);
                assert!(a_pp >= -1e-12 && a_ss >= -1e-12);
                assert!((a_ps - a_sp).abs() <= 1e-12 * (1.0 + a_ps.abs()));
                assert!(a_ps * a_ps <= a_pp * a_ss * (1.0 + 1e-10) + 1e-12);
            }
        }
    }

    /// On a periodic grid the Laplacian of a single Fourier mode scales by
    /// its exact discrete symbol -4 sin^2(pi k / N) / h^2.
    #[test]
    fn laplacian_matches_discrete_symbol() {
        let n = 16;
        let h = 0.25;
        let g = Grid::new(&[n], &[h], BoundaryCondition::Periodic).unwrap();
        let k = 3.0;
        let f: Vec<f64> = (0..n)
            .map(|i| (2.0 * std::f64::consts::PI * k * i as f64 / n as f64).cos())
            .collect();
        let mut out = vec![0.0; n];
        g.laplacian(&f, &mut out);
        let symbol = -4.0 * (std::f64::consts::PI * k / n as f64).sin().powi(2) / (h * h);
        for i in 0..n {
            assert!((out[i] - symbol * f[i]).abs() <= 1e-12 * symbol.abs());
        }
    }

    /// axis_second_diff is symmetric as a matrix (mirror ghosts at Neumann
    /// boundaries keep it so): <u, D2 v> = <D2 u, v>.
    #[test]
    fn axis_second_diff_is_symmetric() {
        for bc in [BoundaryCondition::Periodic, BoundaryCondition::Neumann] {
            let g = Grid::new(&[7, 4], &[0.3, 0.7], bc).unwrap();
            let n = g.ncells();
            let u = rng_field(n, 41, -1.0, 1.0);
            let v = rng_field(n, 43, -1.0, 1.0);
            for axis in 0..2 {
                let mut du = vec![0.0; n];
                let mut dv = vec![0.0; n];
                g.axis_second_diff(&u, axis, &mut du);
                g.axis_second_diff(&v, axis, &mut dv);
                let a = tree_dot(&u, &dv);
                let b = tree_dot(&du, &v);
                assert!((a - b).abs() <= 1e-12 * (1.0 + a.abs()), "bc {bc:?} axis {axis}");
            }
        }
    }

    #[test]
    fn tree_sum_matches_naive_on_small_and_large() {
        let v = rng_field(1000, 99, -1.0, 1.0);
        let naive: f64 = v.iter().sum();
        assert!((tree_sum(&v) - naive).abs() <= 1e-12);
        assert_eq!(tree_sum(&[]), 0.0);
        assert_eq!(tree_sum(&[2.5]), 2.5);
        let u = rng_field(513, 7, -1.0, 1.0);
        let w = rng_field(513, 8, -1.0, 1.0);
        let naive_dot: f64 = u.iter().zip(&w).map(|(a, b)| a * b).sum();
        assert!((tree_dot(&u, &w) - naive_dot).abs() <= 1e-12);
    }

    #[test]
    fn rejects_degenerate_grids() {
        assert!(Grid::new(&[1], &[0.5], BoundaryCondition::Periodic).is_err());
        assert!(Grid::new(&[4], &[0.0], BoundaryCondition::Periodic).is_err());
        assert!(Grid::new(&[], &[], BoundaryCondition::Periodic).is_err());
        assert!(Grid::new(&[4, 4, 4, 4], &[1.0; 4], BoundaryCondition::Periodic).is_err());
    }
}
