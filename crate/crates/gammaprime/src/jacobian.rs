//! Analytic Jacobian of the step residual, assembled as a point CSR matrix
//! over the interleaved unknown layout `[c, eta, u_0..u_{d-1}]` per cell.
//!
//! The Jacobian is built by composing cell-space stencil matrices that
//! mirror the matrix-free operators in [`crate::grid`] exactly (tested
//! against them on random fields):
//!
//! ```text
//! J_cc   = I/dt - L (diag(d g_bulk_c / d c) + d/2 eps0^2 L_e (C11+(d-1)C12) I - gamma_c/2 Lap)
//! J_ce   = -L diag(d g_bulk_c / d eta)
//! J_cuK  = -(coef/2) L Dhat_K
//! J_ec   = diag(d g_bulk_eta / d c)
//! J_ee   = I/dt + diag(d g_bulk_eta / d eta) - (3 gamma_eta / 2) Lap
//! J_uIc  = -coef Dadj_I
//! J_uIuI = -L_e C11 Dadj_I Dhat_I - L_e C44 sum_{J!=I} Dadj_J Dhat_J + pen
//! J_uIuK = -L_e C12 Dadj_I Dhat_K - L_e C44 Dadj_K Dhat_I   (K != I)
//! ```
//!
//! with `L` the frozen-mobility flux operator, `Lap` the Laplacian, `Dhat`
//! the mirror-ghost central difference, `Dadj` its anti-mirror adjoint,
//! `pen = kappa_cb sum_J h_J^2 Dsq_J Dsq_J`, and
//! `coef = -eps0 L_e (C11 + (d-1) C12)`. The gauge rows (displacements of
//! the pin cell) are replaced by identity rows, matching the residual.

use rayon::prelude::*;

use crate::dvd::{bulk_pair_derivs, SchemeConfig, GAUGE_PIN_CELL};
use crate::grid::{Ghost, Grid};
use crate::model::ModelParameters;
use crate::solver::csr::CsrMatrix;
use crate::state::DiscreteState;

/// Laplacian as a cell-space matrix (mirror/no-flux boundary handling,
/// identical to [`Grid::laplacian`]).
fn lap_matrix(grid: &Grid) -> CsrMatrix {
    let n = grid.ncells();
    let mut t = Vec::with_capacity(n * (1 + 2 * grid.ndim()));
    for axis in 0..grid.ndim() {
        let w = 1.0 / (grid.spacing()[axis] * grid.spacing()[axis]);
        for i in 0..n {
            for dir in [1i8, -1] {
                if let Some(j) = grid.neighbor(i, axis, dir) {
                    t.push((i, j, w));
                    t.push((i, i, -w));
                }
            }
        }
    }
    CsrMatrix::from_triplets(n, n, &mut t)
}

/// Frozen-mobility flux operator `div(M grad .)` as a matrix, identical to
/// [`Grid::div_m_grad`] with mobilities from `c_mob`.
fn div_m_grad_matrix(grid: &Grid, c_mob: &[f64], kappa: f64) -> CsrMatrix {
    let n = grid.ncells();
    let mut t = Vec::with_capacity(n * (1 + 2 * grid.ndim()));
    for axis in 0..grid.ndim() {
        let w = 1.0 / (grid.spacing()[axis] * grid.spacing()[axis]);
        for i in 0..n {
            for dir in [1i8, -1] {
                if let Some(j) = grid.neighbor(i, axis, dir) {
                    let m = Grid::mobility_face(c_mob[i], c_mob[j], kappa) * w;
                    t.push((i, j, m));
                    t.push((i, i, -m));
                }
            }
        }
    }
    CsrMatrix::from_triplets(n, n, &mut t)
}

/// Central difference along `axis` with the given ghost rule, identical to
/// [`Grid::central_diff`].
fn central_diff_matrix(grid: &Grid, axis: usize, rule: Ghost) -> CsrMatrix {
    let n = grid.ncells();
    let w = 0.5 / grid.spacing()[axis];
    let mut t = Vec::with_capacity(2 * n);
    for i in 0..n {
        for dir in [1i8, -1] {
            let sign = dir as f64;
            match grid.neighbor(i, axis, dir) {
                Some(j) => t.push((i, j, sign * w)),
                None => match rule {
                    Ghost::Mirror => t.push((i, i, sign * w)),
                    Ghost::AntiMirror => t.push((i, i, -sign * w)),
                },
            }
        }
    }
    CsrMatrix::from_triplets(n, n, &mut t)
}

/// Axis second difference with mirror ghosts, identical to
/// [`Grid::axis_second_diff`].
fn axis_second_matrix(grid: &Grid, axis: usize) -> CsrMatrix {
    let n = grid.ncells();
    let w = 1.0 / (grid.spacing()[axis] * grid.spacing()[axis]);
    let mut t = Vec::with_capacity(3 * n);
    for i in 0..n {
        t.push((i, i, -2.0 * w));
        for dir in [1i8, -1] {
            match grid.neighbor(i, axis, dir) {
                Some(j) => t.push((i, j, w)),
                None => t.push((i, i, w)), // mirror ghost folds onto the diagonal
            }
        }
    }
    CsrMatrix::from_triplets(n, n, &mut t)
}

/// Scatter a cell-space matrix into the point-block triplet list at block
/// position (`block_row`, `block_col`).
fn scatter(
    triplets: &mut Vec<(usize, usize, f64)>,
    m: &CsrMatrix,
    nb: usize,
    block_row: usize,
    block_col: usize,
) {
    for i in 0..m.nrows() {
        let (cols, vals) = m.row(i);
        for (j, v) in cols.iter().zip(vals) {
            if *v != 0.0 {
                triplets.push((i * nb + block_row, j * nb + block_col, *v));
            }
        }
    }
}

/// Cell-space coupling blocks of the displacement residual: `blocks[i][k]`
/// maps the displacement component `u_K` to residual component `I`, with
/// the checkerboard penalty folded into the diagonal blocks. These are the
/// `u`-`u` blocks of the full Jacobian, and — because the displacement
/// residual is affine in `u` — also the exact operator of the standalone
/// mechanical equilibrium system.
fn displacement_blocks(
    grid: &Grid,
    model: &ModelParameters,
    scheme: &SchemeConfig,
    d: usize,
) -> Vec<Vec<CsrMatrix>> {
    let scale = model.elastic_scale;
    let el = &model.elastic;
    let h = grid.spacing();
    let dhat: Vec<CsrMatrix> =
        (0..d).map(|k| central_diff_matrix(grid, k, Ghost::Mirror)).collect();
    let dadj: Vec<CsrMatrix> =
        (0..d).map(|k| central_diff_matrix(grid, k, Ghost::AntiMirror)).collect();
    // Penalty block shared by every displacement component.
    let pen = if scheme.kappa_cb > 0.0 {
        let mut p: Option<CsrMatrix> = None;
        for (j, hj) in h.iter().enumerate().take(d) {
            let dsq = axis_second_matrix(grid, j);
            let blk = dsq.matmul(&dsq);
            let w = scheme.kappa_cb * hj * hj;
            p = Some(match p {
                None => {
                    let mut b = blk;
                    b.scale(w);
                    b
                }
                Some(acc) => acc.add_scaled(1.0, &blk, w),
            });
        }
        p
    } else {
        None
    };
    (0..d)
        .map(|i| {
            (0..d)
                .map(|k| {
                    let mut blk = if i == k {
                        let mut m = dadj[i].matmul(&dhat[i]);
                        m.scale(-scale * el.c11);
                        for j in 0..d {
                            if j != i {
                                m = m.add_scaled(
                                    1.0,
                                    &dadj[j].matmul(&dhat[j]),
                                    -scale * el.c44,
                                );
                            }
                        }
                        m
                    } else {
                        let mut m = dadj[i].matmul(&dhat[k]);
                        m.scale(-scale * el.c12);
                        m.add_scaled(1.0, &dadj[k].matmul(&dhat[i]), -scale * el.c44)
                    };
                    if i == k {
                        if let Some(p) = &pen {
                            blk = blk.add_scaled(1.0, p, 1.0);
                        }
                    }
                    blk
                })
                .collect()
        })
        .collect()
}

/// Assemble the operator of the standalone mechanical equilibrium system:
/// the displacement residual at fixed composition is affine in `u`, so
/// `residual(u) = A u + residual(0)` with this matrix as `A`. Unknowns are
/// cell-blocked (`d` displacement rows per cell) and the gauge rows are
/// unit rows.
pub fn assemble_displacement(
    grid: &Grid,
    model: &ModelParameters,
    scheme: &SchemeConfig,
    d: usize,
) -> CsrMatrix {
    assert!(d > 0, "displacement system needs at least one component");
    let n = grid.ncells();
    let blocks = displacement_blocks(grid, model, scheme, d);
    let mut triplets = Vec::new();
    for i in 0..d {
        for k in 0..d {
            scatter(&mut triplets, &blocks[i][k], d, i, k);
        }
    }
    let mut a = CsrMatrix::from_triplets(n * d, n * d, &mut triplets);
    for k in 0..d {
        a.set_unit_row(GAUGE_PIN_CELL * d + k);
    }
    a
}

/// Assemble the analytic Jacobian of [`crate::dvd::residual`] with respect
/// to the trial state `a`, at the linearization point `(a, b, dt)`.
pub fn assemble(
    grid: &Grid,
    model: &ModelParameters,
    scheme: &SchemeConfig,
    a: &DiscreteState,
    b: &DiscreteState,
    dt: f64,
) -> CsrMatrix {
    let n = grid.ncells();
    let d = a.u.len();
    let nb = a.block_size();
    let inv_dt = 1.0 / dt;

    // Local bulk derivatives per cell.
    let mut dgc_dc = vec![0.0; n];
    let mut dgc_de = vec![0.0; n];
    let mut dge_dc = vec![0.0; n];
    let mut dge_de = vec![0.0; n];
    {
        let mode = scheme.quotient_mode;
        let s_order = scheme.s_order;
        let rows: Vec<[f64; 4]> = (0..n)
            .into_par_iter()
            .map(|i| bulk_pair_derivs(model, mode, s_order, a.c[i], a.eta[i], b.c[i], b.eta[i]))
            .collect();
        for (i, r) in rows.iter().enumerate() {
            dgc_dc[i] = r[0];
            dgc_de[i] = r[1];
            dge_dc[i] = r[2];
            dge_de[i] = r[3];
        }
    }

    let coef = -model.eps0
        * model.elastic_scale
        * (model.elastic.c11 + (d.max(1) as f64 - 1.0) * model.elastic.c12);
    if d > 0 {
        // g3 contributes a local c-derivative through the eigenstrain part
        // of the midpoint trace: d/dca [coef * (-d eps0 c_mid)] = -coef d eps0 / 2.
        let g3_diag = -coef * d as f64 * model.eps0 * 0.5;
        for v in dgc_dc.iter_mut() {
            *v += g3_diag;
        }
    }

    let lap = lap_matrix(grid);
    let l_op = div_m_grad_matrix(grid, &b.c, model.kappa);

    // G_c/G_eta cell-space derivative blocks.
    let gcc = CsrMatrix::diagonal(&dgc_dc).add_scaled(1.0, &lap, -0.5 * model.gamma_c);
    let jcc = CsrMatrix::identity(n).add_scaled(inv_dt, &l_op.matmul(&gcc), -1.0);
    let jce = {
        let mut m = l_op.matmul(&CsrMatrix::diagonal(&dgc_de));
        m.scale(-1.0);
        m
    };
    let jec = CsrMatrix::diagonal(&dge_dc);
    let jee = {
        let de: Vec<f64> = dge_de.iter().map(|v| v + inv_dt).collect();
        CsrMatrix::diagonal(&de).add_scaled(1.0, &lap, -1.5 * model.gamma_eta)
    };

    let mut triplets: Vec<(usize, usize, f64)> =
        Vec::with_capacity(jcc.nnz() + jce.nnz() + jec.nnz() + jee.nnz());
    scatter(&mut triplets, &jcc, nb, 0, 0);
    scatter(&mut triplets, &jce, nb, 0, 1);
    scatter(&mut triplets, &jec, nb, 1, 0);
    scatter(&mut triplets, &jee, nb, 1, 1);

    if d > 0 {
        // Same row equilibration as the residual's displacement rows.
        let s_u = crate::dvd::elastic_row_scale(grid, model);
        let dhat: Vec<CsrMatrix> =
            (0..d).map(|k| central_diff_matrix(grid, k, Ghost::Mirror)).collect();
        for (k, dh) in dhat.iter().enumerate() {
            // J_c,uK = -(coef/2) L Dhat_K
            let mut jcu = l_op.matmul(dh);
            jcu.scale(-0.5 * coef);
            scatter(&mut triplets, &jcu, nb, 0, 2 + k);
            // J_uK,c = -s_u coef Dadj_K
            let mut juc = central_diff_matrix(grid, k, Ghost::AntiMirror);
            juc.scale(-coef * s_u);
            scatter(&mut triplets, &juc, nb, 2 + k, 0);
        }
        let mut ublocks = displacement_blocks(grid, model, scheme, d);
        for row in ublocks.iter_mut() {
            for blk in row.iter_mut() {
                blk.scale(s_u);
            }
        }
        for i in 0..d {
            for k in 0..d {
                scatter(&mut triplets, &ublocks[i][k], nb, 2 + i, 2 + k);
            }
        }
    }

    let mut j = CsrMatrix::from_triplets(n * nb, n * nb, &mut triplets);
    // Gauge rows: identity on the pinned displacement unknowns.
    for k in 0..d {
        j.set_unit_row(GAUGE_PIN_CELL * nb + 2 + k);
    }
    j
}
