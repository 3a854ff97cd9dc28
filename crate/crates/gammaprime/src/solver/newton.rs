//! Inexact Newton–Krylov–Schwarz driver.
//!
//! Each iteration assembles the current Jacobian, solves
//! `J_m s_m = -F(X_m)` with preconditioned restarted GMRES to the forcing
//! tolerance `max(xi_rel * ||F(X_m)||, xi_abs)`, and globalizes with a
//! backtracking line search (Armijo sufficient decrease on the residual
//! norm, equivalent to first order to the classical condition on
//! `||F||^2`). Candidate points must stay admissible — the entropy terms
//! are only defined on an open set — so the step length shrinks until the
//! trial point is valid. Convergence is
//! `||F|| <= max(eps_rel * ||F(X_0)||, eps_abs)` in the l2 norm.
//!
//! With `SchwarzConfig::reuse` the subdomain factorizations are frozen:
//! the preconditioner is built once and kept in a caller-owned cache
//! across Newton iterations *and* time steps. The caller invalidates the
//! cache when the time step changes or a solve diverges; additionally, if
//! GMRES fails under a stale cached preconditioner, the preconditioner is
//! rebuilt from the current Jacobian once and the iteration retried before
//! declaring divergence.

use serde::{Deserialize, Serialize};

use crate::grid::tree_dot;
use crate::solver::csr::CsrMatrix;
use crate::solver::gmres::{gmres, PrecondSide};
use crate::solver::schwarz::{
    build_preconditioner, BlockLayout, SchwarzConfig, SchwarzKind, SchwarzPreconditioner,
};

/// Nonlinear-solver tolerances and line-search knobs.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default)]
pub struct NewtonConfig {
    /// Relative nonlinear stopping tolerance on `||F||`.
    pub eps_rel: f64,
    /// Absolute nonlinear stopping tolerance.
    pub eps_abs: f64,
    /// Relative forcing term for the inner linear solves.
    pub xi_rel: f64,
    /// Absolute forcing term for the inner linear solves.
    pub xi_abs: f64,
    pub max_newton: usize,
    /// Cap on GMRES iterations per linear solve.
    pub gmres_max_iters: usize,
    /// Line-search backtracking factor.
    pub ls_contraction: f64,
    /// Armijo sufficient-decrease constant.
    pub ls_sufficient: f64,
    /// Smallest admissible step length before declaring a stall.
    pub lambda_min: f64,
}

impl Default for NewtonConfig {
    fn default() -> Self {
        NewtonConfig {
            eps_rel: 1e-8,
            eps_abs: 1e-6,
            xi_rel: 1e-10,
            xi_abs: 1e-9,
            max_newton: 30,
            gmres_max_iters: 2000,
            ls_contraction: 0.5,
            ls_sufficient: 1e-4,
            lambda_min: 1e-4,
        }
    }
}

/// Why a solve gave up.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Divergence {
    /// No admissible step length achieved sufficient decrease.
    LineSearchStalled,
    MaxNewtonIterations,
    /// GMRES missed its forcing tolerance (even after a preconditioner
    /// rebuild when one was available).
    LinearSolveFailed,
    /// Subdomain factorization failed outright.
    FactorizationFailed,
    /// The residual produced NaN or infinity at the initial point.
    ResidualNotFinite,
}

impl std::fmt::Display for Divergence {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Divergence::LineSearchStalled => "line search stalled",
            Divergence::MaxNewtonIterations => "maximum Newton iterations reached",
            Divergence::LinearSolveFailed => "linear solve missed its tolerance",
            Divergence::FactorizationFailed => "subdomain factorization failed",
            Divergence::ResidualNotFinite => "residual is not finite",
        };
        f.write_str(s)
    }
}

/// What one nonlinear solve did.
#[derive(Debug, Clone, Copy)]
pub struct SolveReport {
    pub newton_iters: usize,
    pub gmres_iters_total: usize,
    /// GMRES iterations per Newton iteration.
    pub gmres_iters_avg: f64,
    pub final_residual_norm: f64,
    pub converged: bool,
    pub divergence: Option<Divergence>,
}

impl SolveReport {
    fn finish(
        newton_iters: usize,
        gmres_total: usize,
        fnorm: f64,
        divergence: Option<Divergence>,
    ) -> Self {
        SolveReport {
            newton_iters,
            gmres_iters_total: gmres_total,
            gmres_iters_avg: if newton_iters > 0 { gmres_total as f64 / newton_iters as f64 } else { 0.0 },
            final_residual_norm: fnorm,
            converged: divergence.is_none(),
            divergence,
        }
    }
}

fn norm(v: &[f64]) -> f64 {
    tree_dot(v, v).sqrt()
}

/// Solve `F(x) = 0` starting from the incoming `x` (the previous step's
/// solution, in time-stepping use). `residual` writes `F(x)`; `jacobian`
/// assembles the current Jacobian; `admissible` says whether a candidate
/// point may be evaluated at all. `cache` carries frozen subdomain
/// factorizations across calls when `schwarz.reuse` is set; pass a `None`
/// cache to force a rebuild.
#[allow(clippy::too_many_arguments)]
pub fn newton_solve<R, J, Adm>(
    mut residual: R,
    mut jacobian: J,
    admissible: Adm,
    x: &mut [f64],
    layout: &BlockLayout,
    newton: &NewtonConfig,
    schwarz: &SchwarzConfig,
    cache: &mut Option<SchwarzPreconditioner>,
) -> SolveReport
where
    R: FnMut(&[f64], &mut Vec<f64>),
    J: FnMut(&[f64]) -> CsrMatrix,
    Adm: Fn(&[f64]) -> bool,
{
    let n = x.len();
    let mut fx = vec![0.0f64; n];
    let mut ft = vec![0.0f64; n];
    let mut xt = vec![0.0f64; n];
    let mut neg_f = vec![0.0f64; n];
    let mut step = vec![0.0f64; n];

    residual(x, &mut fx);
    let mut fnorm = norm(&fx);
    if !fnorm.is_finite() {
        return SolveReport::finish(0, 0, fnorm, Some(Divergence::ResidualNotFinite));
    }
    let stop = (newton.eps_rel * fnorm).max(newton.eps_abs);
    // The absolute forcing floor must stay below the nonlinear target,
    // otherwise GMRES can accept a zero correction while ||F|| > stop and
    // the line search stalls on it.
    let xi_abs = newton.xi_abs.min(0.5 * stop);

    let mut newton_iters = 0usize;
    let mut gmres_total = 0usize;

    loop {
        if fnorm <= stop {
            return SolveReport::finish(newton_iters, gmres_total, fnorm, None);
        }
        if newton_iters >= newton.max_newton {
            return SolveReport::finish(
                newton_iters,
                gmres_total,
                fnorm,
                Some(Divergence::MaxNewtonIterations),
            );
        }

        let jac = jacobian(x);
        // Fresh preconditioner unless reuse keeps a frozen one around.
        let mut used_cached = false;
        let mut local: Option<SchwarzPreconditioner> = None;
        if schwarz.reuse {
            if cache.is_none() {
                match build_preconditioner(&jac, layout, schwarz) {
                    Ok(m) => *cache = Some(m),
                    Err(_) => {
                        return SolveReport::finish(
                            newton_iters,
                            gmres_total,
                            fnorm,
                            Some(Divergence::FactorizationFailed),
                        );
                    }
                }
            } else {
                used_cached = true;
            }
        } else {
            match build_preconditioner(&jac, layout, schwarz) {
                Ok(m) => local = Some(m),
                Err(_) => {
                    return SolveReport::finish(
                        newton_iters,
                        gmres_total,
                        fnorm,
                        Some(Divergence::FactorizationFailed),
                    );
                }
            }
        }

        let side = match schwarz.kind {
            SchwarzKind::RightRAS => PrecondSide::Right,
            _ => PrecondSide::Left,
        };
        for i in 0..n {
            neg_f[i] = -fx[i];
        }

        let mut attempt = 0usize;
        let out = loop {
            let m = local.as_ref().or(cache.as_ref()).expect("preconditioner present");
            step.fill(0.0);
            let out = gmres(
                |v: &[f64], y: &mut [f64]| jac.matvec(v, y),
                Some((|r: &[f64], z: &mut [f64]| m.apply(r, z), side)),
                &neg_f,
                &mut step,
                schwarz.gmres_restart,
                newton.xi_rel,
                xi_abs,
                newton.gmres_max_iters,
            );
            gmres_total += out.iters;
            if out.converged || !used_cached || attempt > 0 {
                break out;
            }
            // A stale frozen factorization let GMRES down: rebuild from the
            // current Jacobian and retry once before giving up.
            attempt += 1;
            match build_preconditioner(&jac, layout, schwarz) {
                Ok(mnew) => *cache = Some(mnew),
                Err(_) => {
                    return SolveReport::finish(
                        newton_iters,
                        gmres_total,
                        fnorm,
                        Some(Divergence::FactorizationFailed),
                    );
                }
            }
        };
        if !out.converged {
            return SolveReport::finish(
                newton_iters,
                gmres_total,
                fnorm,
                Some(Divergence::LinearSolveFailed),
            );
        }

        // Backtracking line search on ||F||.
        let mut lambda = 1.0f64;
        let accepted = loop {
            for i in 0..n {
                xt[i] = x[i] + lambda * step[i];
            }
            if admissible(&xt) {
                residual(&xt, &mut ft);
                let ftn = norm(&ft);
                if ftn.is_finite() && ftn <= (1.0 - newton.ls_sufficient * lambda) * fnorm {
                    break Some(ftn);
                }
            }
            lambda *= newton.ls_contraction;
            if lambda < newton.lambda_min {
                break None;
            }
        };
        let Some(ftn) = accepted else {
            return SolveReport::finish(
                newton_iters,
                gmres_total,
                fnorm,
                Some(Divergence::LineSearchStalled),
            );
        };
        x.copy_from_slice(&xt);
        fx.copy_from_slice(&ft);
        fnorm = ftn;
        newton_iters += 1;
    }
}
