//! Adaptive time stepping around the variational step solver.
//!
//! The controller follows the rate of change of the phase variables: with
//! `X'_d = ||X^n - X^{n-1}||_2 / dt_{n-1}` measured over `(c, eta)`, the
//! next step is `dt = clamp(dt_max / sqrt(1 + zeta X'_d^2), dt_min,
//! dt_max)` — large when the fields are quiet, small through fast
//! transients. A step whose nonlinear solve diverges (or whose accepted
//! state would violate the energy law) is retried with `dt / sqrt(2)` and
//! a doubled `zeta`; the doubling persists for the rest of the run unless
//! `reset_zeta` asks for it back after the next accepted step. Retries may
//! go below `dt_min`; if `dt` collapses below `dt_min / 1024` the run
//! aborts.
//!
//! Every accepted step finishes with a conservative polish: the accepted
//! composition is rewritten as `c+ = c^n + dt * div(M grad) g_c` using the
//! flux form on the accepted pair, so the discrete mean of `c` telescopes
//! to rounding error over arbitrarily many steps instead of drifting by
//! the Newton tolerance. The step is then admitted only if the total
//! energy did not increase (within `1e-9` relative slack) and the mean
//! composition is unchanged to rounding; a violation is treated exactly
//! like a solver divergence.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dvd::{self, SchemeConfig, GAUGE_PIN_CELL};
use crate::energy::{self, EnergyBreakdown};
use crate::grid::{tree_dot, Grid};
use crate::io::{self, ArtifactError, Checkpoint, RunLog};
use crate::jacobian;
use crate::model::{admissible_point, ModelParameters, ADMISSIBILITY_GUARD};
use crate::solver::{
    build_preconditioner, gmres, newton_solve, BlockLayout, NewtonConfig, PrecondSide,
    SchwarzConfig, SchwarzKind, SchwarzPreconditioner, SolveReport,
};
use crate::state::DiscreteState;

/// Time-step controller parameters.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default)]
pub struct AdaptiveConfig {
    pub dt_init: f64,
    pub dt_min: f64,
    pub dt_max: f64,
    /// Controller gain on the squared phase-field rate.
    pub zeta: f64,
    /// Gain multiplier applied after a failed attempt.
    pub zeta_growth_on_fail: f64,
    /// Step multiplier applied after a failed attempt.
    pub dt_shrink_on_fail: f64,
    /// Failed attempts tolerated within one step before aborting.
    pub max_retries: usize,
    /// Restore the configured `zeta` after the next accepted step instead
    /// of keeping divergence-doubled values for the rest of the run.
    pub reset_zeta: bool,
}

impl Default for AdaptiveConfig {
    fn default() -> Self {
        AdaptiveConfig {
            dt_init: 0.01,
            dt_min: 0.01,
            dt_max: 2.0,
            zeta: 100.0,
            zeta_growth_on_fail: 2.0,
            dt_shrink_on_fail: std::f64::consts::FRAC_1_SQRT_2,
            max_retries: 40,
            reset_zeta: false,
        }
    }
}

impl AdaptiveConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.dt_min > 0.0 && self.dt_min <= self.dt_init && self.dt_init <= self.dt_max) {
            return Err(format!(
                "step bounds must satisfy 0 < dt_min <= dt_init <= dt_max, got {} / {} / {}",
                self.dt_min, self.dt_init, self.dt_max
            ));
        }
        if !(self.zeta >= 0.0 && self.zeta.is_finite()) {
            return Err(format!("controller gain must be finite and non-negative, got {}", self.zeta));
        }
        if !(self.dt_shrink_on_fail > 0.0 && self.dt_shrink_on_fail < 1.0) {
            return Err(format!("dt_shrink_on_fail must lie in (0, 1), got {}", self.dt_shrink_on_fail));
        }
        if !(self.zeta_growth_on_fail >= 1.0) {
            return Err(format!("zeta_growth_on_fail must be >= 1, got {}", self.zeta_growth_on_fail));
        }
        if self.max_retries == 0 {
            return Err("max_retries must be at least 1".into());
        }
        Ok(())
    }
}

/// A step aborts once `dt` falls below `dt_min / ABORT_DIVISOR` (clipped
/// final steps get the same relative backoff room below their cap).
pub const ABORT_DIVISOR: f64 = 1024.0;
/// Relative slack allowed on the per-step energy decrease (the nonlinear
/// solve is inexact at the Newton tolerance).
pub const ENERGY_SLACK: f64 = 1e-9;

/// Controller proposal for the next time step.
pub fn propose_dt(cfg: &AdaptiveConfig, zeta: f64, x_prime: f64) -> f64 {
    let dt = cfg.dt_max / (1.0 + zeta * x_prime * x_prime).sqrt();
    dt.clamp(cfg.dt_min, cfg.dt_max)
}

#[derive(Debug, Error)]
pub enum StepError {
    #[error("time step collapsed below {floor:.3e} at t = {time:.6}: {reason}")]
    Abort { time: f64, floor: f64, reason: String },
    #[error("initialization failed: {0}")]
    Init(String),
}

/// What one accepted step did.
#[derive(Debug, Clone, Copy)]
pub struct StepOutcome {
    /// Simulation time after the step.
    pub t_new: f64,
    /// Step size actually accepted.
    pub dt: f64,
    /// Failed attempts before acceptance.
    pub retries: usize,
    pub report: SolveReport,
    /// Energy of the accepted state.
    pub energy: EnergyBreakdown,
    pub mean_c: f64,
}

/// Owns the evolving state and the solver caches.
pub struct Stepper {
    grid: Grid,
    model: ModelParameters,
    scheme: SchemeConfig,
    newton: NewtonConfig,
    schwarz: SchwarzConfig,
    adaptive: AdaptiveConfig,
    state: DiscreteState,
    time: f64,
    /// Live controller gain (doubles on divergence).
    zeta: f64,
    /// Phase-field rate from the last accepted step.
    x_prime: f64,
    /// dt of the most recent attempt, for factorization-cache invalidation.
    last_dt: Option<f64>,
    cache: Option<SchwarzPreconditioner>,
    energy: EnergyBreakdown,
    steps_accepted: u64,
    /// Testing hook: number of upcoming attempts to fail artificially.
    forced_failures: u32,
}

/// Solve the mechanical equilibrium `F_u(c, u) = 0` at fixed composition.
/// The system is affine in `u`, so one preconditioned GMRES solve suffices.
pub fn relax_displacement(
    grid: &Grid,
    model: &ModelParameters,
    scheme: &SchemeConfig,
    schwarz: &SchwarzConfig,
    state: &mut DiscreteState,
) -> Result<(), String> {
    let d = state.u.len();
    if d == 0 || model.elastic_scale == 0.0 {
        return Ok(());
    }
    let n = grid.ncells();
    let a = jacobian::assemble_displacement(grid, model, scheme, d);
    // rhs = -F(0); the gauge rows of F(0) are zero by construction.
    let zero_u = vec![vec![0.0; n]; d];
    let mut f0 = vec![vec![0.0; n]; d];
    energy::elastic_residual(grid, model, scheme.kappa_cb, &state.c, &zero_u, state.cbar0, &mut f0);
    for comp in f0.iter_mut() {
        comp[GAUGE_PIN_CELL] = 0.0;
    }
    let mut rhs = vec![0.0; n * d];
    for i in 0..n {
        for (k, comp) in f0.iter().enumerate() {
            rhs[i * d + k] = -comp[i];
        }
    }
    let layout = BlockLayout::for_grid(grid, d);
    let m = build_preconditioner(&a, &layout, schwarz)
        .map_err(|e| format!("displacement preconditioner: {e}"))?;
    let side = match schwarz.kind {
        SchwarzKind::RightRAS => PrecondSide::Right,
        _ => PrecondSide::Left,
    };
    let mut x = vec![0.0; n * d];
    let out = gmres(
        |v: &[f64], y: &mut [f64]| a.matvec(v, y),
        Some((|r: &[f64], z: &mut [f64]| m.apply(r, z), side)),
        &rhs,
        &mut x,
        schwarz.gmres_restart,
        1e-12,
        1e-12,
        20_000,
    );
    if !out.converged {
        return Err(format!(
            "displacement equilibrium solve missed tolerance (residual {:.3e})",
            out.residual_norm
        ));
    }
    for i in 0..n {
        for (k, comp) in state.u.iter_mut().enumerate() {
            comp[i] = x[i * d + k];
        }
    }
    Ok(())
}

impl Stepper {
    /// Build a stepper around an initial state. When elasticity is active
    /// the displacement field is relaxed to mechanical equilibrium first,
    /// so the run starts from a consistent configuration.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        grid: Grid,
        model: ModelParameters,
        scheme: SchemeConfig,
        newton: NewtonConfig,
        schwarz: SchwarzConfig,
        adaptive: AdaptiveConfig,
        mut state: DiscreteState,
    ) -> Result<Stepper, StepError> {
        relax_displacement(&grid, &model, &scheme, &schwarz, &mut state)
            .map_err(StepError::Init)?;
        let zeta = adaptive.zeta;
        Stepper::build(grid, model, scheme, newton, schwarz, adaptive, state, 0.0, zeta, 0.0, 0)
    }

    /// Rebuild a stepper from a checkpoint. The grid must match the one the
    /// checkpoint was written on; the controller resumes with the stored
    /// clock, gain, and rate, and the factorization cache starts empty —
    /// matching the invalidation done when the checkpoint was written, so
    /// the resumed trajectory is bit-identical to the uninterrupted one.
    #[allow(clippy::too_many_arguments)]
    pub fn from_checkpoint(
        grid: Grid,
        model: ModelParameters,
        scheme: SchemeConfig,
        newton: NewtonConfig,
        schwarz: SchwarzConfig,
        adaptive: AdaptiveConfig,
        ckpt: &Checkpoint,
    ) -> Result<Stepper, StepError> {
        let ckpt_grid = ckpt.grid().map_err(|e| StepError::Init(e.to_string()))?;
        if ckpt_grid != grid {
            return Err(StepError::Init(format!(
                "checkpoint grid ({:?} cells, bc {:?}) does not match the configured grid",
                ckpt.dims, ckpt.bc
            )));
        }
        Stepper::build(
            grid,
            model,
            scheme,
            newton,
            schwarz,
            adaptive,
            ckpt.state(),
            ckpt.t,
            ckpt.zeta,
            ckpt.x_prime,
            ckpt.steps_accepted,
        )
    }

    #[allow(clippy::too_many_arguments)]
    fn build(
        grid: Grid,
        model: ModelParameters,
        scheme: SchemeConfig,
        newton: NewtonConfig,
        schwarz: SchwarzConfig,
        adaptive: AdaptiveConfig,
        state: DiscreteState,
        time: f64,
        zeta: f64,
        x_prime: f64,
        steps_accepted: u64,
    ) -> Result<Stepper, StepError> {
        adaptive.validate().map_err(StepError::Init)?;
        if (model.elastic_scale > 0.0) != !state.u.is_empty() {
            return Err(StepError::Init(
                "elastic scaling and displacement fields must be enabled together".into(),
            ));
        }
        if !state.u.is_empty() && state.u.len() != grid.ndim() {
            return Err(StepError::Init(format!(
                "{} displacement components on a {}-d grid",
                state.u.len(),
                grid.ndim()
            )));
        }
        if state.c.len() != grid.ncells() {
            return Err(StepError::Init(format!(
                "state holds {} cells but the grid has {}",
                state.c.len(),
                grid.ncells()
            )));
        }
        for i in 0..grid.ncells() {
            if !admissible_point(state.c[i], state.eta[i], ADMISSIBILITY_GUARD) {
                return Err(StepError::Init(format!(
                    "initial state is outside the admissible set at cell {i} (c = {}, eta = {})",
                    state.c[i], state.eta[i]
                )));
            }
        }
        let energy = energy::total_energy(&grid, &model, scheme.kappa_cb, &state);
        Ok(Stepper {
            grid,
            model,
            scheme,
            newton,
            schwarz,
            adaptive,
            state,
            time,
            zeta,
            x_prime,
            last_dt: None,
            cache: None,
            energy,
            steps_accepted,
            forced_failures: 0,
        })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn model(&self) -> &ModelParameters {
        &self.model
    }

    pub fn scheme(&self) -> &SchemeConfig {
        &self.scheme
    }

    pub fn state(&self) -> &DiscreteState {
        &self.state
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn energy(&self) -> EnergyBreakdown {
        self.energy
    }

    pub fn zeta(&self) -> f64 {
        self.zeta
    }

    pub fn x_prime(&self) -> f64 {
        self.x_prime
    }

    pub fn steps_accepted(&self) -> u64 {
        self.steps_accepted
    }

    /// The dt the controller would propose right now.
    pub fn proposed_dt(&self) -> f64 {
        propose_dt(&self.adaptive, self.zeta, self.x_prime)
    }

    /// Capture everything a resumed run needs.
    pub fn checkpoint(&self) -> Checkpoint {
        let nd = self.grid.ndim();
        Checkpoint {
            bc: self.grid.bc,
            dims: self.grid.dims()[..nd].to_vec(),
            spacing: self.grid.spacing()[..nd].to_vec(),
            t: self.time,
            zeta: self.zeta,
            x_prime: self.x_prime,
            steps_accepted: self.steps_accepted,
            cbar0: self.state.cbar0,
            c: self.state.c.clone(),
            eta: self.state.eta.clone(),
            u: self.state.u.clone(),
        }
    }

    /// Testing hook: treat the next `n` attempts as diverged before
    /// solving, to exercise the backoff arithmetic deterministically.
    pub fn force_failures(&mut self, n: u32) {
        self.forced_failures = n;
    }

    /// Drop the frozen subdomain factorizations. Called automatically on
    /// dt changes and divergences; callers invoke it when writing a
    /// checkpoint so that a resumed run (which necessarily starts without
    /// the cache) reproduces the uninterrupted trajectory bit for bit.
    pub fn invalidate_cache(&mut self) {
        self.cache = None;
        self.last_dt = None;
    }

    /// Restore controller state from a checkpoint. The energy is
    /// recomputed from the restored fields; the factorization cache starts
    /// empty, matching the invalidation done when the checkpoint was
    /// written.
    pub fn restore(
        &mut self,
        state: DiscreteState,
        time: f64,
        zeta: f64,
        x_prime: f64,
        steps_accepted: u64,
    ) {
        self.energy = energy::total_energy(&self.grid, &self.model, self.scheme.kappa_cb, &state);
        self.state = state;
        self.time = time;
        self.zeta = zeta;
        self.x_prime = x_prime;
        self.steps_accepted = steps_accepted;
        self.invalidate_cache();
    }

    /// Take one accepted step, retrying with smaller dt on failure.
    pub fn step(&mut self) -> Result<StepOutcome, StepError> {
        self.step_capped(None)
    }

    /// Like [`Stepper::step`], with an optional upper bound on dt (used by
    /// the run loop to land exactly on the end time). A cap below `dt_min`
    /// is honored — the final clipped step of a run may be arbitrarily
    /// short — and the abort floor scales down with it so the backoff loop
    /// keeps its usual room.
    pub fn step_capped(&mut self, dt_cap: Option<f64>) -> Result<StepOutcome, StepError> {
        let mut dt = if self.steps_accepted == 0 {
            self.adaptive.dt_init.min(self.adaptive.dt_max)
        } else {
            self.proposed_dt()
        };
        if let Some(cap) = dt_cap {
            dt = dt.min(cap);
        }
        let floor = self.adaptive.dt_min.min(dt) / ABORT_DIVISOR;
        let mut retries = 0usize;
        let mut last_reason = String::new();
        loop {
            if dt < floor || retries > self.adaptive.max_retries {
                return Err(StepError::Abort { time: self.time, floor, reason: last_reason });
            }
            if self.last_dt != Some(dt) {
                self.cache = None;
            }
            self.last_dt = Some(dt);
            match self.attempt(dt) {
                Ok((accepted, report, energy_new)) => {
                    let n = self.grid.ncells();
                    let mut dcs = vec![0.0; n];
                    let mut des = vec![0.0; n];
                    for i in 0..n {
                        dcs[i] = accepted.c[i] - self.state.c[i];
                        des[i] = accepted.eta[i] - self.state.eta[i];
                    }
                    self.x_prime =
                        (tree_dot(&dcs, &dcs) + tree_dot(&des, &des)).sqrt() / dt;
                    if self.adaptive.reset_zeta {
                        self.zeta = self.adaptive.zeta;
                    }
                    let mean_c = accepted.mean_c();
                    self.state = accepted;
                    self.energy = energy_new;
                    self.time += dt;
                    self.steps_accepted += 1;
                    return Ok(StepOutcome {
                        t_new: self.time,
                        dt,
                        retries,
                        report,
                        energy: energy_new,
                        mean_c,
                    });
                }
                Err(reason) => {
                    self.cache = None;
                    self.last_dt = None;
                    self.zeta *= self.adaptive.zeta_growth_on_fail;
                    dt *= self.adaptive.dt_shrink_on_fail;
                    retries += 1;
                    last_reason = reason;
                }
            }
        }
    }

    /// One nonlinear solve at a fixed dt, plus the conservative polish and
    /// the post-step law checks. Failure returns the reason for the retry
    /// loop; it never mutates the accepted state.
    fn attempt(
        &mut self,
        dt: f64,
    ) -> Result<(DiscreteState, SolveReport, EnergyBreakdown), String> {
        if self.forced_failures > 0 {
            self.forced_failures -= 1;
            return Err("forced divergence (testing hook)".into());
        }
        let grid = &self.grid;
        let model = &self.model;
        let scheme = &self.scheme;
        let old = &self.state;
        let nb = old.block_size();
        let layout = BlockLayout::for_grid(grid, nb);

        let mut x = Vec::new();
        old.pack(&mut x);
        let mut res_scratch = old.clone();
        let mut jac_scratch = old.clone();
        let report = newton_solve(
            |x: &[f64], f: &mut Vec<f64>| {
                res_scratch.unpack(x);
                dvd::residual(grid, model, scheme, &res_scratch, old, dt, f);
            },
            |x: &[f64]| {
                jac_scratch.unpack(x);
                jacobian::assemble(grid, model, scheme, &jac_scratch, old, dt)
            },
            |x: &[f64]| {
                x.chunks(nb).all(|ch| admissible_point(ch[0], ch[1], ADMISSIBILITY_GUARD))
            },
            &mut x,
            &layout,
            &self.newton,
            &self.schwarz,
            &mut self.cache,
        );
        if !report.converged {
            let why = report
                .divergence
                .map(|d| d.to_string())
                .unwrap_or_else(|| "nonlinear solve failed".into());
            return Err(format!("{why} (|F| = {:.3e})", report.final_residual_norm));
        }

        let mut accepted = old.clone();
        accepted.unpack(&x);

        // Conservative polish: rewrite c+ through the flux form on the
        // accepted pair so the mean telescopes exactly.
        let n = grid.ncells();
        let mut g_c = vec![0.0; n];
        let mut g_eta = vec![0.0; n];
        dvd::gs_vector(grid, model, scheme, &accepted, old, &mut g_c, &mut g_eta);
        let mut flux = vec![0.0; n];
        grid.div_m_grad(&old.c, model.kappa, &g_c, &mut flux);
        for i in 0..n {
            accepted.c[i] = old.c[i] + dt * flux[i];
        }
        for i in 0..n {
            if !admissible_point(accepted.c[i], accepted.eta[i], ADMISSIBILITY_GUARD) {
                return Err(format!("polished composition left the admissible set at cell {i}"));
            }
        }

        // Post-step law checks; violations are treated like divergence.
        let mass_drift = (accepted.mean_c() - old.mean_c()).abs();
        if mass_drift > 1e-11 * old.mean_c().abs().max(1.0) {
            return Err(format!("mean composition drifted by {mass_drift:.3e}"));
        }
        let energy_new =
            energy::total_energy(grid, model, scheme.kappa_cb, &accepted);
        let e_old = self.energy.total();
        if energy_new.total() > e_old + ENERGY_SLACK * e_old.abs() {
            return Err(format!(
                "energy increased: {:.12e} -> {:.12e}",
                e_old,
                energy_new.total()
            ));
        }
        Ok((accepted, report, energy_new))
    }
}

// ---------------------------------------------------------------------------
// Outer run loop
// ---------------------------------------------------------------------------

/// Where and how often a run writes its artifacts. Cadences count accepted
/// steps; `0` disables that artifact kind (the initial and final snapshots
/// are always written).
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct OutputOptions {
    pub dir: PathBuf,
    pub snapshot_every: u64,
    pub checkpoint_every: u64,
}

impl Default for OutputOptions {
    fn default() -> Self {
        OutputOptions { dir: PathBuf::from("out"), snapshot_every: 50, checkpoint_every: 200 }
    }
}

impl OutputOptions {
    pub fn checkpoint_path(&self) -> PathBuf {
        self.dir.join("checkpoint.ckpt")
    }

    pub fn abort_checkpoint_path(&self) -> PathBuf {
        self.dir.join("abort.ckpt")
    }

    pub fn run_csv_path(&self) -> PathBuf {
        self.dir.join("run.csv")
    }

    pub fn snapshot_path(&self, step: u64) -> PathBuf {
        self.dir.join(format!("snapshot_{step:06}.vtk"))
    }
}

#[derive(Debug, Error)]
pub enum RunError {
    #[error("run aborted: {step} (diagnostic checkpoint at {})", checkpoint.display())]
    Aborted { step: StepError, checkpoint: PathBuf },
    #[error(transparent)]
    Artifact(#[from] ArtifactError),
}

/// What a completed run did (this invocation only; resumed runs count from
/// the resume point).
#[derive(Debug, Clone)]
pub struct RunSummary {
    pub steps: u64,
    pub final_time: f64,
    pub final_energy: f64,
    pub mean_c: f64,
    pub total_retries: u64,
    pub total_newton: u64,
    pub total_gmres: u64,
    /// Smallest / largest accepted dt this invocation (0 when no steps ran).
    pub min_dt: f64,
    pub max_dt: f64,
    pub snapshots_written: u64,
    pub checkpoints_written: u64,
}

/// Drive the stepper until `t_end` (and/or `max_steps` accepted steps),
/// logging one `run.csv` row per accepted step and writing snapshots and
/// checkpoints at their cadences. Writing a checkpoint invalidates the
/// frozen factorizations, so an uninterrupted run and a run resumed from
/// that checkpoint rebuild them at the same step and stay bit-identical.
/// A divergence that exhausts the backoff budget writes a diagnostic
/// checkpoint of the last accepted state before returning the abort.
pub fn run(
    st: &mut Stepper,
    t_end: f64,
    max_steps: Option<u64>,
    out: &OutputOptions,
    resumed: bool,
) -> Result<RunSummary, RunError> {
    std::fs::create_dir_all(&out.dir).map_err(ArtifactError::from)?;
    let mut log = if resumed {
        RunLog::append(&out.run_csv_path())?
    } else {
        RunLog::create(&out.run_csv_path())?
    };
    let mut summary = RunSummary {
        steps: 0,
        final_time: st.time(),
        final_energy: st.energy().total(),
        mean_c: st.state().mean_c(),
        total_retries: 0,
        total_newton: 0,
        total_gmres: 0,
        min_dt: 0.0,
        max_dt: 0.0,
        snapshots_written: 0,
        checkpoints_written: 0,
    };
    let mut last_snapshot_step = None;
    if !resumed {
        io::write_snapshot(st.grid(), st.state(), st.time(), &out.snapshot_path(st.steps_accepted()))?;
        summary.snapshots_written += 1;
        last_snapshot_step = Some(st.steps_accepted());
        let e = st.energy();
        log.write_row(st.time(), 0.0, &e, st.state().mean_c(), 0, 0.0, 0)?;
    }

    let cap = max_steps.unwrap_or(u64::MAX);
    let eps = 1e-12 * t_end.abs().max(1.0);
    while st.time() < t_end - eps && summary.steps < cap {
        let remaining = t_end - st.time();
        let outcome = match st.step_capped(Some(remaining)) {
            Ok(o) => o,
            Err(step_err) => {
                let ckpt_path = out.abort_checkpoint_path();
                if let Err(e) = io::write_checkpoint(&st.checkpoint(), &ckpt_path) {
                    eprintln!("warning: failed to write diagnostic checkpoint: {e}");
                }
                return Err(RunError::Aborted { step: step_err, checkpoint: ckpt_path });
            }
        };
        summary.steps += 1;
        summary.final_time = outcome.t_new;
        summary.final_energy = outcome.energy.total();
        summary.mean_c = outcome.mean_c;
        summary.total_retries += outcome.retries as u64;
        summary.total_newton += outcome.report.newton_iters as u64;
        summary.total_gmres += outcome.report.gmres_iters_total as u64;
        summary.min_dt = if summary.steps == 1 { outcome.dt } else { summary.min_dt.min(outcome.dt) };
        summary.max_dt = summary.max_dt.max(outcome.dt);
        log.write_row(
            outcome.t_new,
            outcome.dt,
            &outcome.energy,
            outcome.mean_c,
            outcome.report.newton_iters,
            outcome.report.gmres_iters_avg,
            outcome.retries,
        )?;
        let steps = st.steps_accepted();
        if out.snapshot_every > 0 && steps % out.snapshot_every == 0 {
            io::write_snapshot(st.grid(), st.state(), st.time(), &out.snapshot_path(steps))?;
            summary.snapshots_written += 1;
            last_snapshot_step = Some(steps);
        }
        if out.checkpoint_every > 0 && steps % out.checkpoint_every == 0 {
            st.invalidate_cache();
            io::write_checkpoint(&st.checkpoint(), &out.checkpoint_path())?;
            summary.checkpoints_written += 1;
        }
    }

    if last_snapshot_step != Some(st.steps_accepted()) {
        io::write_snapshot(st.grid(), st.state(), st.time(), &out.snapshot_path(st.steps_accepted()))?;
        summary.snapshots_written += 1;
    }
    if out.checkpoint_every > 0 {
        st.invalidate_cache();
        io::write_checkpoint(&st.checkpoint(), &out.checkpoint_path())?;
        summary.checkpoints_written += 1;
    }
    Ok(summary)
}
