//! Command-line front end: run scenario configs, analyze snapshot series,
//! and benchmark the linear-solver parameter space.
//!
//! Exit codes: 0 on success, 1 on configuration or I/O errors, 2 when the
//! time integrator aborts (time step collapsed / retry budget exhausted).

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{anyhow, Context};
use clap::{Parser, Subcommand};

use gammaprime::analysis::{
    anisotropy_measure, fit_coarsening, label_particles, psd_histogram,
};
use gammaprime::config::ScenarioConfig;
use gammaprime::io;
use gammaprime::solver::{SchwarzConfig, SchwarzKind, SubdomainSolver};
use gammaprime::stepper::{run, RunError, Stepper};

const EXIT_CONFIG: u8 = 1;
const EXIT_SOLVER_ABORT: u8 = 2;

#[derive(Parser)]
#[command(
    name = "gammaprime",
    version,
    about = "Phase-field simulator for ordered-particle evolution in a binary alloy",
    after_help = "Exit codes: 0 success, 1 configuration error, 2 solver abort."
)]
struct Cli {
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the simulation described by a config file.
    Run {
        /// Scenario config (TOML); see the shipped presets/ directory.
        #[arg(long)]
        config: PathBuf,
        /// Override the output directory from the config.
        #[arg(long)]
        output: Option<PathBuf>,
        /// Resume from a checkpoint written by an earlier run.
        #[arg(long)]
        resume: Option<PathBuf>,
        /// Override the RNG seed from the config (nucleation noise).
        #[arg(long)]
        seed: Option<u64>,
        /// Worker threads for the subdomain solves (default: all cores).
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Particle census, size distribution, and coarsening fit over snapshots.
    Analyze {
        /// Snapshot files: a path or a glob pattern like 'out/run/snapshot_*.vtk'
        /// (quote it so the shell does not expand it first).
        #[arg(long)]
        snapshots: String,
        /// Composition threshold defining particle interiors, in (0, 0.25).
        #[arg(long, default_value_t = 0.22)]
        threshold: f64,
    },
    /// Sweep preconditioner/overlap/subdomain-solver/reuse choices on one
    /// representative time step and print a CSV table of solver costs.
    BenchSolver {
        /// Scenario config (TOML) providing the state and base solver settings.
        #[arg(long)]
        config: PathBuf,
    },
}

fn main() -> ExitCode {
    // Usage errors are configuration errors (exit 1); --help/--version exit 0.
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code =
                if e.use_stderr() { ExitCode::from(EXIT_CONFIG) } else { ExitCode::SUCCESS };
            let _ = e.print();
            return code;
        }
    };
    let result = match cli.cmd {
        Command::Run { config, output, resume, seed, workers } => {
            cmd_run(&config, output, resume, seed, workers)
        }
        Command::Analyze { snapshots, threshold } => cmd_analyze(&snapshots, threshold),
        Command::BenchSolver { config } => cmd_bench(&config),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_CONFIG)
        }
    }
}

fn cmd_run(
    config: &Path,
    output: Option<PathBuf>,
    resume: Option<PathBuf>,
    seed: Option<u64>,
    workers: Option<usize>,
) -> anyhow::Result<ExitCode> {
    let mut cfg = ScenarioConfig::load(config)?;
    if let Some(dir) = output {
        cfg.output.dir = dir;
    }
    if let Some(seed) = seed {
        cfg.seed = seed;
    }
    cfg.validate()?;
    if let Some(n) = workers {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring the worker pool")?;
    }

    let grid = cfg.grid()?;
    let resumed = resume.is_some();
    let mut stepper = match resume {
        Some(ckpt_path) => {
            let ckpt = io::read_checkpoint(&ckpt_path)
                .with_context(|| format!("reading checkpoint {}", ckpt_path.display()))?;
            println!(
                "resuming from {} at t = {:.6} ({} accepted steps)",
                ckpt_path.display(),
                ckpt.t,
                ckpt.steps_accepted
            );
            Stepper::from_checkpoint(
                grid, cfg.model, cfg.scheme, cfg.newton, cfg.schwarz, cfg.adaptive, &ckpt,
            )
            .map_err(|e| anyhow!("{e}"))?
        }
        None => {
            let state = cfg.initial_state(&grid);
            Stepper::new(
                grid, cfg.model, cfg.scheme, cfg.newton, cfg.schwarz, cfg.adaptive, state,
            )
            .map_err(|e| anyhow!("{e}"))?
        }
    };
    println!(
        "running to t = {} in {} (initial energy {:.9e}, mean c {:.12})",
        cfg.t_end,
        cfg.output.dir.display(),
        stepper.energy().total(),
        stepper.state().mean_c()
    );

    match run(&mut stepper, cfg.t_end, cfg.max_steps, &cfg.output, resumed) {
        Ok(s) => {
            println!(
                "done: {} steps to t = {:.6}; energy {:.9e}; mean c {:.12}",
                s.steps, s.final_time, s.final_energy, s.mean_c
            );
            if s.steps > 0 {
                println!(
                    "      dt in [{:.4e}, {:.4e}]; {} retries; {} Newton / {} GMRES iterations",
                    s.min_dt, s.max_dt, s.total_retries, s.total_newton, s.total_gmres
                );
            }
            println!(
                "      wrote {} snapshots, {} checkpoints, {}",
                s.snapshots_written,
                s.checkpoints_written,
                cfg.output.run_csv_path().display()
            );
            Ok(ExitCode::SUCCESS)
        }
        Err(RunError::Aborted { step, checkpoint }) => {
            eprintln!("solver abort: {step}");
            eprintln!("state saved to {} for inspection", checkpoint.display());
            Ok(ExitCode::from(EXIT_SOLVER_ABORT))
        }
        Err(RunError::Artifact(e)) => Err(anyhow!(e).context("writing run artifacts")),
    }
}

fn cmd_analyze(pattern: &str, threshold: f64) -> anyhow::Result<ExitCode> {
    let mut paths: Vec<PathBuf> = glob::glob(pattern)
        .context("parsing snapshot pattern")?
        .collect::<Result<_, _>>()
        .context("listing snapshots")?;
    paths.sort();
    if paths.is_empty() {
        return Err(anyhow!("no snapshots match {pattern}"));
    }

    println!("# particle census: threshold = {threshold}, {} snapshots", paths.len());
    println!("t,file,particles,mean_radius,anisotropy");
    let mut series = Vec::new();
    let mut last_radii = Vec::new();
    let mut last_file = String::new();
    for path in &paths {
        let snap = io::read_snapshot(path)
            .with_context(|| format!("reading {}", path.display()))?;
        let grid = snap.grid()?;
        let stats = label_particles(&grid, &snap.c, threshold).map_err(|e| anyhow!("{e}"))?;
        // The shape measure is centered on the domain midpoint, where the
        // single-particle scenarios place the particle.
        let center: Vec<f64> = (0..grid.ndim())
            .map(|a| 0.5 * grid.dims()[a] as f64 * grid.spacing()[a])
            .collect();
        let shape = anisotropy_measure(&grid, &snap.c, threshold, &center)
            .map(|a| format!("{a:.6}"))
            .unwrap_or_default();
        println!(
            "{:.16e},{},{},{:.16e},{}",
            snap.t,
            path.display(),
            stats.count,
            stats.mean_radius,
            shape
        );
        if stats.count > 0 {
            series.push((snap.t, stats.mean_radius));
            last_radii = stats.radii;
            last_file = path.display().to_string();
        }
    }

    if series.len() >= 3 {
        let window = (series[0].0, series[series.len() - 1].0);
        match fit_coarsening(&series, window) {
            Ok(fit) => {
                println!(
                    "# coarsening law <R>^3 = r0^3 + K (t - t0) over t in [{}, {}]:",
                    window.0, window.1
                );
                println!(
                    "# K = {:.6e}, r0^3 = {:.6e}, r_squared = {:.6}",
                    fit.k, fit.r0_cubed, fit.r_squared
                );
            }
            Err(e) => println!("# coarsening fit unavailable: {e}"),
        }
    } else {
        println!("# coarsening fit unavailable: needs >= 3 snapshots with particles");
    }

    if !last_radii.is_empty() {
        match psd_histogram(&last_radii, 25) {
            Ok(psd) => {
                println!("# size distribution of {last_file} (R / <R>, unit area)");
                println!("bin_center,density");
                for (b, d) in psd.density.iter().enumerate() {
                    println!("{:.4},{:.16e}", psd.bin_center(b), d);
                }
            }
            Err(e) => println!("# size distribution unavailable: {e}"),
        }
    }
    Ok(ExitCode::SUCCESS)
}

/// One benchmark measurement: solve the same step twice in sequence; the
/// second solve shows what factorization reuse saves (or costs) in steady
/// operation.
struct BenchRow {
    study: &'static str,
    schwarz: SchwarzConfig,
}

fn cmd_bench(config: &Path) -> anyhow::Result<ExitCode> {
    let cfg = ScenarioConfig::load(config)?;
    let grid = cfg.grid()?;
    let state = cfg.initial_state(&grid);

    // Advance a few steps with the configured solver so the benchmark
    // measures a representative mid-run step, not the artificial first one.
    let mut warmup = Stepper::new(
        grid.clone(),
        cfg.model.clone(),
        cfg.scheme,
        cfg.newton,
        cfg.schwarz,
        cfg.adaptive,
        state,
    )
    .map_err(|e| anyhow!("{e}"))?;
    const WARMUP_STEPS: usize = 3;
    for _ in 0..WARMUP_STEPS {
        if let Err(e) = warmup.step() {
            return Err(anyhow!("warmup step failed: {e}"));
        }
    }
    let base_state = warmup.state().clone();
    let dt_star = warmup.proposed_dt();
    eprintln!(
        "benchmark state: {} warmup steps, t = {:.4}, step size {:.4e}",
        WARMUP_STEPS,
        warmup.time(),
        dt_star
    );

    let mut rows = Vec::new();
    // Study 1: Schwarz variant x subdomain solver.
    for kind in [SchwarzKind::ClassicalAS, SchwarzKind::LeftRAS, SchwarzKind::RightRAS] {
        for solver in
            [SubdomainSolver::Ilu(0), SubdomainSolver::Ilu(1), SubdomainSolver::Ilu(2), SubdomainSolver::Lu]
        {
            rows.push(BenchRow {
                study: "variant-x-solver",
                schwarz: SchwarzConfig { kind, subdomain_solver: solver, ..cfg.schwarz },
            });
        }
    }
    // Study 2: overlap width.
    for overlap in [0, 1, 2] {
        rows.push(BenchRow {
            study: "overlap",
            schwarz: SchwarzConfig { overlap, ..cfg.schwarz },
        });
    }
    // Study 3: factorization reuse on and off.
    for reuse in [true, false] {
        rows.push(BenchRow { study: "reuse", schwarz: SchwarzConfig { reuse, ..cfg.schwarz } });
    }

    println!(
        "study,kind,nsub,overlap,subdomain_solver,reuse,newton,gmres_avg,wall_ms,newton_2nd,gmres_avg_2nd,wall_ms_2nd"
    );
    for row in rows {
        // A fresh stepper per variant, started from the shared mid-run
        // state, with the controller pinned to propose the same dt.
        let mut adaptive = cfg.adaptive;
        adaptive.dt_init = dt_star.clamp(adaptive.dt_min, adaptive.dt_max);
        let mut st = Stepper::new(
            grid.clone(),
            cfg.model.clone(),
            cfg.scheme,
            cfg.newton,
            row.schwarz,
            adaptive,
            base_state.clone(),
        )
        .map_err(|e| anyhow!("{e}"))?;
        let mut measure = || -> anyhow::Result<(usize, f64, f64)> {
            let begin = Instant::now();
            let outcome = st.step_capped(Some(adaptive.dt_init)).map_err(|e| anyhow!("{e}"))?;
            let ms = begin.elapsed().as_secs_f64() * 1e3;
            Ok((outcome.report.newton_iters, outcome.report.gmres_iters_avg, ms))
        };
        let cold = measure()?;
        let warm = measure()?;
        let solver = match row.schwarz.subdomain_solver {
            SubdomainSolver::Ilu(k) => format!("ILU({k})"),
            SubdomainSolver::Lu => "LU".to_owned(),
        };
        println!(
            "{},{:?},{},{},{},{},{},{:.2},{:.3},{},{:.2},{:.3}",
            row.study,
            row.schwarz.kind,
            row.schwarz.nsub,
            row.schwarz.overlap,
            solver,
            row.schwarz.reuse,
            cold.0,
            cold.1,
            cold.2,
            warm.0,
            warm.1,
            warm.2
        );
    }
    Ok(ExitCode::SUCCESS)
}
